// DFRW weight container:
//   "DFRW" | u32 version (=1) | u32 manifest_len | manifest JSON (UTF-8)
//   then per tensor: u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data
// All integers and floats little-endian; tensor data row-major.

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "dfr/errors.hpp"
#include "dfr/vgg.hpp"

namespace dfr {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'R', 'W'};
constexpr std::uint32_t kVersion = 1;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  std::span<const std::uint8_t> take(std::size_t n, std::string_view what) {
    if (n > remaining()) {
      throw WeightsError(fmt::format(
          "truncated file: needed {} bytes for {} at byte offset {}, {} available", n,
          what, offset_, remaining()));
    }
    auto out = bytes_.subspan(offset_, n);
    offset_ += n;
    return out;
  }

  std::uint32_t u32(std::string_view what) {
    auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bytes(std::vector<std::uint8_t>& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                std::span<const std::uint32_t> dims, std::span<const float> data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  put_bytes(out, name);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u32(out, d);
  for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

std::array<float, 3> read_triplet(const nlohmann::json& manifest, const char* key) {
  const auto& pre = manifest.at("preprocess");
  const auto& arr = pre.at(key);
  if (!arr.is_array() || arr.size() != 3) {
    throw WeightsError(fmt::format("manifest preprocess.{} must hold 3 numbers", key));
  }
  return {arr[0].get<float>(), arr[1].get<float>(), arr[2].get<float>()};
}

}  // namespace

VggWeights parse_weights(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw WeightsError("bad magic");
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) {
    throw WeightsError(fmt::format("unsupported DFRW version {}", version));
  }
  const std::uint32_t manifest_len = in.u32("manifest length");
  auto manifest_bytes = in.take(manifest_len, "manifest");

  nlohmann::json manifest;
  std::array<float, 3> mean{};
  std::array<float, 3> stddev{};
  try {
    manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    mean = read_triplet(manifest, "mean");
    stddev = read_triplet(manifest, "std");
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(fmt::format("bad manifest: {}", e.what()));
  }

  std::map<std::string, RawTensor> tensors;
  while (in.remaining() > 0) {
    const std::size_t start = in.offset();
    const std::uint32_t name_len = in.u32("tensor name length");
    auto name_bytes = in.take(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint32_t ndim = in.u32(name + " ndim");
    if (ndim == 0 || ndim > 4) {
      throw WeightsError(fmt::format("{}: unsupported ndim {} at byte offset {}", name,
                                     ndim, start));
    }
    RawTensor t;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(in.u32(name + " dims"));
      count *= t.dims.back();
      if (count > bytes.size()) {
        throw WeightsError(fmt::format("{}: declared size exceeds the file at byte offset {}",
                                       name, start));
      }
    }
    auto raw = in.take(count * 4, name + " data");
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
      t.data[i] = std::bit_cast<float>(bits);
    }
    if (!tensors.emplace(name, std::move(t)).second) {
      throw WeightsError(fmt::format("duplicate tensor {}", name));
    }
  }

  std::map<std::string, ConvParams> layers;
  for (const auto& spec : kVggLayers) {
    const std::string name(spec.name);
    auto kernel = tensors.find(name + ".weight");
    if (kernel == tensors.end()) {
      throw WeightsError(fmt::format("missing layer {} (tensor {}.weight)", name, name));
    }
    auto bias = tensors.find(name + ".bias");
    if (bias == tensors.end()) {
      throw WeightsError(fmt::format("missing layer {} (tensor {}.bias)", name, name));
    }
    const auto& kd = kernel->second.dims;
    const std::vector<std::uint32_t> expected{static_cast<std::uint32_t>(spec.out_channels),
                                              static_cast<std::uint32_t>(spec.in_channels),
                                              3, 3};
    if (kd != expected) {
      throw WeightsError(fmt::format("{}.weight: shape ({}) does not match canonical ({})",
                                     name, fmt::join(kd, ", "),
                                     fmt::join(expected, ", ")));
    }
    if (bias->second.dims.size() != 1 ||
        bias->second.dims[0] != static_cast<std::uint32_t>(spec.out_channels)) {
      throw WeightsError(fmt::format("{}.bias: shape ({}) does not match canonical ({})",
                                     name, fmt::join(bias->second.dims, ", "),
                                     spec.out_channels));
    }
    layers.emplace(name, ConvParams{Tensor4(Shape4{spec.out_channels, spec.in_channels, 3, 3},
                                            std::move(kernel->second.data)),
                                    std::move(bias->second.data)});
    tensors.erase(kernel);
    tensors.erase(bias);
  }
  if (!tensors.empty()) {
    throw WeightsError(fmt::format("unexpected tensor {}", tensors.begin()->first));
  }
  return VggWeights(std::move(layers), mean, stddev,
                    manifest.value("source_checksum", std::string{}));
}

VggWeights load_weights(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError(fmt::format("cannot open weight file {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_weights(bytes);
  } catch (const WeightsError& e) {
    throw WeightsError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::uint8_t> serialize_weights(const VggWeights& weights) {
  nlohmann::json manifest;
  std::vector<std::string> order;
  for (const auto& spec : kVggLayers) order.emplace_back(spec.name);
  manifest["layer_order"] = order;
  manifest["preprocess"]["mean"] = weights.mean();
  manifest["preprocess"]["std"] = weights.stddev();
  manifest["source_checksum"] = weights.source_checksum();
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  put_bytes(out, std::string_view(kMagic, 4));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  put_bytes(out, text);
  for (std::size_t i = 0; i < kVggLayers.size(); ++i) {
    const std::string name(kVggLayers[i].name);
    const ConvParams& p = weights.layer(i);
    const auto& s = p.kernel.shape();
    const std::uint32_t kdims[] = {static_cast<std::uint32_t>(s.n),
                                   static_cast<std::uint32_t>(s.c),
                                   static_cast<std::uint32_t>(s.h),
                                   static_cast<std::uint32_t>(s.w)};
    put_tensor(out, name + ".weight", kdims, p.kernel.values());
    const std::uint32_t bdims[] = {static_cast<std::uint32_t>(p.bias.size())};
    put_tensor(out, name + ".bias", bdims, p.bias);
  }
  return out;
}

void save_weights(const VggWeights& weights, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(weights);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(fmt::format("cannot write weight file {}", path.string()));
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError(fmt::format("failed writing weight file {}", path.string()));
}

}  // namespace dfr
