#include "dfr/vgg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

#include "dfr/errors.hpp"

namespace dfr {

std::optional<std::size_t> vgg_layer_index(std::string_view name) {
  for (std::size_t i = 0; i < kVggLayers.size(); ++i) {
    if (kVggLayers[i].name == name) return i;
  }
  return std::nullopt;
}

VggWeights::VggWeights(std::map<std::string, ConvParams> layers,
                       std::array<float, 3> mean, std::array<float, 3> stddev,
                       std::string source_checksum)
    : mean_(mean),
      stddev_(stddev),
      source_checksum_(std::move(source_checksum)) {
  for (const auto& [name, params] : layers) {
    if (!vgg_layer_index(name)) {
      throw WeightsError(fmt::format("unexpected layer {}", name));
    }
  }
  for (std::size_t i = 0; i < kVggLayers.size(); ++i) {
    const auto& spec = kVggLayers[i];
    auto it = layers.find(std::string(spec.name));
    if (it == layers.end()) {
      throw WeightsError(fmt::format("missing layer {}", spec.name));
    }
    const Shape4 expected{spec.out_channels, spec.in_channels, 3, 3};
    if (it->second.kernel.shape() != expected) {
      throw WeightsError(fmt::format("{}: kernel shape {} does not match canonical {}",
                                     spec.name, it->second.kernel.shape().str(),
                                     expected.str()));
    }
    if (it->second.bias.size() != static_cast<std::size_t>(spec.out_channels)) {
      throw WeightsError(fmt::format("{}: bias length {} does not match canonical {}",
                                     spec.name, it->second.bias.size(),
                                     spec.out_channels));
    }
    layers_.push_back(std::move(it->second));
  }
  for (int ch = 0; ch < 3; ++ch) {
    if (!(stddev_[ch] > 0.0f) || !std::isfinite(mean_[ch])) {
      throw WeightsError("preprocess constants must be finite with positive std");
    }
  }
}

const ConvParams& VggWeights::layer(std::string_view name) const {
  const auto idx = vgg_layer_index(name);
  if (!idx) throw ConfigError(fmt::format("unknown layer {}", name));
  return layers_[*idx];
}

VggWeights synthetic_vgg_weights(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<std::string, ConvParams> layers;
  for (const auto& spec : kVggLayers) {
    const float he_std = std::sqrt(2.0f / static_cast<float>(spec.in_channels * 9));
    std::normal_distribution<float> kernel_dist(0.0f, he_std);
    std::uniform_real_distribution<float> bias_dist(-0.05f, 0.05f);
    ConvParams params{Tensor4(spec.out_channels, spec.in_channels, 3, 3),
                      std::vector<float>(spec.out_channels)};
    for (auto& v : params.kernel.values()) v = kernel_dist(rng);
    for (auto& v : params.bias) v = bias_dist(rng);
    layers.emplace(std::string(spec.name), std::move(params));
  }
  return VggWeights(std::move(layers), kImageNetMean, kImageNetStd,
                    fmt::format("synthetic-he-normal:seed={}", seed));
}

void LayerSelection::validate() const {
  if (!vgg_layer_index(content_layer)) {
    throw ConfigError(fmt::format("unknown content layer {}", content_layer));
  }
  if (style_layers.empty()) {
    throw ConfigError("at least one style layer is required");
  }
  if (style_layer_weights.size() != style_layers.size()) {
    throw ConfigError(fmt::format("{} style layers but {} style layer weights",
                                  style_layers.size(), style_layer_weights.size()));
  }
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < style_layers.size(); ++i) {
    if (!vgg_layer_index(style_layers[i])) {
      throw ConfigError(fmt::format("unknown style layer {}", style_layers[i]));
    }
    if (!seen.insert(style_layers[i]).second) {
      throw ConfigError(fmt::format("duplicate style layer {}", style_layers[i]));
    }
    if (!(style_layer_weights[i] >= 0.0f)) {
      throw ConfigError(fmt::format("style layer weight for {} must be >= 0",
                                    style_layers[i]));
    }
  }
}

std::vector<std::string> LayerSelection::all_layers() const {
  std::vector<std::string> layers{content_layer};
  for (const auto& name : style_layers) {
    if (std::find(layers.begin(), layers.end(), name) == layers.end()) {
      layers.push_back(name);
    }
  }
  return layers;
}

Tensor4 preprocess(const Image& image, const VggWeights& weights) {
  if (image.channels != 3) {
    throw ConfigError(fmt::format("preprocess: expected 3 channels, got {}", image.channels));
  }
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ConfigError("preprocess: image pixel buffer does not match its dimensions");
  }
  Tensor4 out(1, 3, image.height, image.width);
  for (int ch = 0; ch < 3; ++ch) {
    const float mean = weights.mean()[ch];
    const float stddev = weights.stddev()[ch];
    float* plane = out.plane(0, ch);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const float unit = static_cast<float>(image.at(y, x, ch)) / 255.0f;
        plane[static_cast<std::size_t>(y) * image.width + x] = (unit - mean) / stddev;
      }
    }
  }
  return out;
}

Image postprocess(const Tensor4& tensor, const VggWeights& weights) {
  if (tensor.n() != 1 || tensor.c() != 3) {
    throw ConfigError(fmt::format("postprocess: expected (1, 3, H, W), got {}",
                                  tensor.shape().str()));
  }
  Image image{tensor.w(), tensor.h(), 3, {}};
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * 3);
  for (int ch = 0; ch < 3; ++ch) {
    const float mean = weights.mean()[ch];
    const float stddev = weights.stddev()[ch];
    const float* plane = tensor.plane(0, ch);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const float v = plane[static_cast<std::size_t>(y) * image.width + x];
        float pixel = std::round((v * stddev + mean) * 255.0f);
        if (!(pixel >= 0.0f)) pixel = 0.0f;  // also maps NaN to 0
        pixel = std::min(pixel, 255.0f);
        image.at(y, x, ch) = static_cast<std::uint8_t>(pixel);
      }
    }
  }
  return image;
}

FeatureSet extract_features(const Tensor4& image_tensor, const VggWeights& weights,
                            const LayerSelection& selection, PoolMode pool_mode) {
  selection.validate();
  const auto layers = selection.all_layers();
  return extract_layers(image_tensor, weights, layers, pool_mode);
}

FeatureSet extract_layers(const Tensor4& image_tensor, const VggWeights& weights,
                          std::span<const std::string> layers, PoolMode pool_mode) {
  if (image_tensor.n() != 1 || image_tensor.c() != 3) {
    throw ConfigError(fmt::format("extract_features: expected (1, 3, H, W), got {}",
                                  image_tensor.shape().str()));
  }
  if (image_tensor.h() % kSpatialMultiple != 0 || image_tensor.w() % kSpatialMultiple != 0) {
    throw ConfigError(fmt::format(
        "extract_features: spatial dims {}x{} must be divisible by {} (four 2x2 pools)",
        image_tensor.h(), image_tensor.w(), kSpatialMultiple));
  }
  std::vector<bool> wanted(kVggLayers.size(), false);
  std::size_t depth = 0;
  for (const auto& name : layers) {
    const auto idx = vgg_layer_index(name);
    if (!idx) throw ConfigError(fmt::format("unknown layer {}", name));
    wanted[*idx] = true;
    depth = std::max(depth, *idx + 1);
  }

  FeatureSet set;
  Tape& tape = set.tape;
  tape.input_shape = image_tensor.shape();
  tape.pool_mode = pool_mode;
  tape.depth = depth;
  tape.pre_activation.reserve(depth);
  tape.pools.resize(depth);
  tape.pool_input_shapes.resize(depth);

  Tensor4 x = image_tensor;
  for (std::size_t i = 0; i < depth; ++i) {
    const ConvParams& params = weights.layer(i);
    tape.pre_activation.push_back(conv2d_forward(x, params.kernel, params.bias));
    x = relu_forward(tape.pre_activation.back());
    if (wanted[i]) set.features.emplace(std::string(kVggLayers[i].name), x);
    if (kVggLayers[i].pool_after && i + 1 < depth) {
      tape.pool_input_shapes[i] = x.shape();
      if (pool_mode == PoolMode::kMax) {
        auto [pooled, indices] = maxpool2x2_forward(x);
        tape.pools[i] = std::move(indices);
        x = std::move(pooled);
      } else {
        x = avgpool2x2_forward(x);
      }
    }
  }
  return set;
}

Tensor4 backward_to_image(const FeatureMap& feature_grads, const Tape& tape,
                          const VggWeights& weights) {
  std::size_t start = 0;
  for (const auto& [name, grad] : feature_grads) {
    const auto idx = vgg_layer_index(name);
    if (!idx || *idx >= tape.depth) {
      throw ConfigError(fmt::format("backward_to_image: layer {} was not taped", name));
    }
    if (grad.shape() != tape.pre_activation[*idx].shape()) {
      throw ConfigError(fmt::format("backward_to_image: grad for {} has shape {}, expected {}",
                                    name, grad.shape().str(),
                                    tape.pre_activation[*idx].shape().str()));
    }
    start = std::max(start, *idx + 1);
  }
  if (start == 0) return Tensor4(tape.input_shape);

  // Gradient w.r.t. the post-ReLU output of layer i while walking down.
  std::optional<Tensor4> grad;
  for (std::size_t i = start; i-- > 0;) {
    if (auto it = feature_grads.find(kVggLayers[i].name); it != feature_grads.end()) {
      if (grad) {
        float* g = grad->data();
        const float* inj = it->second.data();
        for (std::size_t k = 0; k < grad->size(); ++k) g[k] += inj[k];
      } else {
        grad = it->second;
      }
    }
    if (!grad) continue;
    Tensor4 pre = relu_backward(*grad, tape.pre_activation[i]);
    Tensor4 below = conv2d_input_grad(pre, weights.layer(i).kernel);
    if (i == 0) return below;
    const std::size_t prev = i - 1;
    if (kVggLayers[prev].pool_after) {
      below = tape.pool_mode == PoolMode::kMax
                  ? maxpool2x2_backward(below, *tape.pools[prev])
                  : avgpool2x2_backward(below, tape.pool_input_shapes[prev]);
    }
    grad = std::move(below);
  }
  throw InternalError("backward_to_image: walk ended above the image");
}

}  // namespace dfr
