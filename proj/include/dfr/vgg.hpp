#pragma once

// The VGG19 feature stack truncated after conv5_1: weights, preprocessing,
// taped forward pass and reverse-mode backward to image pixels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfr/image.hpp"
#include "dfr/ops.hpp"
#include "dfr/tensor.hpp"

namespace dfr {

struct ConvLayerSpec {
  std::string_view name;
  int in_channels;
  int out_channels;
  int block;          // 1-based VGG block
  bool pool_after;    // a 2x2 pool follows this layer's ReLU
};

// conv1_1 .. conv5_1 in network order.
inline constexpr std::array<ConvLayerSpec, 13> kVggLayers{{
    {"conv1_1", 3, 64, 1, false},    {"conv1_2", 64, 64, 1, true},
    {"conv2_1", 64, 128, 2, false},  {"conv2_2", 128, 128, 2, true},
    {"conv3_1", 128, 256, 3, false}, {"conv3_2", 256, 256, 3, false},
    {"conv3_3", 256, 256, 3, false}, {"conv3_4", 256, 256, 3, true},
    {"conv4_1", 256, 512, 4, false}, {"conv4_2", 512, 512, 4, false},
    {"conv4_3", 512, 512, 4, false}, {"conv4_4", 512, 512, 4, true},
    {"conv5_1", 512, 512, 5, false},
}};

// Position of a layer in kVggLayers, or nullopt for unknown names.
std::optional<std::size_t> vgg_layer_index(std::string_view name);

struct ConvParams {
  Tensor4 kernel;  // (out_c, in_c, 3, 3)
  std::vector<float> bias;
};

// Immutable after construction; safe to share across concurrent jobs.
class VggWeights {
 public:
  // Validates completeness and canonical shapes; throws WeightsError naming
  // the offending layer.
  VggWeights(std::map<std::string, ConvParams> layers, std::array<float, 3> mean,
             std::array<float, 3> stddev, std::string source_checksum = {});

  const ConvParams& layer(std::string_view name) const;
  const ConvParams& layer(std::size_t index) const { return layers_.at(index); }
  const std::array<float, 3>& mean() const { return mean_; }
  const std::array<float, 3>& stddev() const { return stddev_; }
  const std::string& source_checksum() const { return source_checksum_; }

 private:
  std::vector<ConvParams> layers_;  // kVggLayers order
  std::array<float, 3> mean_;
  std::array<float, 3> stddev_;
  std::string source_checksum_;
};

inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};

// DFRW portable weight file. See README for the byte layout.
VggWeights load_weights(const std::filesystem::path& path);
VggWeights parse_weights(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_weights(const VggWeights& weights);
void save_weights(const VggWeights& weights, const std::filesystem::path& path);

// He-initialised random weights with canonical shapes and ImageNet
// preprocessing constants. Used for tests and smoke runs without the exporter.
VggWeights synthetic_vgg_weights(std::uint64_t seed);

struct LayerSelection {
  std::string content_layer = "conv4_2";
  std::vector<std::string> style_layers = {"conv1_1", "conv2_1", "conv3_1",
                                           "conv4_1", "conv5_1"};
  std::vector<float> style_layer_weights = {1.0f, 1.0f, 1.0f, 1.0f, 1.0f};

  // Throws ConfigError on unknown layers, negative or mismatched weights, or
  // an empty style set.
  void validate() const;
  // Content layer plus style layers, deduplicated.
  std::vector<std::string> all_layers() const;
};

// Activations retained by the forward pass for reverse mode.
struct Tape {
  Shape4 input_shape;
  PoolMode pool_mode = PoolMode::kMax;
  std::size_t depth = 0;  // number of conv layers evaluated
  std::vector<Tensor4> pre_activation;            // conv output before ReLU
  std::vector<std::optional<PoolIndices>> pools;  // max-pool routing after layer i
  std::vector<Shape4> pool_input_shapes;          // shape entering the pool after layer i
};

using FeatureMap = std::map<std::string, Tensor4, std::less<>>;

struct FeatureSet {
  FeatureMap features;  // post-ReLU activations keyed by layer name
  Tape tape;
};

// Image-space tensor (1, 3, H, W): pixels scaled to [0, 1] then normalised per
// channel with the weight file's constants.
Tensor4 preprocess(const Image& image, const VggWeights& weights);

// Inverse of preprocess with clamping to [0, 255] and rounding.
Image postprocess(const Tensor4& tensor, const VggWeights& weights);

// Requires H and W divisible by 16.
FeatureSet extract_features(const Tensor4& image_tensor, const VggWeights& weights,
                            const LayerSelection& selection,
                            PoolMode pool_mode = PoolMode::kMax);

// Runs the forward pass for an explicit layer list (no selection semantics).
FeatureSet extract_layers(const Tensor4& image_tensor, const VggWeights& weights,
                          std::span<const std::string> layers,
                          PoolMode pool_mode = PoolMode::kMax);

// dL/d(image_tensor) for gradients injected at post-ReLU layer outputs.
Tensor4 backward_to_image(const FeatureMap& feature_grads, const Tape& tape,
                          const VggWeights& weights);

}  // namespace dfr
