#pragma once

// Deep feature rotation: loss targets built from feature maps rotated in the
// spatial plane and blended with the originals by a rotation weight.

#include <string>
#include <string_view>
#include <utility>

#include "dfr/tensor.hpp"
#include "dfr/vgg.hpp"

namespace dfr {

// Counter-clockwise rotation of every (h, w) plane.
enum class Angle { k0 = 0, k90 = 90, k180 = 180, k270 = 270 };

enum class ApplyTo { kBoth, kStyleOnly, kContentOnly };

// Throws ConfigError for anything outside {0, 90, 180, 270}.
Angle angle_from_degrees(int degrees);
inline int degrees(Angle a) { return static_cast<int>(a); }

ApplyTo apply_to_from_string(std::string_view s);
std::string_view to_string(ApplyTo a);

// One (angle, lambda) cell of the multimodal grid.
class RotationConfig {
 public:
  RotationConfig() = default;
  // Throws ConfigError when lambda is outside [0, 1].
  RotationConfig(Angle angle, float lambda, ApplyTo apply_to = ApplyTo::kBoth);

  Angle angle() const { return angle_; }
  float lambda() const { return lambda_; }
  ApplyTo apply_to() const { return apply_to_; }

 private:
  Angle angle_ = Angle::k0;
  float lambda_ = 0.0f;
  ApplyTo apply_to_ = ApplyTo::kBoth;
};

// 90/270 swap the spatial dims; 0 returns the input unchanged.
Tensor4 rotate_feature(const Tensor4& w, Angle angle);

// (1 - lambda) * W + lambda * rotate(W), with 90/270 rotations of non-square
// maps bilinearly resized back to (h, w) first. Output shape == input shape.
Tensor4 make_target(const Tensor4& w, const RotationConfig& config);

struct LossTargets {
  FeatureMap content;
  FeatureMap style;
};

// Rotated-and-blended targets for content and/or style layers according to
// config.apply_to(). Both feature maps must hold the same layers.
LossTargets build_loss_targets(const FeatureMap& content_feats,
                               const FeatureMap& style_feats,
                               const RotationConfig& config);

}  // namespace dfr
