#include "dfr/rotation.hpp"

#include <fmt/format.h>

#include "dfr/errors.hpp"
#include "dfr/ops.hpp"

namespace dfr {

Angle angle_from_degrees(int degrees) {
  switch (degrees) {
    case 0: return Angle::k0;
    case 90: return Angle::k90;
    case 180: return Angle::k180;
    case 270: return Angle::k270;
    default:
      throw ConfigError(fmt::format("rotation angle must be one of 0, 90, 180, 270; got {}",
                                    degrees));
  }
}

ApplyTo apply_to_from_string(std::string_view s) {
  if (s == "both") return ApplyTo::kBoth;
  if (s == "style_only") return ApplyTo::kStyleOnly;
  if (s == "content_only") return ApplyTo::kContentOnly;
  throw ConfigError(fmt::format("apply-to must be both, style_only or content_only; got {}", s));
}

std::string_view to_string(ApplyTo a) {
  switch (a) {
    case ApplyTo::kBoth: return "both";
    case ApplyTo::kStyleOnly: return "style_only";
    case ApplyTo::kContentOnly: return "content_only";
  }
  return "both";
}

RotationConfig::RotationConfig(Angle angle, float lambda, ApplyTo apply_to)
    : angle_(angle), lambda_(lambda), apply_to_(apply_to) {
  if (!(lambda >= 0.0f && lambda <= 1.0f)) {
    throw ConfigError(fmt::format("rotation weight {} outside [0, 1]", lambda));
  }
}

Tensor4 rotate_feature(const Tensor4& w, Angle angle) {
  if (angle == Angle::k0) return w;
  const int h = w.h();
  const int wd = w.w();
  const bool swap = angle == Angle::k90 || angle == Angle::k270;
  const int out_h = swap ? wd : h;
  const int out_w = swap ? h : wd;
  Tensor4 out(w.n(), w.c(), out_h, out_w);
  for (int b = 0; b < w.n(); ++b) {
    for (int c = 0; c < w.c(); ++c) {
      const float* src = w.plane(b, c);
      float* dst = out.plane(b, c);
      for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
          int sy = 0;
          int sx = 0;
          switch (angle) {
            case Angle::k90: sy = j; sx = wd - 1 - i; break;
            case Angle::k180: sy = h - 1 - i; sx = wd - 1 - j; break;
            case Angle::k270: sy = h - 1 - j; sx = i; break;
            case Angle::k0: sy = i; sx = j; break;
          }
          dst[static_cast<std::size_t>(i) * out_w + j] =
              src[static_cast<std::size_t>(sy) * wd + sx];
        }
      }
    }
  }
  return out;
}

Tensor4 make_target(const Tensor4& w, const RotationConfig& config) {
  if (config.lambda() == 0.0f || config.angle() == Angle::k0) return w;
  Tensor4 rotated = rotate_feature(w, config.angle());
  if (rotated.shape() != w.shape()) {
    rotated = resize_bilinear_spatial(rotated, w.h(), w.w());
  }
  return axpy_blend(w, rotated, config.lambda());
}

LossTargets build_loss_targets(const FeatureMap& content_feats,
                               const FeatureMap& style_feats,
                               const RotationConfig& config) {
  if (content_feats.size() != style_feats.size()) {
    throw ConfigError("build_loss_targets: content and style feature sets hold different layers");
  }
  for (const auto& [name, f] : content_feats) {
    auto it = style_feats.find(name);
    if (it == style_feats.end()) {
      throw ConfigError(fmt::format("build_loss_targets: layer {} missing from style features",
                                    name));
    }
    if (it->second.c() != f.c()) {
      throw ConfigError(fmt::format("build_loss_targets: layer {} has {} content vs {} style channels",
                                    name, f.c(), it->second.c()));
    }
  }
  const bool rotate_content = config.apply_to() != ApplyTo::kStyleOnly;
  const bool rotate_style = config.apply_to() != ApplyTo::kContentOnly;

  LossTargets out;
  for (const auto& [name, f] : content_feats) {
    out.content.emplace(name, rotate_content ? make_target(f, config) : f);
  }
  for (const auto& [name, f] : style_feats) {
    out.style.emplace(name, rotate_style ? make_target(f, config) : f);
  }
  return out;
}

}  // namespace dfr
