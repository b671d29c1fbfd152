#include "dfr/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dfr/errors.hpp"

namespace dfr {

Adam::Adam(const Shape4& shape, AdamOptions options)
    : options_(options), m_(shape), v_(shape) {
  if (!(options_.lr > 0.0f)) {
    throw ConfigError(fmt::format("learning rate must be > 0, got {}", options_.lr));
  }
  if (!(options_.beta1 >= 0.0f && options_.beta1 < 1.0f) ||
      !(options_.beta2 >= 0.0f && options_.beta2 < 1.0f)) {
    throw ConfigError(fmt::format("Adam betas must lie in [0, 1), got {} and {}",
                                  options_.beta1, options_.beta2));
  }
  if (!(options_.eps > 0.0f)) {
    throw ConfigError(fmt::format("Adam eps must be > 0, got {}", options_.eps));
  }
}

void Adam::step(Tensor4& params, const Tensor4& grad) {
  require_same_shape(params, grad, "adam step");
  require_same_shape(params, m_, "adam step (optimizer state)");
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const auto correction1 = static_cast<float>(1.0 - std::pow(b1, static_cast<double>(t_)));
  const auto correction2 = static_cast<float>(1.0 - std::pow(b2, static_cast<double>(t_)));
  const float beta1 = options_.beta1;
  const float beta2 = options_.beta2;
  float* p = params.data();
  float* m = m_.data();
  float* v = v_.data();
  const float* g = grad.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float m_hat = m[i] / correction1;
    const float v_hat = v[i] / correction2;
    p[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
  }
}

}  // namespace dfr
