#pragma once

#include <cstdint>

#include "dfr/tensor.hpp"

namespace dfr {

struct AdamOptions {
  float lr = 0.002f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam with bias correction over one parameter tensor.
class Adam {
 public:
  // Throws ConfigError for non-positive lr or betas outside [0, 1).
  Adam(const Shape4& shape, AdamOptions options = {});

  // Updates params in place.
  void step(Tensor4& params, const Tensor4& grad);

  const Tensor4& m() const { return m_; }
  const Tensor4& v() const { return v_; }
  std::int64_t t() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  Tensor4 m_;
  Tensor4 v_;
  std::int64_t t_ = 0;
};

}  // namespace dfr
