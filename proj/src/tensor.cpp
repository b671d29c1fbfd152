#include "dfr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "dfr/errors.hpp"

namespace dfr {

std::string Shape4::str() const {
  return fmt::format("({}, {}, {}, {})", n, c, h, w);
}

namespace {

void check_dims(const Shape4& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ConfigError("tensor dimensions must all be >= 1, got " + s.str());
  }
}

}  // namespace

Tensor4::Tensor4(Shape4 shape, float fill) : shape_(shape) {
  check_dims(shape_);
  data_.assign(shape_.count(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != shape_.count()) {
    throw ConfigError(fmt::format("tensor data length {} does not match shape {}",
                                  data_.size(), shape_.str()));
  }
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ConfigError(fmt::format("{}: shape mismatch {} vs {}", what,
                                  a.shape().str(), b.shape().str()));
  }
}

bool bitwise_equal(const Tensor4& a, const Tensor4& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

float max_abs_diff(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace dfr
