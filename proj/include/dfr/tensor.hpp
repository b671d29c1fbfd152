#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dfr {

// Dimensions of a dense (n, c, h, w) tensor.
struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense f32 tensor in row-major (n, c, h, w) order.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, float fill = 0.0f);
  Tensor4(Shape4 shape, std::vector<float> data);
  Tensor4(int n, int c, int h, int w, float fill = 0.0f)
      : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& vec() const { return data_; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }
  float& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Pointer to the h*w plane of (batch, channel).
  float* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const float* plane(int n, int c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  bool all_finite() const;

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

// Throws ConfigError naming both shapes when they differ.
void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what);

// Bitwise equality (distinguishes -0.0 from +0.0, unlike operator==).
bool bitwise_equal(const Tensor4& a, const Tensor4& b);

float max_abs_diff(const Tensor4& a, const Tensor4& b);

}  // namespace dfr
