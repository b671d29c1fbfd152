#include "dfr/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

#include "dfr/errors.hpp"

namespace dfr {

namespace {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kMaxColumnFloats = std::size_t{1} << 22;

void check_kernel(const Tensor4& kernel) {
  if (kernel.h() != 3 || kernel.w() != 3) {
    throw ConfigError(fmt::format("conv2d: kernel must be (out_c, in_c, 3, 3), got {}",
                                  kernel.shape().str()));
  }
}

int rows_per_tile(int channels, int width, int height) {
  const std::size_t per_row = static_cast<std::size_t>(channels) * 9 * width;
  const auto rows = static_cast<int>(std::max<std::size_t>(1, kMaxColumnFloats / per_row));
  return std::min(rows, height);
}

// Column buffer of shape (channels * 9, (y1 - y0) * width) for output rows
// [y0, y1) of a zero-padded 3x3 window.
void im2col(const float* image, int channels, int height, int width, int y0,
            int y1, float* cols) {
  const int tile_cols = (y1 - y0) * width;
  for (int c = 0; c < channels; ++c) {
    const float* plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = cols + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * tile_cols;
        for (int y = y0; y < y1; ++y) {
          float* dst = row + static_cast<std::size_t>(y - y0) * width;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) {
            std::fill(dst, dst + width, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * width;
          const int dx = kx - 1;
          for (int x = 0; x < width; ++x) {
            const int sx = x + dx;
            dst[x] = (sx >= 0 && sx < width) ? src[sx] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-add of a column buffer back onto the image it was gathered from.
void col2im_add(const float* cols, int channels, int height, int width, int y0,
                int y1, float* image) {
  const int tile_cols = (y1 - y0) * width;
  for (int c = 0; c < channels; ++c) {
    float* plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row =
            cols + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * tile_cols;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          const float* src = row + static_cast<std::size_t>(y - y0) * width;
          float* dst = plane + static_cast<std::size_t>(sy) * width;
          const int dx = kx - 1;
          const int x_begin = std::max(0, -dx);
          const int x_end = std::min(width, width - dx);
          for (int x = x_begin; x < x_end; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

void check_even(const Tensor4& input, const char* what) {
  if (input.h() % 2 != 0 || input.w() % 2 != 0) {
    throw ConfigError(fmt::format("{}: spatial dims must be even, got {}", what,
                                  input.shape().str()));
  }
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel,
                       std::span<const float> bias) {
  check_kernel(kernel);
  if (input.c() != kernel.c() || static_cast<int>(bias.size()) != kernel.n()) {
    throw ConfigError(fmt::format(
        "conv2d_forward: input {} / kernel {} / bias length {} are inconsistent",
        input.shape().str(), kernel.shape().str(), bias.size()));
  }
  const int in_c = input.c();
  const int out_c = kernel.n();
  const int height = input.h();
  const int width = input.w();
  const int hw = height * width;
  Tensor4 output(input.n(), out_c, height, width);

  const ConstMatMap weights(kernel.data(), out_c, in_c * 9);
  const int tile = rows_per_tile(in_c, width, height);
  std::vector<float> cols(static_cast<std::size_t>(in_c) * 9 * tile * width);

  for (int b = 0; b < input.n(); ++b) {
    const float* image = input.plane(b, 0);
    float* out = output.plane(b, 0);
    for (int y0 = 0; y0 < height; y0 += tile) {
      const int y1 = std::min(height, y0 + tile);
      const int tile_cols = (y1 - y0) * width;
      im2col(image, in_c, height, width, y0, y1, cols.data());
      const ConstMatMap col_mat(cols.data(), in_c * 9, tile_cols);
      StridedMap out_mat(out + static_cast<std::size_t>(y0) * width, out_c,
                         tile_cols, Eigen::OuterStride<>(hw));
      out_mat.noalias() = weights * col_mat;
    }
    for (int o = 0; o < out_c; ++o) {
      float* plane = output.plane(b, o);
      const float bo = bias[o];
      for (int i = 0; i < hw; ++i) plane[i] += bo;
    }
  }
  return output;
}

Tensor4 conv2d_input_grad(const Tensor4& output_grad, const Tensor4& kernel) {
  check_kernel(kernel);
  if (output_grad.c() != kernel.n()) {
    throw ConfigError(fmt::format(
        "conv2d_input_grad: output grad {} does not match kernel {}",
        output_grad.shape().str(), kernel.shape().str()));
  }
  const int in_c = kernel.c();
  const int out_c = kernel.n();
  const int height = output_grad.h();
  const int width = output_grad.w();
  const int hw = height * width;
  Tensor4 input_grad(output_grad.n(), in_c, height, width);

  const ConstMatMap weights(kernel.data(), out_c, in_c * 9);
  const int tile = rows_per_tile(in_c, width, height);
  RowMat cols(in_c * 9, tile * width);

  for (int b = 0; b < output_grad.n(); ++b) {
    const float* grad = output_grad.plane(b, 0);
    float* dst = input_grad.plane(b, 0);
    for (int y0 = 0; y0 < height; y0 += tile) {
      const int y1 = std::min(height, y0 + tile);
      const int tile_cols = (y1 - y0) * width;
      const ConstStridedMap grad_mat(grad + static_cast<std::size_t>(y0) * width,
                                     out_c, tile_cols, Eigen::OuterStride<>(hw));
      Eigen::Map<RowMat> col_mat(cols.data(), in_c * 9, tile_cols);
      col_mat.noalias() = weights.transpose() * grad_mat;
      col2im_add(cols.data(), in_c, height, width, y0, y1, dst);
    }
  }
  return input_grad;
}

Tensor4 relu_forward(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    // NaN passes through so a diverged image still surfaces in the loss.
    const float v = input[i];
    out[i] = v > 0.0f || std::isnan(v) ? v : 0.0f;
  }
  return out;
}

Tensor4 relu_backward(const Tensor4& output_grad, const Tensor4& forward_input) {
  require_same_shape(output_grad, forward_input, "relu_backward");
  Tensor4 out(output_grad.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = forward_input[i] > 0.0f ? output_grad[i] : 0.0f;
  }
  return out;
}

std::pair<Tensor4, PoolIndices> maxpool2x2_forward(const Tensor4& input) {
  check_even(input, "maxpool2x2_forward");
  const Shape4 out_shape{input.n(), input.c(), input.h() / 2, input.w() / 2};
  Tensor4 out(out_shape);
  PoolIndices idx{input.shape(), out_shape, {}};
  idx.argmax.resize(out_shape.count());

  std::size_t o = 0;
  for (int b = 0; b < input.n(); ++b) {
    for (int c = 0; c < input.c(); ++c) {
      for (int y = 0; y < out_shape.h; ++y) {
        for (int x = 0; x < out_shape.w; ++x, ++o) {
          std::size_t best = input.index(b, c, 2 * y, 2 * x);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = input.index(b, c, 2 * y + dy, 2 * x + dx);
              if (input[i] > input[best] || (std::isnan(input[i]) && !std::isnan(input[best]))) {
                best = i;
              }
            }
          }
          out[o] = input[best];
          idx.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return {std::move(out), std::move(idx)};
}

Tensor4 maxpool2x2_backward(const Tensor4& output_grad,
                            const PoolIndices& indices) {
  if (output_grad.shape() != indices.output_shape ||
      indices.argmax.size() != output_grad.size()) {
    throw ConfigError(fmt::format("maxpool2x2_backward: grad {} does not match pooled shape {}",
                                  output_grad.shape().str(),
                                  indices.output_shape.str()));
  }
  Tensor4 input_grad(indices.input_shape);
  const Shape4& in = indices.input_shape;
  const Shape4& out = indices.output_shape;
  std::size_t o = 0;
  for (int b = 0; b < out.n; ++b) {
    for (int c = 0; c < out.c; ++c) {
      for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x, ++o) {
          const std::size_t src = indices.argmax[o];
          const std::size_t plane_base =
              (static_cast<std::size_t>(b) * in.c + c) * in.plane();
          const bool in_plane = src >= plane_base && src < plane_base + in.plane();
          const auto sy = static_cast<int>((src - plane_base) / in.w);
          const auto sx = static_cast<int>((src - plane_base) % in.w);
          if (!in_plane || sy / 2 != y || sx / 2 != x) {
            throw InternalError(fmt::format(
                "maxpool2x2_backward: argmax {} outside window ({}, {}, {}, {})",
                src, b, c, y, x));
          }
          input_grad[src] += output_grad[o];
        }
      }
    }
  }
  return input_grad;
}

Tensor4 avgpool2x2_forward(const Tensor4& input) {
  check_even(input, "avgpool2x2_forward");
  Tensor4 out(input.n(), input.c(), input.h() / 2, input.w() / 2);
  for (int b = 0; b < input.n(); ++b) {
    for (int c = 0; c < input.c(); ++c) {
      for (int y = 0; y < out.h(); ++y) {
        for (int x = 0; x < out.w(); ++x) {
          out.at(b, c, y, x) =
              0.25f * (input.at(b, c, 2 * y, 2 * x) + input.at(b, c, 2 * y, 2 * x + 1) +
                       input.at(b, c, 2 * y + 1, 2 * x) +
                       input.at(b, c, 2 * y + 1, 2 * x + 1));
        }
      }
    }
  }
  return out;
}

Tensor4 avgpool2x2_backward(const Tensor4& output_grad,
                            const Shape4& input_shape) {
  if (input_shape.n != output_grad.n() || input_shape.c != output_grad.c() ||
      input_shape.h != 2 * output_grad.h() || input_shape.w != 2 * output_grad.w()) {
    throw ConfigError(fmt::format("avgpool2x2_backward: grad {} does not match input {}",
                                  output_grad.shape().str(), input_shape.str()));
  }
  Tensor4 input_grad(input_shape);
  for (int b = 0; b < input_shape.n; ++b) {
    for (int c = 0; c < input_shape.c; ++c) {
      for (int y = 0; y < input_shape.h; ++y) {
        for (int x = 0; x < input_shape.w; ++x) {
          input_grad.at(b, c, y, x) = 0.25f * output_grad.at(b, c, y / 2, x / 2);
        }
      }
    }
  }
  return input_grad;
}

Tensor4 axpy_blend(const Tensor4& a, const Tensor4& b, float lambda) {
  require_same_shape(a, b, "axpy_blend");
  if (!(lambda >= 0.0f && lambda <= 1.0f)) {
    throw ConfigError(fmt::format("axpy_blend: lambda {} outside [0, 1]", lambda));
  }
  if (lambda == 0.0f) return a;
  if (lambda == 1.0f) return b;
  Tensor4 out(a.shape());
  const float keep = 1.0f - lambda;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = keep * a[i] + lambda * b[i];
  }
  return out;
}

Tensor4 resize_bilinear_spatial(const Tensor4& input, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) {
    throw ConfigError(fmt::format("resize_bilinear_spatial: target {}x{} must be >= 1",
                                  new_h, new_w));
  }
  if (new_h == input.h() && new_w == input.w()) return input;

  struct Tap {
    int lo;
    int hi;
    float frac;
  };
  auto taps = [](int src, int dst) {
    std::vector<Tap> t(dst);
    const double scale = dst > 1 ? static_cast<double>(src - 1) / (dst - 1) : 0.0;
    for (int i = 0; i < dst; ++i) {
      const double pos = i * scale;
      const int lo = std::min(static_cast<int>(std::floor(pos)), src - 1);
      const int hi = std::min(lo + 1, src - 1);
      t[i] = {lo, hi, static_cast<float>(pos - lo)};
    }
    return t;
  };
  const auto ty = taps(input.h(), new_h);
  const auto tx = taps(input.w(), new_w);

  Tensor4 out(input.n(), input.c(), new_h, new_w);
  for (int b = 0; b < input.n(); ++b) {
    for (int c = 0; c < input.c(); ++c) {
      const float* src = input.plane(b, c);
      float* dst = out.plane(b, c);
      const int w = input.w();
      for (int y = 0; y < new_h; ++y) {
        const float fy = ty[y].frac;
        const float* r0 = src + static_cast<std::size_t>(ty[y].lo) * w;
        const float* r1 = src + static_cast<std::size_t>(ty[y].hi) * w;
        for (int x = 0; x < new_w; ++x) {
          const float fx = tx[x].frac;
          const float top = r0[tx[x].lo] + fx * (r0[tx[x].hi] - r0[tx[x].lo]);
          const float bottom = r1[tx[x].lo] + fx * (r1[tx[x].hi] - r1[tx[x].lo]);
          dst[static_cast<std::size_t>(y) * new_w + x] = top + fy * (bottom - top);
        }
      }
    }
  }
  return out;
}

}  // namespace dfr
