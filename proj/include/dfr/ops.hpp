#pragma once

// Forward kernels of the VGG feature stack and their input-gradient
// counterparts. Only 3x3/stride-1/pad-1 convolution and 2x2/stride-2 pooling
// are supported; weights are frozen, so no weight gradients exist here.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dfr/tensor.hpp"

namespace dfr {

enum class PoolMode { kMax, kAverage };

// Argmax routing recorded by a 2x2 max-pool forward pass.
struct PoolIndices {
  Shape4 input_shape;
  Shape4 output_shape;
  // Flat input index (into the input tensor) per output cell.
  std::vector<std::uint32_t> argmax;
};

// kernel is (out_c, in_c, 3, 3); bias has out_c entries. Zero padding of 1.
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel,
                       std::span<const float> bias);

// dL/d(input) given dL/d(output) for conv2d_forward with the same kernel.
Tensor4 conv2d_input_grad(const Tensor4& output_grad, const Tensor4& kernel);

Tensor4 relu_forward(const Tensor4& input);

// Subgradient at exactly 0 is 0.
Tensor4 relu_backward(const Tensor4& output_grad, const Tensor4& forward_input);

// Ties resolve to the first cell in row-major window order.
std::pair<Tensor4, PoolIndices> maxpool2x2_forward(const Tensor4& input);
Tensor4 maxpool2x2_backward(const Tensor4& output_grad,
                            const PoolIndices& indices);

Tensor4 avgpool2x2_forward(const Tensor4& input);
Tensor4 avgpool2x2_backward(const Tensor4& output_grad,
                            const Shape4& input_shape);

// Elementwise (1 - lambda) * a + lambda * b. The endpoints return a or b
// bitwise.
Tensor4 axpy_blend(const Tensor4& a, const Tensor4& b, float lambda);

// Channelwise bilinear resize of the (h, w) plane, corner-aligned sampling.
Tensor4 resize_bilinear_spatial(const Tensor4& input, int new_h, int new_w);

}  // namespace dfr
