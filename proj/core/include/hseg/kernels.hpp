#pragma once

#include <cstddef>
#include <span>

#include "hseg/tensor.hpp"

/// Numeric primitives shared by every decoder stage.
///
/// All reductions run in float32 and sum each dot product sequentially in
/// index order, so a given build produces identical bits no matter how rows
/// are blocked or which thread computes them.
namespace hseg::kernels {

/// Weight + bias pair for a linear or convolution layer.
struct Layer {
  Tensor weight;
  Tensor bias;
};

/// c[m x n] = a[m x k] * b[k x n], all row-major and densely packed.
/// `c` is overwritten. Each c[i][j] accumulates t = 0..k-1 in order.
void gemm(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
          std::size_t n);

Tensor matmul(const Tensor& a, const Tensor& b);

/// x[m x k] * w[k x n] + bias[n]. An empty bias means zero.
Tensor linear(const Tensor& x, const Tensor& w, std::span<const float> bias = {});

/// Row-wise softmax with per-row max subtraction. Throws NumericError on
/// non-finite input.
Tensor softmax_rows(const Tensor& x);

/// In-place softmax over one row; assumes finite input.
void softmax_inplace(std::span<float> row);

/// Direct cross-correlation with zero padding.
/// x: [c_in x H x W], w: [c_out x c_in x k x k], bias: c_out values or empty.
Tensor conv2d(const Tensor& x, const Tensor& w, std::span<const float> bias,
              std::size_t stride, std::size_t pad);

/// Transposed convolution with non-overlapping taps (kernel extent == stride).
/// x: [c_in x H x W], w: [c_in x c_out x s x s]; output [c_out x sH x sW].
Tensor deconv2d(const Tensor& x, const Tensor& w, std::span<const float> bias,
                std::size_t stride = 2);

/// Max pooling of [c x H x W] down to [c x out_h x out_w]; extents must divide.
Tensor maxpool_to(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// k x k box mean with zero padding k/2: window sum divided by k*k.
Tensor uniform_avg_conv(const Tensor& x, std::size_t k = 7);

float gelu(float x);
void gelu_inplace(std::span<float> x);
float sigmoid(float x);

/// Per-row layer normalization over the last axis of a rank-2 tensor.
Tensor layer_norm_rows(const Tensor& x, std::span<const float> gamma,
                       std::span<const float> beta, float eps = 1e-5f);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace hseg::kernels
