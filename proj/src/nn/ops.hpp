#pragma once

#include "nn/tensor.hpp"

namespace aid::nn {

// Matrix products over the rank-2 view (rows x cols). When `accumulate` is
// set the product is added into `out`, which must already have the shape.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
void matmul_into(const BasicTensor<T>& a, bool trans_a, const BasicTensor<T>& b, bool trans_b,
                 BasicTensor<T>& out, bool accumulate);

// y = x W + b over the last axis of x. `bias` may be null.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>* bias);
// Accumulates into grad_weight / grad_bias when non-null; returns dL/dx.
template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_out, BasicTensor<T>* grad_weight,
                               BasicTensor<T>* grad_bias);

template <typename T>
T gelu_scalar(T x);
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
struct AttentionOutput {
  BasicTensor<T> out;    // [m, dv]
  BasicTensor<T> probs;  // [m, n], rows sum to one
};

// SoftMax(Q K^T * scale) V. Throws DimensionError on empty keys or mismatched
// extents.
template <typename T>
AttentionOutput<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                             const BasicTensor<T>& v, T scale);

template <typename T>
struct AttentionGrads {
  BasicTensor<T> q, k, v;
};

template <typename T>
AttentionGrads<T> attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                     const BasicTensor<T>& v, const BasicTensor<T>& probs,
                                     const BasicTensor<T>& grad_out, T scale);

template <typename T>
struct LayerNormOutput {
  BasicTensor<T> y;
  BasicTensor<T> xhat;
  std::vector<T> rstd;  // one per row
};

template <typename T>
LayerNormOutput<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                              const BasicTensor<T>& bias, T eps);
// Returns dL/dx; accumulates gain/bias grads when non-null.
template <typename T>
BasicTensor<T> layer_norm_backward(const LayerNormOutput<T>& fwd, const BasicTensor<T>& gain,
                                   const BasicTensor<T>& grad_out, BasicTensor<T>* grad_gain,
                                   BasicTensor<T>* grad_bias);

// Per-channel 3-D cross-correlation with zero padding: x [C, N, h, w],
// kernels [C, kt, kh, kw] with odd extents. Output has the input's shape.
template <typename T>
BasicTensor<T> depthwise_conv3d(const BasicTensor<T>& x, const BasicTensor<T>& kernels);
template <typename T>
BasicTensor<T> depthwise_conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernels,
                                         const BasicTensor<T>& grad_out,
                                         BasicTensor<T>* grad_kernels);

// 3x3 zero-padded spatial convolution on token grids. x is [F, h*w, Cin]
// (row-major spatial tokens), weight is [9*Cin, Cout]. Returns [F, h*w, Cout].
template <typename T>
BasicTensor<T> conv3x3(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                       const BasicTensor<T>& weight, const BasicTensor<T>* bias);
template <typename T>
BasicTensor<T> conv3x3_backward(const BasicTensor<T>& x, std::size_t h, std::size_t w,
                                const BasicTensor<T>& weight, const BasicTensor<T>& grad_out,
                                BasicTensor<T>* grad_weight, BasicTensor<T>* grad_bias);

// 2x2 average pooling and nearest-neighbour upsampling on [F, h*w, C] grids.
template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x, std::size_t h, std::size_t w);
template <typename T>
BasicTensor<T> avg_pool2_backward(const BasicTensor<T>& grad_out, std::size_t h, std::size_t w);
template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& x, std::size_t h, std::size_t w);
template <typename T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& grad_out, std::size_t h, std::size_t w);

}  // namespace aid::nn
