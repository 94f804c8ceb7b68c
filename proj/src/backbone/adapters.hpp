#pragma once

#include "nn/layers.hpp"

namespace aid::backbone {

// Each adapter returns only its residual branch; callers add it to x. The
// up-projection starts at zero, so a fresh adapter contributes exactly 0.

// W_up GELU(W_down x), per token. x is [rows, W].
struct SpatialAdapter {
  nn::Linear down, up;

  template <typename T>
  static SpatialAdapter create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                               std::size_t width, std::size_t bottleneck);

  template <typename T>
  struct Cache {
    nn::BasicTensor<T> x, pre, act;
  };
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& x,
                             Cache<T>& cache) const;
  template <typename T>
  nn::BasicTensor<T> backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                              const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;
};

// W_up DWConv3d(W_down x) with a (kt, 1, 1) kernel over (time, h, w).
// x is [N, h*w, W] (frame-major tokens).
struct ShortTermAdapter {
  nn::Linear down, up;
  nn::ParamId kernel = 0;  // [d_b, kt, 1, 1]
  std::size_t bottleneck = 0;

  template <typename T>
  static ShortTermAdapter create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                                 std::size_t width, std::size_t bottleneck, std::size_t kt);

  template <typename T>
  struct Cache {
    nn::BasicTensor<T> x, inner, mixed;  // inner/mixed in [d_b, N, h, w]
    std::size_t h = 0, w = 0;
  };
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& x,
                             std::size_t h, std::size_t w, Cache<T>& cache) const;
  template <typename T>
  nn::BasicTensor<T> backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                              const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;
};

// W_up SelfAttn_time(W_down x): attention over the N frame positions,
// independently at each spatial location. x is [N, h*w, W].
struct LongTermAdapter {
  nn::Linear down, up;
  nn::MultiHeadAttention attn;  // q/k/v at the bottleneck width, no output projection

  template <typename T>
  static LongTermAdapter create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                                std::size_t width, std::size_t bottleneck);

  template <typename T>
  struct Cache {
    nn::BasicTensor<T> xt;  // [hw, N, W]
    nn::BasicTensor<T> inner, mixed;
    typename nn::MultiHeadAttention::Cache<T> att;
  };
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& x,
                             Cache<T>& cache) const;
  template <typename T>
  nn::BasicTensor<T> backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                              const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;
};

// [N, h*w, C] <-> [C, N, h, w]
template <typename T>
nn::BasicTensor<T> tokens_to_cnhw(const nn::BasicTensor<T>& x, std::size_t h, std::size_t w);
template <typename T>
nn::BasicTensor<T> cnhw_to_tokens(const nn::BasicTensor<T>& x);

}  // namespace aid::backbone
