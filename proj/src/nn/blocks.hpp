#pragma once

#include "nn/layers.hpp"

namespace aid::nn {

// Pre-norm residual attention: y = x + MHA(LN(x), ctx). For self-attention
// the context is LN(x) itself. The output projection is created with
// `out_init`, so kZero makes the block an exact identity at initialization.
struct AttnBlock {
  LayerNorm norm;
  MultiHeadAttention attn;
  bool self = true;

  template <typename T>
  static AttnBlock create(ParamStore<T>& store, Rng& rng, const std::string& name,
                          std::size_t dim, std::size_t context_dim, std::size_t heads,
                          bool self, Init out_init);

  template <typename T>
  struct Cache {
    LayerNormOutput<T> ln;
    typename MultiHeadAttention::Cache<T> att;
  };

  // x holds groups of m rows; ctx groups of n rows (ignored for self-attention).
  template <typename T>
  BasicTensor<T> forward(const ParamStore<T>& store, const BasicTensor<T>& x, std::size_t m,
                         const BasicTensor<T>* ctx, std::size_t n, Cache<T>& cache) const;
  // Returns (dL/dx, dL/dctx); the context gradient is empty for self-attention.
  template <typename T>
  std::pair<BasicTensor<T>, BasicTensor<T>> backward(const ParamStore<T>& store,
                                                     const Cache<T>& cache,
                                                     const BasicTensor<T>& grad_out,
                                                     Grads<T>& grads) const;
};

// Pre-norm residual feed-forward: y = x + W2 GELU(W1 LN(x)).
struct FfnBlock {
  LayerNorm norm;
  Linear up, down;

  template <typename T>
  static FfnBlock create(ParamStore<T>& store, Rng& rng, const std::string& name,
                         std::size_t dim, std::size_t hidden, Init out_init);

  template <typename T>
  struct Cache {
    LayerNormOutput<T> ln;
    BasicTensor<T> pre;  // W1 LN(x), before GELU
    BasicTensor<T> act;
  };

  template <typename T>
  BasicTensor<T> forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                         Cache<T>& cache) const;
  template <typename T>
  BasicTensor<T> backward(const ParamStore<T>& store, const Cache<T>& cache,
                          const BasicTensor<T>& grad_out, Grads<T>& grads) const;
};

}  // namespace aid::nn
