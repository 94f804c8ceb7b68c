#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nn/ops.hpp"
#include "nn/params.hpp"

namespace aid::nn {

enum class Init {
  kFanIn,  // N(0, 1/fan_in)
  kSmall,  // N(0, 0.02^2)
  kZero,
  kOnes,
};

template <typename T>
BasicTensor<T> init_tensor(Shape shape, Init init, std::size_t fan_in, Rng& rng);

// Layers hold parameter ids, not values, so the same layer object evaluates
// against a float store or its 64-bit copy.
struct Linear {
  ParamId weight = 0;
  std::optional<ParamId> bias;
  std::size_t in = 0, out = 0;

  template <typename T>
  static Linear create(ParamStore<T>& store, Rng& rng, const std::string& name, std::size_t in,
                       std::size_t out, bool with_bias, Init init = Init::kFanIn);

  template <typename T>
  BasicTensor<T> forward(const ParamStore<T>& store, const BasicTensor<T>& x) const;
  template <typename T>
  BasicTensor<T> backward(const ParamStore<T>& store, const BasicTensor<T>& x,
                          const BasicTensor<T>& grad_out, Grads<T>& grads) const;
};

struct LayerNorm {
  ParamId gain = 0, bias = 0;
  std::size_t dim = 0;
  double eps = 1e-5;

  template <typename T>
  static LayerNorm create(ParamStore<T>& store, const std::string& name, std::size_t dim);

  template <typename T>
  BasicTensor<T> forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                         LayerNormOutput<T>& cache) const;
  template <typename T>
  BasicTensor<T> backward(const ParamStore<T>& store, const LayerNormOutput<T>& cache,
                          const BasicTensor<T>& grad_out, Grads<T>& grads) const;
};

// Multi-head scaled dot-product attention over groups of sequences. The query
// input holds G groups of m rows and the context G groups of n rows; group g
// of the queries attends only to group g of the context. Projections carry no
// bias, so an all-zero context contributes exactly zero output.
struct MultiHeadAttention {
  Linear q, k, v;
  std::optional<Linear> o;
  std::size_t heads = 1;
  std::size_t width = 0;  // projected width, split evenly across heads

  template <typename T>
  static MultiHeadAttention create(ParamStore<T>& store, Rng& rng, const std::string& name,
                                   std::size_t query_dim, std::size_t context_dim,
                                   std::size_t width, std::size_t heads,
                                   std::optional<std::size_t> out_dim, Init out_init);

  template <typename T>
  struct Cache {
    BasicTensor<T> x, ctx, q, k, v, merged;
    std::vector<BasicTensor<T>> probs;  // one per (group, head)
    std::size_t m = 0, n = 0;
  };

  template <typename T>
  BasicTensor<T> forward(const ParamStore<T>& store, const BasicTensor<T>& x, std::size_t m,
                         const BasicTensor<T>& ctx, std::size_t n, Cache<T>& cache) const;
  // Returns gradients for the query input and the context.
  template <typename T>
  std::pair<BasicTensor<T>, BasicTensor<T>> backward(const ParamStore<T>& store,
                                                     const Cache<T>& cache,
                                                     const BasicTensor<T>& grad_out,
                                                     Grads<T>& grads) const;
};

struct Conv3x3 {
  ParamId weight = 0;
  std::optional<ParamId> bias;
  std::size_t in = 0, out = 0;

  template <typename T>
  static Conv3x3 create(ParamStore<T>& store, Rng& rng, const std::string& name, std::size_t in,
                        std::size_t out, Init init = Init::kFanIn);

  template <typename T>
  BasicTensor<T> forward(const ParamStore<T>& store, const BasicTensor<T>& x, std::size_t h,
                         std::size_t w) const;
  template <typename T>
  BasicTensor<T> backward(const ParamStore<T>& store, const BasicTensor<T>& x, std::size_t h,
                          std::size_t w, const BasicTensor<T>& grad_out, Grads<T>& grads) const;
};

}  // namespace aid::nn
