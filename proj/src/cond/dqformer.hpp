#pragma once

#include <vector>

#include "nn/blocks.hpp"

namespace aid::cond {

struct DQFormerConfig {
  std::size_t width = 32;
  std::size_t frames = 8;            // N
  std::size_t tokens_per_frame = 8;  // N_t
  std::size_t heads = 2;
  std::size_t depth = 1;  // layers per branch
  std::size_t ffn_mult = 2;
  std::size_t queries() const { return frames * tokens_per_frame; }
};

// Dual-branch query transformer. Every residual block is pre-norm with a
// zero-initialized output projection, so at initialization the multimodal
// branch returns t1 and the decomposed branch returns the query bank.
//
//   multimodal: x = t1;   x += SelfAttn(x); x += CrossAttn(x, v);  x += FFN(x)
//   decomposed: q = Q;    q += SelfAttn(q); q += CrossAttn(q, t1);
//                         q += CrossAttn(q, t2 or t1);            q += FFN(q)
struct DQFormer {
  struct MultimodalLayer {
    nn::AttnBlock self, cross;
    nn::FfnBlock ffn;
  };
  struct DecomposedLayer {
    nn::AttnBlock self, cross_instruction, cross_states;
    nn::FfnBlock ffn;
  };

  DQFormerConfig config;
  nn::ParamId query = 0;  // [N * N_t, C], frame i owns rows i*N_t .. (i+1)*N_t
  std::vector<MultimodalLayer> multimodal_layers;
  std::vector<DecomposedLayer> decomposed_layers;

  template <typename T>
  static DQFormer create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                         DQFormerConfig config);

  template <typename T>
  struct MultimodalCache {
    struct Layer {
      nn::AttnBlock::Cache<T> self, cross;
      nn::FfnBlock::Cache<T> ffn;
    };
    std::vector<Layer> layers;
  };
  template <typename T>
  struct DecomposedCache {
    struct Layer {
      nn::AttnBlock::Cache<T> self, cross_instruction, cross_states;
      nn::FfnBlock::Cache<T> ffn;
    };
    std::vector<Layer> layers;
    bool states_fallback = false;
  };

  // t1 [L_t, C], v [L_v, C] -> [L_t, C].
  template <typename T>
  nn::BasicTensor<T> multimodal(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& t1,
                                const nn::BasicTensor<T>& v, MultimodalCache<T>& cache) const;
  // Returns (dL/dt1, dL/dv).
  template <typename T>
  std::pair<nn::BasicTensor<T>, nn::BasicTensor<T>> multimodal_backward(
      const nn::ParamStore<T>& store, const MultimodalCache<T>& cache,
      const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;

  // t1 [L_t, C], t2 [M L_t, C] or empty (then t1 stands in) -> [N N_t, C].
  template <typename T>
  nn::BasicTensor<T> decomposed(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& t1,
                                const nn::BasicTensor<T>& t2, DecomposedCache<T>& cache) const;
  // Returns (dL/dt1, dL/dt2); the second is empty when t2 was empty.
  template <typename T>
  std::pair<nn::BasicTensor<T>, nn::BasicTensor<T>> decomposed_backward(
      const nn::ParamStore<T>& store, const DecomposedCache<T>& cache,
      const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;
};

}  // namespace aid::cond
