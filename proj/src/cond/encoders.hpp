#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "nn/blocks.hpp"

namespace aid::cond {

// Lowercased whitespace tokens hashed into [1, vocab); 0 pads to max_len.
// Words past max_len are dropped.
std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t max_len,
                                    std::size_t vocab);

struct TextEncoderConfig {
  std::size_t width = 32;
  std::size_t max_len = 16;
  std::size_t vocab = 512;
  std::size_t heads = 2;
};

// Token embedding + learned positional embedding + one self-attention block.
// The empty string maps to the all-zero null embedding.
struct TextEncoder {
  TextEncoderConfig config;
  nn::ParamId embed = 0, pos = 0;
  nn::AttnBlock block;

  template <typename T>
  static TextEncoder create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                            TextEncoderConfig config);

  template <typename T>
  struct Cache {
    std::vector<std::uint32_t> ids;
    bool null = true;
    nn::AttnBlock::Cache<T> block;
  };

  // Returns [max_len, width].
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, std::string_view text,
                             Cache<T>& cache) const;
  template <typename T>
  void backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;
};

struct VisualEncoderConfig {
  std::size_t width = 32;
  std::size_t patch = 8;
  std::size_t image = 32;
  std::size_t heads = 2;
  std::size_t tokens() const { return (image / patch) * (image / patch); }
};

// Patchify a [3, H, W] frame, project each patch to the model width, add a
// positional embedding and apply one self-attention block.
struct VisualEncoder {
  VisualEncoderConfig config;
  nn::Linear proj;
  nn::ParamId pos = 0;
  nn::AttnBlock block;

  template <typename T>
  static VisualEncoder create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                              VisualEncoderConfig config);

  template <typename T>
  struct Cache {
    nn::BasicTensor<T> patches;
    nn::AttnBlock::Cache<T> block;
  };

  // Returns [tokens, width].
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& frame,
                             Cache<T>& cache) const;
  template <typename T>
  void backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const;
};

}  // namespace aid::cond
