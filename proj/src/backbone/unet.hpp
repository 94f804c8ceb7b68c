#pragma once

#include <optional>
#include <type_traits>
#include <vector>

#include "backbone/adapters.hpp"
#include "cond/mcondition.hpp"
#include "nn/blocks.hpp"

namespace aid::backbone {

struct BackboneConfig {
  std::size_t latent_channels = 48;  // c
  std::size_t frames = 8;            // N
  std::size_t height = 8, width = 8;  // latent grid
  std::vector<std::size_t> widths = {64, 128};  // one entry per resolution level
  std::size_t heads = 2;
  std::size_t cond_width = 32;
  std::size_t adapter_divisor = 4;  // bottleneck d_b = level width / divisor
  std::size_t st_kernel = 3;
  std::size_t sigma_features = 32;

  std::size_t input_channels() const { return 2 * latent_channels + 1; }
  std::size_t bottleneck(std::size_t level) const { return widths.at(level) / adapter_divisor; }
  void validate() const;
};

struct AdapterFlags {
  bool spatial = true;
  bool short_term = true;
  bool long_term = true;

  static AdapterFlags none() { return {false, false, false}; }
  bool any() const { return spatial || short_term || long_term; }
};

// [N, 2c+1, h, w]: noisy latents, condition latents (zero on frames >= K), and
// a mask channel that is 1 on frames < K and 0 elsewhere.
template <typename T>
nn::BasicTensor<T> assemble_input(const nn::BasicTensor<T>& noisy, const nn::BasicTensor<T>& cond,
                                  std::size_t k);
// The null visual condition: zero condition latents and a zero mask.
template <typename T>
nn::BasicTensor<T> assemble_unconditional(const nn::BasicTensor<T>& noisy);

// Sinusoidal features of c_noise, `count` entries (sin half, cos half).
template <typename T>
nn::BasicTensor<T> sigma_features(T c_noise, std::size_t count);

struct ResBlock {
  nn::LayerNorm norm1, norm2;
  nn::Conv3x3 conv1, conv2;
  nn::Linear emb;

  template <typename T>
  static ResBlock create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                         std::size_t width, std::size_t emb_dim);

  template <typename T>
  struct Cache {
    nn::LayerNormOutput<T> ln1, ln2;
    nn::BasicTensor<T> act1, h1, act2, emb_in;
    std::size_t h = 0, w = 0;
  };
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& x,
                             std::size_t h, std::size_t w, const nn::BasicTensor<T>& emb_vec,
                             Cache<T>& cache) const;
  // Returns dL/dx and accumulates dL/d(emb_vec) into grad_emb.
  template <typename T>
  nn::BasicTensor<T> backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                              const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads,
                              nn::BasicTensor<T>& grad_emb) const;
};

// Spatio-temporal denoiser F. Tokens are laid out [N, h*w, W]. Each level runs
// a residual conv block, spatial self-attention (with a parallel spatial
// adapter), temporal self-attention, the short- and long-term adapters, and
// per-frame cross-attention into frame_kv(mcond, i). Parameters under `base.`
// form the backbone; `adapter.` and `xattn.` are the added components.
class UNet {
 public:
  template <typename T>
  static UNet create(nn::ParamStore<T>& store, nn::Rng& rng, const BackboneConfig& config,
                     bool with_adapters = true);

  const BackboneConfig& config() const { return config_; }
  bool has_adapters() const { return !spatial_.empty(); }

  template <typename T>
  struct Cache;

  // inp [N, 2c+1, h, w] -> [N, c, h, w]. A null or absent mcond skips
  // cross-attention. Throws ConfigError when flags request absent adapters.
  template <typename T>
  nn::BasicTensor<T> forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& inp,
                             T c_noise, const std::type_identity_t<cond::MCondition<T>>* mcond, AdapterFlags flags,
                             Cache<T>& cache) const;
  // Returns dL/d(inp); accumulates condition gradients into grad_mcond when given.
  template <typename T>
  nn::BasicTensor<T> backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                              const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads,
                              std::type_identity_t<cond::MConditionGrad<T>>* grad_mcond) const;

 private:
  struct Level {
    ResBlock res;
    nn::AttnBlock spatial, temporal, xattn;
    std::optional<nn::Linear> down;  // to the next level
  };
  struct UpLevel {
    nn::Linear proj;  // from level l+1 width to level l width
    ResBlock res;
  };

  BackboneConfig config_;
  nn::Linear in_proj_;
  nn::ParamId frame_pos_ = 0;
  nn::Linear emb1_, emb2_;
  std::vector<Level> levels_;
  std::vector<UpLevel> ups_;  // ups_[l] maps level l+1 back to level l
  nn::LayerNorm out_norm_;
  nn::Linear out_proj_;
  std::vector<SpatialAdapter> spatial_;
  std::vector<ShortTermAdapter> short_term_;
  std::vector<LongTermAdapter> long_term_;
};

template <typename T>
struct UNet::Cache {
  struct LevelCache {
    std::size_t h = 0, w = 0;
    typename ResBlock::Cache<T> res;
    nn::AttnBlock::Cache<T> spatial, temporal, xattn;
    typename SpatialAdapter::Cache<T> sa;
    typename ShortTermAdapter::Cache<T> st;
    typename LongTermAdapter::Cache<T> lt;
    bool sa_on = false, st_on = false, lt_on = false, x_on = false;
    nn::BasicTensor<T> skip, pooled;
  };
  struct UpCache {
    nn::BasicTensor<T> upsampled;
    typename ResBlock::Cache<T> res;
  };
  nn::BasicTensor<T> tokens_in;
  nn::BasicTensor<T> feat, emb_pre, emb_act, emb;
  std::vector<LevelCache> levels;
  std::vector<UpCache> ups;
  nn::LayerNormOutput<T> out_ln;
  const cond::MCondition<T>* mcond = nullptr;
};

}  // namespace aid::backbone
