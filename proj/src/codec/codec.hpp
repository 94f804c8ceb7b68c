#pragma once

#include <cstdint>

#include "nn/tensor.hpp"

namespace aid::codec {

struct CodecConfig {
  std::size_t patch = 4;
  std::uint64_t seed = 1234;
  double retain_ratio = 1.0;  // fraction of mixed channels kept; 1 is lossless
  bool identity_mix = false;  // skip the orthogonal mixing (tests and debugging)
};

// Fixed invertible stand-in for a learned autoencoder: per-frame space-to-depth
// over PxP patches followed by a seeded orthogonal channel mix. Pixel videos
// are [N, 3, H, W]; latents are [N, c, H/P, W/P] with c = round(3 P^2 r).
class PatchCodec {
 public:
  explicit PatchCodec(CodecConfig config = {});

  const CodecConfig& config() const { return config_; }
  std::size_t patch_channels() const { return 3 * config_.patch * config_.patch; }
  std::size_t latent_channels() const { return latent_channels_; }

  template <typename T>
  nn::BasicTensor<T> encode(const nn::BasicTensor<T>& video) const;
  template <typename T>
  nn::BasicTensor<T> decode(const nn::BasicTensor<T>& latents) const;

  // Row-major [3P^2, 3P^2] orthogonal mixing matrix.
  const std::vector<double>& mixing_matrix() const { return mix_; }

 private:
  CodecConfig config_;
  std::size_t latent_channels_ = 0;
  std::vector<double> mix_;
  std::vector<float> mix_f32_;
};

}  // namespace aid::codec
