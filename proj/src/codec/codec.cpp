#include "codec/codec.hpp"

#include <Eigen/QR>
#include <cmath>

#include "nn/params.hpp"

namespace aid::codec {

using nn::BasicTensor;
using nn::shape_str;

PatchCodec::PatchCodec(CodecConfig config) : config_(config) {
  if (config_.patch == 0) throw ConfigError("codec: patch size must be positive");
  if (!(config_.retain_ratio > 0.0 && config_.retain_ratio <= 1.0))
    throw ConfigError("codec: retain ratio must lie in (0, 1]");
  const std::size_t d = patch_channels();
  latent_channels_ = static_cast<std::size_t>(std::lround(config_.retain_ratio * double(d)));
  if (latent_channels_ == 0) throw ConfigError("codec: retain ratio keeps no channels");

  mix_.assign(d * d, 0.0);
  if (config_.identity_mix) {
    for (std::size_t i = 0; i < d; ++i) mix_[i * d + i] = 1.0;
  } else {
    nn::Rng rng(config_.seed);
    Eigen::MatrixXd g(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign convention diag(R) > 0 makes the factor unique for a given seed.
    for (std::size_t j = 0; j < d; ++j)
      if (r(j, j) < 0) q.col(j) *= -1.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) mix_[i * d + j] = q(i, j);
  }
  mix_f32_.assign(mix_.begin(), mix_.end());
}

namespace {

template <typename T>
const T* mix_data(const std::vector<double>& m64, const std::vector<float>& m32) {
  if constexpr (std::is_same_v<T, double>) {
    (void)m32;
    return m64.data();
  } else {
    (void)m64;
    return m32.data();
  }
}

}  // namespace

template <typename T>
BasicTensor<T> PatchCodec::encode(const BasicTensor<T>& video) const {
  const std::size_t P = config_.patch;
  if (video.rank() != 4 || video.dim(1) != 3) {
    throw DimensionError("codec encode: expected [N, 3, H, W], got " + shape_str(video.shape()));
  }
  const std::size_t N = video.dim(0), H = video.dim(2), W = video.dim(3);
  if (H % P || W % P) {
    throw ConfigError("codec encode: frame " + std::to_string(H) + "x" + std::to_string(W) +
                      " not divisible by patch " + std::to_string(P));
  }
  const std::size_t h = H / P, w = W / P, d = patch_channels(), c = latent_channels_;
  const T* m = mix_data<T>(mix_, mix_f32_);
  BasicTensor<T> out({N, c, h, w});
  std::vector<T> patch(d);
  for (std::size_t f = 0; f < N; ++f)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t ch = 0; ch < 3; ++ch)
          for (std::size_t dy = 0; dy < P; ++dy)
            for (std::size_t dx = 0; dx < P; ++dx)
              patch[(ch * P + dy) * P + dx] =
                  video[((f * 3 + ch) * H + i * P + dy) * W + j * P + dx];
        for (std::size_t o = 0; o < c; ++o) {
          T acc = 0;
          for (std::size_t k = 0; k < d; ++k) acc += m[o * d + k] * patch[k];
          out[((f * c + o) * h + i) * w + j] = acc;
        }
      }
  return out;
}

template <typename T>
BasicTensor<T> PatchCodec::decode(const BasicTensor<T>& latents) const {
  const std::size_t P = config_.patch, d = patch_channels(), c = latent_channels_;
  if (latents.rank() != 4 || latents.dim(1) != c) {
    throw DimensionError("codec decode: expected [N, " + std::to_string(c) + ", h, w], got " +
                         shape_str(latents.shape()));
  }
  const std::size_t N = latents.dim(0), h = latents.dim(2), w = latents.dim(3);
  const std::size_t H = h * P, W = w * P;
  const T* m = mix_data<T>(mix_, mix_f32_);
  BasicTensor<T> out({N, 3, H, W});
  std::vector<T> z(c);
  for (std::size_t f = 0; f < N; ++f)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t o = 0; o < c; ++o) z[o] = latents[((f * c + o) * h + i) * w + j];
        for (std::size_t k = 0; k < d; ++k) {
          T acc = 0;
          for (std::size_t o = 0; o < c; ++o) acc += m[o * d + k] * z[o];
          const std::size_t ch = k / (P * P), dy = (k / P) % P, dx = k % P;
          out[((f * 3 + ch) * H + i * P + dy) * W + j * P + dx] = acc;
        }
      }
  return out;
}

template BasicTensor<float> PatchCodec::encode(const BasicTensor<float>&) const;
template BasicTensor<double> PatchCodec::encode(const BasicTensor<double>&) const;
template BasicTensor<float> PatchCodec::decode(const BasicTensor<float>&) const;
template BasicTensor<double> PatchCodec::decode(const BasicTensor<double>&) const;

}  // namespace aid::codec
