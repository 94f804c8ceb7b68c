#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nn/params.hpp"

namespace aid::diffusion {

inline constexpr double kSigmaData = 0.5;

struct EdmCoeffs {
  double c_skip = 0, c_out = 0, c_in = 0, c_noise = 0;
  double weight = 0;  // loss weight lambda(sigma)
};

// Throws ConfigError for sigma < 0. At sigma = 0, c_noise is -inf and the
// weight +inf; both are finite for every sigma > 0.
EdmCoeffs edm_coeffs(double sigma, double sigma_data = kSigmaData);

// ln(sigma) ~ Normal(p_mean, p_std^2).
struct SigmaSampler {
  double p_mean = -1.2;
  double p_std = 1.2;
  double sample(nn::Rng& rng) const;
};

struct SamplerConfig {
  std::size_t steps = 25;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  void validate() const;
};

// sigma_0 > ... > sigma_{n-1} followed by an exact 0.
std::vector<double> karras_grid(const SamplerConfig& config);

struct GuidanceScales {
  double s_v = 1.0;  // frame condition
  double s_t = 5.0;  // text condition
};

// Coefficients of e_uu, e_vu, e_vt in the guided combination
//   e_uu + s_V (e_vu - e_uu) + s_T (e_vt - e_vu)
//   = (1 - s_V) e_uu + (s_V - s_T) e_vu + s_T e_vt.
struct GuidanceWeights {
  double uu, vu, vt;
};
GuidanceWeights guidance_weights(const GuidanceScales& scales);

// Applies the combination in the grouped form above. Terms whose weight is
// exactly zero are skipped (their tensors may then be empty), which makes the
// identities s=(1,1) -> e_vt and s=(0,0) -> e_uu hold bit-for-bit.
template <typename T>
nn::BasicTensor<T> dual_cfg(const nn::BasicTensor<T>& e_uu, const nn::BasicTensor<T>& e_vu,
                            const nn::BasicTensor<T>& e_vt, const GuidanceScales& scales);

template <typename T>
using DenoiseFn = std::function<nn::BasicTensor<T>(const nn::BasicTensor<T>& x, double sigma)>;

// Deterministic Euler integration of dx/dsigma = (x - D(x; sigma)) / sigma
// over the grid, starting from x_init (already at sigma_max scale). Throws
// NumericError naming the step when a non-finite value appears.
template <typename T>
nn::BasicTensor<T> euler_sample(const DenoiseFn<T>& denoiser, nn::BasicTensor<T> x_init,
                                const SamplerConfig& config);

}  // namespace aid::diffusion
