#include "diffusion/edm.hpp"

#include <cmath>
#include <limits>

namespace aid::diffusion {

EdmCoeffs edm_coeffs(double sigma, double sigma_data) {
  if (!(sigma >= 0.0)) throw ConfigError("edm_coeffs: sigma must be >= 0, got " + std::to_string(sigma));
  if (!(sigma_data > 0.0)) throw ConfigError("edm_coeffs: sigma_data must be positive");
  const double s2 = sigma * sigma, d2 = sigma_data * sigma_data, root = std::sqrt(s2 + d2);
  EdmCoeffs c;
  c.c_skip = d2 / (s2 + d2);
  c.c_out = sigma * sigma_data / root;
  c.c_in = 1.0 / root;
  c.c_noise = sigma > 0 ? std::log(sigma) / 4.0 : -std::numeric_limits<double>::infinity();
  c.weight = sigma > 0 ? (s2 + d2) / (s2 * d2) : std::numeric_limits<double>::infinity();
  return c;
}

double SigmaSampler::sample(nn::Rng& rng) const { return std::exp(p_mean + p_std * rng.normal()); }

void SamplerConfig::validate() const {
  if (steps == 0) throw ConfigError("sampler: steps must be at least 1");
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
    throw ConfigError("sampler: need 0 < sigma_min < sigma_max");
  if (!(rho > 0.0)) throw ConfigError("sampler: rho must be positive");
}

std::vector<double> karras_grid(const SamplerConfig& config) {
  config.validate();
  const std::size_t n = config.steps;
  std::vector<double> grid;
  grid.reserve(n + 1);
  const double a = std::pow(config.sigma_max, 1.0 / config.rho);
  const double b = std::pow(config.sigma_min, 1.0 / config.rho);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : double(i) / double(n - 1);
    grid.push_back(std::pow(a + t * (b - a), config.rho));
  }
  if (n >= 2) {
    grid.front() = config.sigma_max;
    grid[n - 1] = config.sigma_min;
  }
  grid.push_back(0.0);
  return grid;
}

GuidanceWeights guidance_weights(const GuidanceScales& s) {
  return {1.0 - s.s_v, s.s_v - s.s_t, s.s_t};
}

template <typename T>
nn::BasicTensor<T> dual_cfg(const nn::BasicTensor<T>& e_uu, const nn::BasicTensor<T>& e_vu,
                            const nn::BasicTensor<T>& e_vt, const GuidanceScales& scales) {
  if (!std::isfinite(scales.s_v) || !std::isfinite(scales.s_t))
    throw ConfigError("dual_cfg: guidance scales must be finite");
  const auto w = guidance_weights(scales);
  const std::pair<double, const nn::BasicTensor<T>*> terms[3] = {
      {w.uu, &e_uu}, {w.vu, &e_vu}, {w.vt, &e_vt}};
  const nn::BasicTensor<T>* first = nullptr;
  for (const auto& [weight, t] : terms) {
    if (weight == 0.0) continue;
    if (first && t->shape() != first->shape())
      throw DimensionError("dual_cfg: branch shapes differ: " + nn::shape_str(first->shape()) +
                           " vs " + nn::shape_str(t->shape()));
    if (!first) first = t;
  }
  if (!first) throw ConfigError("dual_cfg: all guidance weights are zero");  // weights sum to 1
  nn::BasicTensor<T> out(first->shape());
  bool started = false;
  for (const auto& [weight, t] : terms) {
    if (weight == 0.0) continue;
    const T c = static_cast<T>(weight);
    if (!started) {
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c == T{1} ? (*t)[i] : c * (*t)[i];
      started = true;
    } else {
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c * (*t)[i];
    }
  }
  return out;
}

template <typename T>
nn::BasicTensor<T> euler_sample(const DenoiseFn<T>& denoiser, nn::BasicTensor<T> x,
                                const SamplerConfig& config) {
  const auto grid = karras_grid(config);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double s = grid[i], next = grid[i + 1];
    const auto d = denoiser(x, s);
    nn::require_same_shape(d, x, "euler_sample");
    const double ratio = (next - s) / s;
    for (std::size_t k = 0; k < x.numel(); ++k)
      x[k] = static_cast<T>(double(x[k]) + ratio * (double(x[k]) - double(d[k])));
    if (!nn::all_finite(x))
      throw NumericError("euler_sample: non-finite state after step " + std::to_string(i) +
                         " (sigma " + std::to_string(s) + " -> " + std::to_string(next) + ")");
  }
  return x;
}

template nn::BasicTensor<float> dual_cfg(const nn::BasicTensor<float>&,
                                         const nn::BasicTensor<float>&,
                                         const nn::BasicTensor<float>&, const GuidanceScales&);
template nn::BasicTensor<double> dual_cfg(const nn::BasicTensor<double>&,
                                          const nn::BasicTensor<double>&,
                                          const nn::BasicTensor<double>&, const GuidanceScales&);
template nn::BasicTensor<float> euler_sample(const DenoiseFn<float>&, nn::BasicTensor<float>,
                                             const SamplerConfig&);
template nn::BasicTensor<double> euler_sample(const DenoiseFn<double>&, nn::BasicTensor<double>,
                                              const SamplerConfig&);

}  // namespace aid::diffusion
