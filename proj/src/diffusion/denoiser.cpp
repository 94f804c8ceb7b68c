#include "diffusion/denoiser.hpp"

#include <cmath>

namespace aid::diffusion {

namespace {

template <typename T>
nn::BasicTensor<T> network_input(const nn::BasicTensor<T>& scaled, const DenoiseContext<T>& ctx) {
  if (!ctx.cond_latents) return backbone::assemble_unconditional(scaled);
  return backbone::assemble_input(scaled, *ctx.cond_latents, ctx.k);
}

}  // namespace

template <typename T>
nn::BasicTensor<T> denoise(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                           const nn::BasicTensor<T>& x, double sigma, const DenoiseContext<T>& ctx,
                           DenoiseCache<T>* cache) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ConfigError("denoise: sigma must be positive and finite, got " + std::to_string(sigma));
  const auto c = edm_coeffs(sigma);
  nn::BasicTensor<T> scaled = x;
  nn::scale_inplace(scaled, static_cast<T>(c.c_in));
  typename backbone::UNet::Cache<T> local;
  auto& uc = cache ? cache->unet : local;
  if (cache) cache->coeffs = c;
  const auto f = unet.forward(store, network_input(scaled, ctx), static_cast<T>(c.c_noise),
                              ctx.mcond, ctx.flags, uc);
  nn::BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(c.c_skip * double(x[i]) + c.c_out * double(f[i]));
  return out;
}

template <typename T>
nn::BasicTensor<T> denoise_backward(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                                    const DenoiseCache<T>& cache, const nn::BasicTensor<T>& grad,
                                    nn::Grads<T>& grads, cond::MConditionGrad<T>* grad_mcond) {
  const auto& c = cache.coeffs;
  nn::BasicTensor<T> gf = grad;
  nn::scale_inplace(gf, static_cast<T>(c.c_out));
  const auto ginp = unet.backward(store, cache.unet, gf, grads, grad_mcond);
  // Only the noisy channels of the assembled input depend on x.
  const std::size_t n = grad.shape()[0], ch = grad.shape()[1], hw = grad.numel() / (n * ch);
  const std::size_t in_ch = ginp.shape()[1];
  nn::BasicTensor<T> gx(grad.shape());
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t k = 0; k < ch * hw; ++k) {
      const std::size_t i = f * ch * hw + k;
      gx[i] = static_cast<T>(c.c_skip * double(grad[i]) +
                             c.c_in * double(ginp[f * in_ch * hw + k]));
    }
  return gx;
}

template <typename T>
nn::Tensor64 score_from_denoised(const nn::BasicTensor<T>& x, const nn::BasicTensor<T>& denoised,
                                 double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("score: undefined at sigma = " + std::to_string(sigma));
  nn::require_same_shape(x, denoised, "score");
  const double s2 = sigma * sigma;
  nn::Tensor64 out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (double(denoised[i]) - double(x[i])) / s2;
  return out;
}

template <typename T>
nn::Tensor64 score(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                   const nn::BasicTensor<T>& x, double sigma, const DenoiseContext<T>& ctx) {
  if (!(sigma > 0.0)) throw ConfigError("score: undefined at sigma = " + std::to_string(sigma));
  return score_from_denoised(x, denoise(unet, store, x, sigma, ctx), sigma);
}

template <typename T>
double dsm_loss(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                const nn::BasicTensor<T>& x0, double sigma, const nn::BasicTensor<T>& noise,
                const DenoiseContext<T>& ctx, nn::Grads<T>* grads,
                cond::MConditionGrad<T>* grad_mcond) {
  nn::require_same_shape(x0, noise, "dsm_loss");
  nn::BasicTensor<T> x(x0.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    x[i] = static_cast<T>(double(x0[i]) + sigma * double(noise[i]));
  DenoiseCache<T> cache;
  const auto d = denoise(unet, store, x, sigma, ctx, grads ? &cache : nullptr);
  const double weight = edm_coeffs(sigma).weight;
  const double inv_n = 1.0 / double(x0.numel());
  double sum = 0;
  for (std::size_t i = 0; i < d.numel(); ++i) {
    const double r = double(d[i]) - double(x0[i]);
    sum += r * r;
  }
  if (grads) {
    nn::BasicTensor<T> gd(d.shape());
    for (std::size_t i = 0; i < d.numel(); ++i)
      gd[i] = static_cast<T>(2.0 * weight * inv_n * (double(d[i]) - double(x0[i])));
    denoise_backward(unet, store, cache, gd, *grads, grad_mcond);
  }
  return weight * sum * inv_n;
}

#define AID_DIFFUSION_INSTANTIATE(T)                                                            \
  template nn::BasicTensor<T> denoise(const backbone::UNet&, const nn::ParamStore<T>&,          \
                                      const nn::BasicTensor<T>&, double,                        \
                                      const DenoiseContext<T>&, DenoiseCache<T>*);              \
  template nn::BasicTensor<T> denoise_backward(const backbone::UNet&, const nn::ParamStore<T>&, \
                                               const DenoiseCache<T>&, const nn::BasicTensor<T>&, \
                                               nn::Grads<T>&, cond::MConditionGrad<T>*);        \
  template nn::Tensor64 score_from_denoised(const nn::BasicTensor<T>&, const nn::BasicTensor<T>&, \
                                            double);                                            \
  template nn::Tensor64 score(const backbone::UNet&, const nn::ParamStore<T>&,                  \
                              const nn::BasicTensor<T>&, double, const DenoiseContext<T>&);     \
  template double dsm_loss(const backbone::UNet&, const nn::ParamStore<T>&,                     \
                           const nn::BasicTensor<T>&, double, const nn::BasicTensor<T>&,        \
                           const DenoiseContext<T>&, nn::Grads<T>*, cond::MConditionGrad<T>*);

AID_DIFFUSION_INSTANTIATE(float)
AID_DIFFUSION_INSTANTIATE(double)

}  // namespace aid::diffusion
