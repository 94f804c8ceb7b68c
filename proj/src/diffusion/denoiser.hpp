#pragma once

#include "backbone/unet.hpp"
#include "diffusion/edm.hpp"

namespace aid::diffusion {

// Everything the denoiser is conditioned on besides x and sigma.
template <typename T>
struct DenoiseContext {
  const nn::BasicTensor<T>* cond_latents = nullptr;  // [N, c, h, w]; null: visual condition dropped
  std::size_t k = 0;                                 // reference frames
  const cond::MCondition<T>* mcond = nullptr;        // null or empty: text condition dropped
  backbone::AdapterFlags flags{};
};

template <typename T>
struct DenoiseCache {
  typename backbone::UNet::Cache<T> unet;
  EdmCoeffs coeffs;
};

// D(x; sigma) = c_skip x + c_out F(assemble(c_in x), c_noise). Requires sigma > 0.
template <typename T>
nn::BasicTensor<T> denoise(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                           const nn::BasicTensor<T>& x, double sigma, const DenoiseContext<T>& ctx,
                           DenoiseCache<T>* cache = nullptr);

// Returns dL/dx given dL/dD; parameter and condition gradients are accumulated.
template <typename T>
nn::BasicTensor<T> denoise_backward(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                                    const DenoiseCache<T>& cache, const nn::BasicTensor<T>& grad,
                                    nn::Grads<T>& grads,
                                    cond::MConditionGrad<T>* grad_mcond = nullptr);

// (D(x; sigma) - x) / sigma^2, in 64-bit so that x + sigma^2 * score rounds
// back to D exactly for 32-bit models.
template <typename T>
nn::Tensor64 score_from_denoised(const nn::BasicTensor<T>& x, const nn::BasicTensor<T>& denoised,
                                 double sigma);
template <typename T>
nn::Tensor64 score(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                   const nn::BasicTensor<T>& x, double sigma, const DenoiseContext<T>& ctx);

// lambda(sigma) * mean((D(x0 + sigma n; sigma) - x0)^2). When grads is given,
// backpropagates into parameters (and grad_mcond when given).
template <typename T>
double dsm_loss(const backbone::UNet& unet, const nn::ParamStore<T>& store,
                const nn::BasicTensor<T>& x0, double sigma, const nn::BasicTensor<T>& noise,
                const DenoiseContext<T>& ctx, nn::Grads<T>* grads = nullptr,
                cond::MConditionGrad<T>* grad_mcond = nullptr);

}  // namespace aid::diffusion
