#include "backbone/adapters.hpp"

namespace aid::backbone {

template <typename T>
nn::BasicTensor<T> tokens_to_cnhw(const nn::BasicTensor<T>& x, std::size_t h, std::size_t w) {
  const std::size_t N = x.dim(0), S = x.dim(1), C = x.dim(2);
  if (S != h * w) throw DimensionError("token grid " + nn::shape_str(x.shape()) + " is not " +
                                       std::to_string(h) + "x" + std::to_string(w));
  nn::BasicTensor<T> out({C, N, h, w});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t c = 0; c < C; ++c) out[(c * N + n) * S + s] = x[(n * S + s) * C + c];
  return out;
}

template <typename T>
nn::BasicTensor<T> cnhw_to_tokens(const nn::BasicTensor<T>& x) {
  const std::size_t C = x.dim(0), N = x.dim(1), S = x.dim(2) * x.dim(3);
  nn::BasicTensor<T> out({N, S, C});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t s = 0; s < S; ++s) out[(n * S + s) * C + c] = x[(c * N + n) * S + s];
  return out;
}

template <typename T>
SpatialAdapter SpatialAdapter::create(nn::ParamStore<T>& store, nn::Rng& rng,
                                      const std::string& name, std::size_t width,
                                      std::size_t bottleneck) {
  return {nn::Linear::create(store, rng, name + ".down", width, bottleneck, true, nn::Init::kSmall),
          nn::Linear::create(store, rng, name + ".up", bottleneck, width, true, nn::Init::kZero)};
}

template <typename T>
nn::BasicTensor<T> SpatialAdapter::forward(const nn::ParamStore<T>& store,
                                           const nn::BasicTensor<T>& x, Cache<T>& cache) const {
  cache.x = x;
  cache.pre = down.forward(store, x);
  cache.act = nn::gelu(cache.pre);
  return up.forward(store, cache.act);
}

template <typename T>
nn::BasicTensor<T> SpatialAdapter::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                                            const nn::BasicTensor<T>& grad_out,
                                            nn::Grads<T>& grads) const {
  const auto gact = up.backward(store, cache.act, grad_out, grads);
  return down.backward(store, cache.x, nn::gelu_backward(cache.pre, gact), grads);
}

template <typename T>
ShortTermAdapter ShortTermAdapter::create(nn::ParamStore<T>& store, nn::Rng& rng,
                                          const std::string& name, std::size_t width,
                                          std::size_t bottleneck, std::size_t kt) {
  if (kt % 2 == 0) throw ConfigError("short-term adapter kernel must have odd length");
  ShortTermAdapter a;
  a.bottleneck = bottleneck;
  a.down = nn::Linear::create(store, rng, name + ".down", width, bottleneck, true, nn::Init::kSmall);
  a.kernel = store.add(name + ".kernel",
                       nn::init_tensor<T>({bottleneck, kt, 1, 1}, nn::Init::kFanIn, kt, rng));
  a.up = nn::Linear::create(store, rng, name + ".up", bottleneck, width, true, nn::Init::kZero);
  return a;
}

template <typename T>
nn::BasicTensor<T> ShortTermAdapter::forward(const nn::ParamStore<T>& store,
                                             const nn::BasicTensor<T>& x, std::size_t h,
                                             std::size_t w, Cache<T>& cache) const {
  cache.x = x;
  cache.h = h;
  cache.w = w;
  cache.inner = tokens_to_cnhw(down.forward(store, x), h, w);
  cache.mixed = nn::depthwise_conv3d(cache.inner, store.value(kernel));
  return up.forward(store, cnhw_to_tokens(cache.mixed));
}

template <typename T>
nn::BasicTensor<T> ShortTermAdapter::backward(const nn::ParamStore<T>& store,
                                              const Cache<T>& cache,
                                              const nn::BasicTensor<T>& grad_out,
                                              nn::Grads<T>& grads) const {
  const auto gmixed = tokens_to_cnhw(
      up.backward(store, cnhw_to_tokens(cache.mixed), grad_out, grads), cache.h, cache.w);
  const auto ginner = nn::depthwise_conv3d_backward(
      cache.inner, store.value(kernel), gmixed, grads.wants(kernel) ? &grads.buffer(kernel) : nullptr);
  return down.backward(store, cache.x, cnhw_to_tokens(ginner), grads);
}

template <typename T>
LongTermAdapter LongTermAdapter::create(nn::ParamStore<T>& store, nn::Rng& rng,
                                        const std::string& name, std::size_t width,
                                        std::size_t bottleneck) {
  LongTermAdapter a;
  a.down = nn::Linear::create(store, rng, name + ".down", width, bottleneck, true, nn::Init::kSmall);
  a.attn = nn::MultiHeadAttention::create(store, rng, name + ".attn", bottleneck, bottleneck,
                                          bottleneck, 1, std::nullopt, nn::Init::kZero);
  a.up = nn::Linear::create(store, rng, name + ".up", bottleneck, width, true, nn::Init::kZero);
  return a;
}

template <typename T>
nn::BasicTensor<T> LongTermAdapter::forward(const nn::ParamStore<T>& store,
                                            const nn::BasicTensor<T>& x, Cache<T>& cache) const {
  const std::size_t N = x.dim(0);
  cache.xt = nn::swap01(x);
  cache.inner = down.forward(store, cache.xt);
  const auto flat = cache.inner.reshaped({cache.inner.numel() / cache.inner.cols(), cache.inner.cols()});
  cache.mixed = attn.forward(store, flat, N, flat, N, cache.att);
  auto y = up.forward(store, cache.mixed);
  y.reshape({x.dim(1), N, x.dim(2)});
  return nn::swap01(y);
}

template <typename T>
nn::BasicTensor<T> LongTermAdapter::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                                             const nn::BasicTensor<T>& grad_out,
                                             nn::Grads<T>& grads) const {
  const auto gy = nn::swap01(grad_out);
  const auto gmixed = up.backward(store, cache.mixed, gy.reshaped(
      {gy.numel() / gy.dim(2), gy.dim(2)}), grads);
  auto [gq, gctx] = attn.backward(store, cache.att, gmixed, grads);
  nn::add_inplace(gq, gctx);
  auto gxt = down.backward(store, cache.xt, gq.reshaped(cache.inner.shape()), grads);
  return nn::swap01(gxt);
}

#define AID_INSTANTIATE(T)                                                                       \
  template nn::BasicTensor<T> tokens_to_cnhw(const nn::BasicTensor<T>&, std::size_t,           \
                                             std::size_t);                                      \
  template nn::BasicTensor<T> cnhw_to_tokens(const nn::BasicTensor<T>&);                        \
  template SpatialAdapter SpatialAdapter::create(nn::ParamStore<T>&, nn::Rng&,                  \
                                                 const std::string&, std::size_t, std::size_t); \
  template nn::BasicTensor<T> SpatialAdapter::forward(const nn::ParamStore<T>&,                 \
                                                      const nn::BasicTensor<T>&, Cache<T>&)     \
      const;                                                                                    \
  template nn::BasicTensor<T> SpatialAdapter::backward(                                         \
      const nn::ParamStore<T>&, const Cache<T>&, const nn::BasicTensor<T>&, nn::Grads<T>&)      \
      const;                                                                                    \
  template ShortTermAdapter ShortTermAdapter::create(nn::ParamStore<T>&, nn::Rng&,              \
                                                     const std::string&, std::size_t,           \
                                                     std::size_t, std::size_t);                 \
  template nn::BasicTensor<T> ShortTermAdapter::forward(                                        \
      const nn::ParamStore<T>&, const nn::BasicTensor<T>&, std::size_t, std::size_t, Cache<T>&) \
      const;                                                                                    \
  template nn::BasicTensor<T> ShortTermAdapter::backward(                                       \
      const nn::ParamStore<T>&, const Cache<T>&, const nn::BasicTensor<T>&, nn::Grads<T>&)      \
      const;                                                                                    \
  template LongTermAdapter LongTermAdapter::create(nn::ParamStore<T>&, nn::Rng&,                \
                                                   const std::string&, std::size_t,             \
                                                   std::size_t);                                \
  template nn::BasicTensor<T> LongTermAdapter::forward(const nn::ParamStore<T>&,                \
                                                       const nn::BasicTensor<T>&, Cache<T>&)    \
      const;                                                                                    \
  template nn::BasicTensor<T> LongTermAdapter::backward(                                        \
      const nn::ParamStore<T>&, const Cache<T>&, const nn::BasicTensor<T>&, nn::Grads<T>&)      \
      const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::backbone
