#include "nn/blocks.hpp"

namespace aid::nn {

template <typename T>
AttnBlock AttnBlock::create(ParamStore<T>& store, Rng& rng, const std::string& name,
                            std::size_t dim, std::size_t context_dim, std::size_t heads,
                            bool self, Init out_init) {
  AttnBlock b;
  b.self = self;
  b.norm = LayerNorm::create(store, name + ".norm", dim);
  b.attn = MultiHeadAttention::create(store, rng, name + ".attn", dim, self ? dim : context_dim,
                                      dim, heads, dim, out_init);
  return b;
}

template <typename T>
BasicTensor<T> AttnBlock::forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                  std::size_t m, const BasicTensor<T>* ctx, std::size_t n,
                                  Cache<T>& cache) const {
  const auto h = norm.forward(store, x, cache.ln);
  if (!self && !ctx) throw DimensionError("cross-attention block needs a context");
  auto y = self ? attn.forward(store, h, m, h, m, cache.att)
                : attn.forward(store, h, m, *ctx, n, cache.att);
  y.reshape(x.shape());
  add_inplace(y, x);
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> AttnBlock::backward(const ParamStore<T>& store,
                                                              const Cache<T>& cache,
                                                              const BasicTensor<T>& grad_out,
                                                              Grads<T>& grads) const {
  auto [gh, gctx] = attn.backward(store, cache.att, grad_out, grads);
  if (self) {
    add_inplace(gh, gctx);
    gctx = BasicTensor<T>();
  }
  auto gx = norm.backward(store, cache.ln, gh.reshaped(grad_out.shape()), grads);
  add_inplace(gx, grad_out);
  return {std::move(gx), std::move(gctx)};
}

template <typename T>
FfnBlock FfnBlock::create(ParamStore<T>& store, Rng& rng, const std::string& name,
                          std::size_t dim, std::size_t hidden, Init out_init) {
  FfnBlock b;
  b.norm = LayerNorm::create(store, name + ".norm", dim);
  b.up = Linear::create(store, rng, name + ".up", dim, hidden, true);
  b.down = Linear::create(store, rng, name + ".down", hidden, dim, true, out_init);
  return b;
}

template <typename T>
BasicTensor<T> FfnBlock::forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                 Cache<T>& cache) const {
  const auto h = norm.forward(store, x, cache.ln);
  cache.pre = up.forward(store, h);
  cache.act = gelu(cache.pre);
  auto y = down.forward(store, cache.act);
  add_inplace(y, x);
  return y;
}

template <typename T>
BasicTensor<T> FfnBlock::backward(const ParamStore<T>& store, const Cache<T>& cache,
                                  const BasicTensor<T>& grad_out, Grads<T>& grads) const {
  const auto gact = down.backward(store, cache.act, grad_out, grads);
  const auto gpre = gelu_backward(cache.pre, gact);
  const auto gh = up.backward(store, cache.ln.y, gpre, grads);
  auto gx = norm.backward(store, cache.ln, gh, grads);
  add_inplace(gx, grad_out);
  return gx;
}

#define AID_INSTANTIATE(T)                                                                     \
  template AttnBlock AttnBlock::create(ParamStore<T>&, Rng&, const std::string&, std::size_t, \
                                       std::size_t, std::size_t, bool, Init);                 \
  template BasicTensor<T> AttnBlock::forward(const ParamStore<T>&, const BasicTensor<T>&,     \
                                             std::size_t, const BasicTensor<T>*, std::size_t, \
                                             Cache<T>&) const;                                \
  template std::pair<BasicTensor<T>, BasicTensor<T>> AttnBlock::backward(                     \
      const ParamStore<T>&, const Cache<T>&, const BasicTensor<T>&, Grads<T>&) const;         \
  template FfnBlock FfnBlock::create(ParamStore<T>&, Rng&, const std::string&, std::size_t,   \
                                     std::size_t, Init);                                      \
  template BasicTensor<T> FfnBlock::forward(const ParamStore<T>&, const BasicTensor<T>&,      \
                                            Cache<T>&) const;                                 \
  template BasicTensor<T> FfnBlock::backward(const ParamStore<T>&, const Cache<T>&,           \
                                             const BasicTensor<T>&, Grads<T>&) const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::nn
