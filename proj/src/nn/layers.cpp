#include "nn/layers.hpp"

#include <cmath>

namespace aid::nn {

template <typename T>
BasicTensor<T> init_tensor(Shape shape, Init init, std::size_t fan_in, Rng& rng) {
  switch (init) {
    case Init::kFanIn:
      return random_normal<T>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)),
                              rng);
    case Init::kSmall:
      return random_normal<T>(std::move(shape), 0.02, rng);
    case Init::kZero:
      return BasicTensor<T>(std::move(shape));
    case Init::kOnes:
      return BasicTensor<T>(std::move(shape), T{1});
  }
  return BasicTensor<T>(std::move(shape));
}

namespace {

template <typename T>
BasicTensor<T>* grad_for(Grads<T>& grads, ParamId id) {
  return grads.wants(id) ? &grads.buffer(id) : nullptr;
}

}  // namespace

template <typename T>
Linear Linear::create(ParamStore<T>& store, Rng& rng, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias, Init init) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", init_tensor<T>({in, out}, init, in, rng));
  if (with_bias) l.bias = store.add(name + ".bias", BasicTensor<T>({out}));
  return l;
}

template <typename T>
BasicTensor<T> Linear::forward(const ParamStore<T>& store, const BasicTensor<T>& x) const {
  return linear(x, store.value(weight), bias ? &store.value(*bias) : nullptr);
}

template <typename T>
BasicTensor<T> Linear::backward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                const BasicTensor<T>& grad_out, Grads<T>& grads) const {
  return linear_backward(x, store.value(weight), grad_out, grad_for(grads, weight),
                         bias ? grad_for(grads, *bias) : nullptr);
}

template <typename T>
LayerNorm LayerNorm::create(ParamStore<T>& store, const std::string& name, std::size_t dim) {
  LayerNorm n;
  n.dim = dim;
  n.gain = store.add(name + ".gain", BasicTensor<T>({dim}, T{1}));
  n.bias = store.add(name + ".bias", BasicTensor<T>({dim}));
  return n;
}

template <typename T>
BasicTensor<T> LayerNorm::forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                  LayerNormOutput<T>& cache) const {
  cache = layer_norm(x, store.value(gain), store.value(bias), static_cast<T>(eps));
  return cache.y;
}

template <typename T>
BasicTensor<T> LayerNorm::backward(const ParamStore<T>& store, const LayerNormOutput<T>& cache,
                                   const BasicTensor<T>& grad_out, Grads<T>& grads) const {
  return layer_norm_backward(cache, store.value(gain), grad_out, grad_for(grads, gain),
                             grad_for(grads, bias));
}

template <typename T>
MultiHeadAttention MultiHeadAttention::create(ParamStore<T>& store, Rng& rng,
                                              const std::string& name, std::size_t query_dim,
                                              std::size_t context_dim, std::size_t width,
                                              std::size_t heads,
                                              std::optional<std::size_t> out_dim, Init out_init) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention '" + name + "': width " + std::to_string(width) +
                      " not divisible into " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.width = width;
  a.q = Linear::create(store, rng, name + ".q", query_dim, width, false);
  a.k = Linear::create(store, rng, name + ".k", context_dim, width, false);
  a.v = Linear::create(store, rng, name + ".v", context_dim, width, false);
  if (out_dim) a.o = Linear::create(store, rng, name + ".o", width, *out_dim, false, out_init);
  return a;
}

namespace {

template <typename T>
BasicTensor<T> take_block(const BasicTensor<T>& src, std::size_t row0, std::size_t rows,
                          std::size_t col0, std::size_t cols) {
  BasicTensor<T> out({rows, cols});
  const std::size_t stride = src.cols();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(src.data() + (row0 + r) * stride + col0, cols, out.data() + r * cols);
  return out;
}

template <typename T>
void put_block(BasicTensor<T>& dst, const BasicTensor<T>& block, std::size_t row0,
               std::size_t col0) {
  const std::size_t stride = dst.cols(), cols = block.cols();
  for (std::size_t r = 0; r < block.rows(); ++r)
    std::copy_n(block.data() + r * cols, cols, dst.data() + (row0 + r) * stride + col0);
}

}  // namespace

template <typename T>
BasicTensor<T> MultiHeadAttention::forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                           std::size_t m, const BasicTensor<T>& ctx,
                                           std::size_t n, Cache<T>& cache) const {
  if (m == 0 || n == 0) throw DimensionError("attention: empty query or key group");
  if (x.rows() % m != 0 || ctx.rows() % n != 0 || x.rows() / m != ctx.rows() / n) {
    throw DimensionError("attention: query " + shape_str(x.shape()) + " in groups of " +
                         std::to_string(m) + " does not pair with context " +
                         shape_str(ctx.shape()) + " in groups of " + std::to_string(n));
  }
  const std::size_t groups = x.rows() / m, dh = width / heads;
  cache.m = m;
  cache.n = n;
  cache.x = x.reshaped({x.rows(), x.cols()});
  cache.ctx = ctx.reshaped({ctx.rows(), ctx.cols()});
  cache.q = q.forward(store, cache.x);
  cache.k = k.forward(store, cache.ctx);
  cache.v = v.forward(store, cache.ctx);
  cache.merged = BasicTensor<T>({x.rows(), width});
  cache.probs.assign(groups * heads, {});
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t h = 0; h < heads; ++h) {
      auto res = attention(take_block(cache.q, g * m, m, h * dh, dh),
                           take_block(cache.k, g * n, n, h * dh, dh),
                           take_block(cache.v, g * n, n, h * dh, dh), scale);
      put_block(cache.merged, res.out, g * m, h * dh);
      cache.probs[g * heads + h] = std::move(res.probs);
    }
  return o ? o->forward(store, cache.merged) : cache.merged;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> MultiHeadAttention::backward(
    const ParamStore<T>& store, const Cache<T>& cache, const BasicTensor<T>& grad_out,
    Grads<T>& grads) const {
  const std::size_t m = cache.m, n = cache.n, groups = cache.x.rows() / m, dh = width / heads;
  BasicTensor<T> gmerged =
      o ? o->backward(store, cache.merged, grad_out, grads)
        : grad_out.reshaped({grad_out.rows(), grad_out.cols()});
  BasicTensor<T> gq(cache.q.shape()), gk(cache.k.shape()), gv(cache.v.shape());
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t h = 0; h < heads; ++h) {
      auto ag = attention_backward(take_block(cache.q, g * m, m, h * dh, dh),
                                   take_block(cache.k, g * n, n, h * dh, dh),
                                   take_block(cache.v, g * n, n, h * dh, dh),
                                   cache.probs[g * heads + h],
                                   take_block(gmerged, g * m, m, h * dh, dh), scale);
      put_block(gq, ag.q, g * m, h * dh);
      put_block(gk, ag.k, g * n, h * dh);
      put_block(gv, ag.v, g * n, h * dh);
    }
  auto gx = q.backward(store, cache.x, gq, grads);
  auto gctx = k.backward(store, cache.ctx, gk, grads);
  add_inplace(gctx, v.backward(store, cache.ctx, gv, grads));
  return {std::move(gx), std::move(gctx)};
}

template <typename T>
Conv3x3 Conv3x3::create(ParamStore<T>& store, Rng& rng, const std::string& name, std::size_t in,
                        std::size_t out, Init init) {
  Conv3x3 c;
  c.in = in;
  c.out = out;
  c.weight = store.add(name + ".weight", init_tensor<T>({9 * in, out}, init, 9 * in, rng));
  c.bias = store.add(name + ".bias", BasicTensor<T>({out}));
  return c;
}

template <typename T>
BasicTensor<T> Conv3x3::forward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                std::size_t h, std::size_t w) const {
  return conv3x3(x, h, w, store.value(weight), bias ? &store.value(*bias) : nullptr);
}

template <typename T>
BasicTensor<T> Conv3x3::backward(const ParamStore<T>& store, const BasicTensor<T>& x,
                                 std::size_t h, std::size_t w, const BasicTensor<T>& grad_out,
                                 Grads<T>& grads) const {
  return conv3x3_backward(x, h, w, store.value(weight), grad_out, grad_for(grads, weight),
                          bias ? grad_for(grads, *bias) : nullptr);
}

#define AID_INSTANTIATE(T)                                                                     \
  template BasicTensor<T> init_tensor<T>(Shape, Init, std::size_t, Rng&);                      \
  template Linear Linear::create(ParamStore<T>&, Rng&, const std::string&, std::size_t,        \
                                 std::size_t, bool, Init);                                     \
  template BasicTensor<T> Linear::forward(const ParamStore<T>&, const BasicTensor<T>&) const;  \
  template BasicTensor<T> Linear::backward(const ParamStore<T>&, const BasicTensor<T>&,        \
                                           const BasicTensor<T>&, Grads<T>&) const;            \
  template LayerNorm LayerNorm::create(ParamStore<T>&, const std::string&, std::size_t);       \
  template BasicTensor<T> LayerNorm::forward(const ParamStore<T>&, const BasicTensor<T>&,      \
                                             LayerNormOutput<T>&) const;                       \
  template BasicTensor<T> LayerNorm::backward(const ParamStore<T>&, const LayerNormOutput<T>&, \
                                              const BasicTensor<T>&, Grads<T>&) const;         \
  template MultiHeadAttention MultiHeadAttention::create(                                      \
      ParamStore<T>&, Rng&, const std::string&, std::size_t, std::size_t, std::size_t,         \
      std::size_t, std::optional<std::size_t>, Init);                                          \
  template BasicTensor<T> MultiHeadAttention::forward(const ParamStore<T>&,                    \
                                                      const BasicTensor<T>&, std::size_t,      \
                                                      const BasicTensor<T>&, std::size_t,      \
                                                      Cache<T>&) const;                        \
  template std::pair<BasicTensor<T>, BasicTensor<T>> MultiHeadAttention::backward(             \
      const ParamStore<T>&, const Cache<T>&, const BasicTensor<T>&, Grads<T>&) const;          \
  template Conv3x3 Conv3x3::create(ParamStore<T>&, Rng&, const std::string&, std::size_t,      \
                                   std::size_t, Init);                                         \
  template BasicTensor<T> Conv3x3::forward(const ParamStore<T>&, const BasicTensor<T>&,        \
                                           std::size_t, std::size_t) const;                    \
  template BasicTensor<T> Conv3x3::backward(const ParamStore<T>&, const BasicTensor<T>&,       \
                                            std::size_t, std::size_t, const BasicTensor<T>&,   \
                                            Grads<T>&) const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::nn
