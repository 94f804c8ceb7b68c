#include "cond/dqformer.hpp"

namespace aid::cond {

namespace {

template <typename T>
void require_width(const nn::BasicTensor<T>& x, std::size_t width, const char* what) {
  if (x.rank() != 2 || x.cols() != width || x.rows() == 0)
    throw DimensionError(std::string("dqformer: ") + what + " must be [rows, " +
                         std::to_string(width) + "], got " + nn::shape_str(x.shape()));
}

}  // namespace

template <typename T>
DQFormer DQFormer::create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                          DQFormerConfig config) {
  if (config.depth == 0 || config.queries() == 0)
    throw ConfigError("dqformer: depth, frames and tokens per frame must be positive");
  DQFormer d;
  d.config = config;
  const std::size_t C = config.width, H = config.heads, F = config.ffn_mult * C;
  const auto zero = nn::Init::kZero;
  d.query = store.add(name + ".query", nn::random_normal<T>({config.queries(), C}, 1.0, rng));
  for (std::size_t l = 0; l < config.depth; ++l) {
    const std::string mm = name + ".mm.l" + std::to_string(l);
    d.multimodal_layers.push_back(
        {nn::AttnBlock::create(store, rng, mm + ".self", C, C, H, true, zero),
         nn::AttnBlock::create(store, rng, mm + ".cross", C, C, H, false, zero),
         nn::FfnBlock::create(store, rng, mm + ".ffn", C, F, zero)});
  }
  for (std::size_t l = 0; l < config.depth; ++l) {
    const std::string de = name + ".de.l" + std::to_string(l);
    d.decomposed_layers.push_back(
        {nn::AttnBlock::create(store, rng, de + ".self", C, C, H, true, zero),
         nn::AttnBlock::create(store, rng, de + ".cross_t1", C, C, H, false, zero),
         nn::AttnBlock::create(store, rng, de + ".cross_t2", C, C, H, false, zero),
         nn::FfnBlock::create(store, rng, de + ".ffn", C, F, zero)});
  }
  return d;
}

template <typename T>
nn::BasicTensor<T> DQFormer::multimodal(const nn::ParamStore<T>& store,
                                        const nn::BasicTensor<T>& t1, const nn::BasicTensor<T>& v,
                                        MultimodalCache<T>& cache) const {
  require_width(t1, config.width, "t1");
  require_width(v, config.width, "v");
  const std::size_t m = t1.rows(), n = v.rows();
  cache.layers.assign(multimodal_layers.size(), {});
  nn::BasicTensor<T> x = t1;
  for (std::size_t l = 0; l < multimodal_layers.size(); ++l) {
    const auto& L = multimodal_layers[l];
    auto& c = cache.layers[l];
    x = L.self.forward(store, x, m, static_cast<const nn::BasicTensor<T>*>(nullptr), m, c.self);
    x = L.cross.forward(store, x, m, &v, n, c.cross);
    x = L.ffn.forward(store, x, c.ffn);
  }
  return x;
}

template <typename T>
std::pair<nn::BasicTensor<T>, nn::BasicTensor<T>> DQFormer::multimodal_backward(
    const nn::ParamStore<T>& store, const MultimodalCache<T>& cache,
    const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const {
  nn::BasicTensor<T> g = grad_out, gv;
  for (std::size_t l = multimodal_layers.size(); l-- > 0;) {
    const auto& L = multimodal_layers[l];
    const auto& c = cache.layers[l];
    g = L.ffn.backward(store, c.ffn, g, grads);
    auto [gx, gctx] = L.cross.backward(store, c.cross, g, grads);
    if (gv.empty()) gv = std::move(gctx);
    else nn::add_inplace(gv, gctx);
    g = L.self.backward(store, c.self, gx, grads).first;
  }
  return {std::move(g), std::move(gv)};
}

template <typename T>
nn::BasicTensor<T> DQFormer::decomposed(const nn::ParamStore<T>& store,
                                        const nn::BasicTensor<T>& t1,
                                        const nn::BasicTensor<T>& t2,
                                        DecomposedCache<T>& cache) const {
  require_width(t1, config.width, "t1");
  cache.states_fallback = t2.empty();
  const auto& states = cache.states_fallback ? t1 : t2;
  require_width(states, config.width, "t2");
  const std::size_t m = config.queries();
  cache.layers.assign(decomposed_layers.size(), {});
  nn::BasicTensor<T> q = store.value(query);
  for (std::size_t l = 0; l < decomposed_layers.size(); ++l) {
    const auto& L = decomposed_layers[l];
    auto& c = cache.layers[l];
    q = L.self.forward(store, q, m, static_cast<const nn::BasicTensor<T>*>(nullptr), m, c.self);
    q = L.cross_instruction.forward(store, q, m, &t1, t1.rows(), c.cross_instruction);
    q = L.cross_states.forward(store, q, m, &states, states.rows(), c.cross_states);
    q = L.ffn.forward(store, q, c.ffn);
  }
  return q;
}

template <typename T>
std::pair<nn::BasicTensor<T>, nn::BasicTensor<T>> DQFormer::decomposed_backward(
    const nn::ParamStore<T>& store, const DecomposedCache<T>& cache,
    const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const {
  nn::BasicTensor<T> g = grad_out, gt1, gt2;
  auto acc = [](nn::BasicTensor<T>& dst, nn::BasicTensor<T>&& src) {
    if (dst.empty()) dst = std::move(src);
    else nn::add_inplace(dst, src);
  };
  for (std::size_t l = decomposed_layers.size(); l-- > 0;) {
    const auto& L = decomposed_layers[l];
    const auto& c = cache.layers[l];
    g = L.ffn.backward(store, c.ffn, g, grads);
    auto [g2, gs] = L.cross_states.backward(store, c.cross_states, g, grads);
    acc(cache.states_fallback ? gt1 : gt2, std::move(gs));
    auto [g1, gi] = L.cross_instruction.backward(store, c.cross_instruction, g2, grads);
    acc(gt1, std::move(gi));
    g = L.self.backward(store, c.self, g1, grads).first;
  }
  if (grads.wants(query)) nn::add_inplace(grads.buffer(query), g);
  return {std::move(gt1), std::move(gt2)};
}

#define AID_INSTANTIATE(T)                                                                   \
  template DQFormer DQFormer::create(nn::ParamStore<T>&, nn::Rng&, const std::string&,      \
                                     DQFormerConfig);                                       \
  template nn::BasicTensor<T> DQFormer::multimodal(const nn::ParamStore<T>&,                \
                                                   const nn::BasicTensor<T>&,               \
                                                   const nn::BasicTensor<T>&,               \
                                                   MultimodalCache<T>&) const;              \
  template std::pair<nn::BasicTensor<T>, nn::BasicTensor<T>> DQFormer::multimodal_backward( \
      const nn::ParamStore<T>&, const MultimodalCache<T>&, const nn::BasicTensor<T>&,       \
      nn::Grads<T>&) const;                                                                 \
  template nn::BasicTensor<T> DQFormer::decomposed(const nn::ParamStore<T>&,                \
                                                   const nn::BasicTensor<T>&,               \
                                                   const nn::BasicTensor<T>&,               \
                                                   DecomposedCache<T>&) const;              \
  template std::pair<nn::BasicTensor<T>, nn::BasicTensor<T>> DQFormer::decomposed_backward( \
      const nn::ParamStore<T>&, const DecomposedCache<T>&, const nn::BasicTensor<T>&,       \
      nn::Grads<T>&) const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::cond
