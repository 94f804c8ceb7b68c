#include "cond/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "data/corpus.hpp"

namespace aid::cond {

std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t max_len,
                                    std::size_t vocab) {
  if (vocab < 2) throw ConfigError("tokenizer vocabulary must hold at least 2 ids");
  std::vector<std::uint32_t> ids(max_len, 0);
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream is(lowered);
  std::size_t n = 0;
  for (std::string w; n < max_len && is >> w; ++n)
    ids[n] = static_cast<std::uint32_t>(1 + data::fnv1a64(w) % (vocab - 1));
  return ids;
}

template <typename T>
TextEncoder TextEncoder::create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                                TextEncoderConfig config) {
  TextEncoder e;
  e.config = config;
  e.embed = store.add(name + ".embed", nn::random_normal<T>({config.vocab, config.width}, 1.0, rng));
  e.pos = store.add(name + ".pos", nn::random_normal<T>({config.max_len, config.width}, 0.5, rng));
  e.block = nn::AttnBlock::create(store, rng, name + ".block", config.width, config.width,
                                  config.heads, true, nn::Init::kFanIn);
  return e;
}

template <typename T>
nn::BasicTensor<T> TextEncoder::forward(const nn::ParamStore<T>& store, std::string_view text,
                                        Cache<T>& cache) const {
  const std::size_t L = config.max_len, C = config.width;
  cache.ids = tokenize(text, L, config.vocab);
  cache.null = cache.ids.empty() || cache.ids[0] == 0;
  if (cache.null) return nn::BasicTensor<T>({L, C});
  const auto& table = store.value(embed);
  const auto& p = store.value(pos);
  nn::BasicTensor<T> x({L, C});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < C; ++c) x[t * C + c] = table[cache.ids[t] * C + c] + p[t * C + c];
  return block.forward(store, x, L, static_cast<const nn::BasicTensor<T>*>(nullptr), L,
                       cache.block);
}

template <typename T>
void TextEncoder::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                           const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const {
  if (cache.null) return;
  const std::size_t L = config.max_len, C = config.width;
  const auto gx = block.backward(store, cache.block, grad_out, grads).first;
  if (grads.wants(embed)) {
    auto& g = grads.buffer(embed);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) g[cache.ids[t] * C + c] += gx[t * C + c];
  }
  if (grads.wants(pos)) nn::add_inplace(grads.buffer(pos), gx);
}

namespace {

template <typename T>
nn::BasicTensor<T> patchify(const nn::BasicTensor<T>& frame, std::size_t P) {
  if (frame.rank() != 3 || frame.dim(0) != 3)
    throw DimensionError("visual encoder expects a [3, H, W] frame, got " +
                         nn::shape_str(frame.shape()));
  const std::size_t H = frame.dim(1), W = frame.dim(2);
  if (H % P != 0 || W % P != 0)
    throw ConfigError("visual encoder: frame " + std::to_string(H) + "x" + std::to_string(W) +
                      " not divisible by patch " + std::to_string(P));
  const std::size_t h = H / P, w = W / P;
  nn::BasicTensor<T> out({h * w, 3 * P * P});
  for (std::size_t ty = 0; ty < h; ++ty)
    for (std::size_t tx = 0; tx < w; ++tx)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t dy = 0; dy < P; ++dy)
          for (std::size_t dx = 0; dx < P; ++dx)
            out[(ty * w + tx) * 3 * P * P + (ch * P + dy) * P + dx] =
                frame[(ch * H + ty * P + dy) * W + tx * P + dx];
  return out;
}

}  // namespace

template <typename T>
VisualEncoder VisualEncoder::create(nn::ParamStore<T>& store, nn::Rng& rng,
                                    const std::string& name, VisualEncoderConfig config) {
  if (config.patch == 0 || config.image % config.patch != 0)
    throw ConfigError("visual encoder: image " + std::to_string(config.image) +
                      " not divisible by patch " + std::to_string(config.patch));
  VisualEncoder e;
  e.config = config;
  e.proj = nn::Linear::create(store, rng, name + ".proj", 3 * config.patch * config.patch,
                              config.width, true);
  e.pos = store.add(name + ".pos", nn::random_normal<T>({config.tokens(), config.width}, 0.5, rng));
  e.block = nn::AttnBlock::create(store, rng, name + ".block", config.width, config.width,
                                  config.heads, true, nn::Init::kFanIn);
  return e;
}

template <typename T>
nn::BasicTensor<T> VisualEncoder::forward(const nn::ParamStore<T>& store,
                                          const nn::BasicTensor<T>& frame,
                                          Cache<T>& cache) const {
  cache.patches = patchify(frame, config.patch);
  if (cache.patches.rows() != config.tokens())
    throw DimensionError("visual encoder configured for " + std::to_string(config.tokens()) +
                         " tokens, frame gives " + std::to_string(cache.patches.rows()));
  auto x = proj.forward(store, cache.patches);
  nn::add_inplace(x, store.value(pos));
  const auto n = config.tokens();
  return block.forward(store, x, n, static_cast<const nn::BasicTensor<T>*>(nullptr), n,
                       cache.block);
}

template <typename T>
void VisualEncoder::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                             const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads) const {
  const auto gx = block.backward(store, cache.block, grad_out, grads).first;
  if (grads.wants(pos)) nn::add_inplace(grads.buffer(pos), gx);
  proj.backward(store, cache.patches, gx, grads);
}

#define AID_INSTANTIATE(T)                                                                    \
  template TextEncoder TextEncoder::create(nn::ParamStore<T>&, nn::Rng&, const std::string&, \
                                           TextEncoderConfig);                               \
  template nn::BasicTensor<T> TextEncoder::forward(const nn::ParamStore<T>&,                 \
                                                   std::string_view, Cache<T>&) const;       \
  template void TextEncoder::backward(const nn::ParamStore<T>&, const Cache<T>&,             \
                                      const nn::BasicTensor<T>&, nn::Grads<T>&) const;       \
  template VisualEncoder VisualEncoder::create(nn::ParamStore<T>&, nn::Rng&,                 \
                                               const std::string&, VisualEncoderConfig);     \
  template nn::BasicTensor<T> VisualEncoder::forward(                                        \
      const nn::ParamStore<T>&, const nn::BasicTensor<T>&, Cache<T>&) const;                 \
  template void VisualEncoder::backward(const nn::ParamStore<T>&, const Cache<T>&,           \
                                        const nn::BasicTensor<T>&, nn::Grads<T>&) const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::cond
