#include "backbone/unet.hpp"

#include <cmath>

namespace aid::backbone {

void BackboneConfig::validate() const {
  if (latent_channels == 0 || frames == 0 || height == 0 || width == 0 || widths.empty() ||
      heads == 0 || cond_width == 0 || sigma_features < 2 || sigma_features % 2 != 0)
    throw ConfigError("backbone: every extent must be positive and sigma_features even");
  const std::size_t scale = std::size_t{1} << (widths.size() - 1);
  if (height % scale != 0 || width % scale != 0)
    throw ConfigError("backbone: latent grid " + std::to_string(height) + "x" +
                      std::to_string(width) + " cannot be halved " +
                      std::to_string(widths.size() - 1) + " times");
  for (std::size_t l = 0; l < widths.size(); ++l) {
    if (widths[l] % heads != 0)
      throw ConfigError("backbone: width " + std::to_string(widths[l]) + " not divisible by " +
                        std::to_string(heads) + " heads");
    if (adapter_divisor < 2 || bottleneck(l) == 0 || bottleneck(l) >= widths[l])
      throw ConfigError("backbone: adapter bottleneck must be in [1, width)");
  }
  if (st_kernel % 2 == 0) throw ConfigError("backbone: short-term kernel must be odd");
}

template <typename T>
nn::BasicTensor<T> assemble_input(const nn::BasicTensor<T>& noisy, const nn::BasicTensor<T>& cond,
                                  std::size_t k) {
  if (noisy.rank() != 4) throw DimensionError("assemble_input: latents must be [N, c, h, w]");
  nn::require_same_shape(noisy, cond, "assemble_input");
  const std::size_t N = noisy.dim(0), c = noisy.dim(1), S = noisy.dim(2) * noisy.dim(3);
  if (k < 1 || k >= N)
    throw DimensionError("assemble_input: need 1 <= K < N, got K=" + std::to_string(k) +
                         " with N=" + std::to_string(N));
  nn::BasicTensor<T> out({N, 2 * c + 1, noisy.dim(2), noisy.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    T* dst = out.data() + n * (2 * c + 1) * S;
    std::copy_n(noisy.data() + n * c * S, c * S, dst);
    if (n < k) {
      std::copy_n(cond.data() + n * c * S, c * S, dst + c * S);
      std::fill_n(dst + 2 * c * S, S, T{1});
    }
  }
  return out;
}

template <typename T>
nn::BasicTensor<T> assemble_unconditional(const nn::BasicTensor<T>& noisy) {
  if (noisy.rank() != 4) throw DimensionError("assemble_input: latents must be [N, c, h, w]");
  const std::size_t N = noisy.dim(0), c = noisy.dim(1), S = noisy.dim(2) * noisy.dim(3);
  nn::BasicTensor<T> out({N, 2 * c + 1, noisy.dim(2), noisy.dim(3)});
  for (std::size_t n = 0; n < N; ++n)
    std::copy_n(noisy.data() + n * c * S, c * S, out.data() + n * (2 * c + 1) * S);
  return out;
}

template <typename T>
nn::BasicTensor<T> sigma_features(T c_noise, std::size_t count) {
  const std::size_t half = count / 2;
  nn::BasicTensor<T> f({1, count});
  for (std::size_t k = 0; k < half; ++k) {
    // Frequencies spaced geometrically from 1 to 100.
    const double freq = half > 1 ? std::exp(std::log(100.0) * double(k) / double(half - 1)) : 1.0;
    f[k] = static_cast<T>(std::sin(freq * double(c_noise)));
    f[half + k] = static_cast<T>(std::cos(freq * double(c_noise)));
  }
  return f;
}

namespace {

// [N, C, h, w] <-> [N, h*w, C]
template <typename T>
nn::BasicTensor<T> nchw_to_tokens(const nn::BasicTensor<T>& x) {
  const std::size_t N = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  nn::BasicTensor<T> out({N, S, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s) out[(n * S + s) * C + c] = x[(n * C + c) * S + s];
  return out;
}

template <typename T>
nn::BasicTensor<T> tokens_to_nchw(const nn::BasicTensor<T>& x, std::size_t h, std::size_t w) {
  const std::size_t N = x.dim(0), S = x.dim(1), C = x.dim(2);
  nn::BasicTensor<T> out({N, C, h, w});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t c = 0; c < C; ++c) out[(n * C + c) * S + s] = x[(n * S + s) * C + c];
  return out;
}

template <typename T>
void accumulate(nn::BasicTensor<T>& dst, const nn::BasicTensor<T>& src) {
  if (dst.empty()) dst = src;
  else nn::add_inplace(dst, src.reshaped(dst.shape()));
}

}  // namespace

template <typename T>
ResBlock ResBlock::create(nn::ParamStore<T>& store, nn::Rng& rng, const std::string& name,
                          std::size_t width, std::size_t emb_dim) {
  ResBlock r;
  r.norm1 = nn::LayerNorm::create(store, name + ".norm1", width);
  r.conv1 = nn::Conv3x3::create(store, rng, name + ".conv1", width, width);
  r.emb = nn::Linear::create(store, rng, name + ".emb", emb_dim, width, true);
  r.norm2 = nn::LayerNorm::create(store, name + ".norm2", width);
  r.conv2 = nn::Conv3x3::create(store, rng, name + ".conv2", width, width, nn::Init::kZero);
  return r;
}

template <typename T>
nn::BasicTensor<T> ResBlock::forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& x,
                                     std::size_t h, std::size_t w,
                                     const nn::BasicTensor<T>& emb_vec, Cache<T>& cache) const {
  cache.h = h;
  cache.w = w;
  cache.emb_in = emb_vec;
  cache.act1 = nn::gelu(norm1.forward(store, x, cache.ln1));
  cache.h1 = conv1.forward(store, cache.act1, h, w);
  const auto e = emb.forward(store, emb_vec);
  const std::size_t W = e.numel();
  for (std::size_t i = 0; i < cache.h1.numel(); ++i) cache.h1[i] += e[i % W];
  cache.act2 = nn::gelu(norm2.forward(store, cache.h1, cache.ln2));
  auto y = conv2.forward(store, cache.act2, h, w);
  nn::add_inplace(y, x);
  return y;
}

template <typename T>
nn::BasicTensor<T> ResBlock::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                                      const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads,
                                      nn::BasicTensor<T>& grad_emb) const {
  const auto gact2 = conv2.backward(store, cache.act2, cache.h, cache.w, grad_out, grads);
  const auto gh1 = norm2.backward(store, cache.ln2, nn::gelu_backward(cache.ln2.y, gact2), grads);
  nn::BasicTensor<T> ge({1, gh1.cols()});
  for (std::size_t i = 0; i < gh1.numel(); ++i) ge[i % ge.numel()] += gh1[i];
  accumulate(grad_emb, emb.backward(store, cache.emb_in, ge, grads));
  const auto gact1 = conv1.backward(store, cache.act1, cache.h, cache.w, gh1, grads);
  auto gx = norm1.backward(store, cache.ln1, nn::gelu_backward(cache.ln1.y, gact1), grads);
  nn::add_inplace(gx, grad_out);
  return gx;
}

template <typename T>
UNet UNet::create(nn::ParamStore<T>& store, nn::Rng& rng, const BackboneConfig& config,
                  bool with_adapters) {
  config.validate();
  UNet u;
  u.config_ = config;
  const auto& W = config.widths;
  const std::size_t E = W[0], H = config.heads;
  u.in_proj_ = nn::Linear::create(store, rng, "base.in", config.input_channels(), W[0], true);
  u.frame_pos_ = store.add("base.frame_pos", nn::random_normal<T>({config.frames, W[0]}, 0.1, rng));
  u.emb1_ = nn::Linear::create(store, rng, "base.sigma.l1", config.sigma_features, E, true);
  u.emb2_ = nn::Linear::create(store, rng, "base.sigma.l2", E, E, true);
  for (std::size_t l = 0; l < W.size(); ++l) {
    const std::string p = "base.l" + std::to_string(l);
    Level lv;
    lv.res = ResBlock::create(store, rng, p + ".res", W[l], E);
    lv.spatial = nn::AttnBlock::create(store, rng, p + ".spatial", W[l], W[l], H, true,
                                       nn::Init::kZero);
    lv.temporal = nn::AttnBlock::create(store, rng, p + ".temporal", W[l], W[l], H, true,
                                        nn::Init::kZero);
    if (l + 1 < W.size())
      lv.down = nn::Linear::create(store, rng, p + ".down", W[l], W[l + 1], true);
    u.levels_.push_back(std::move(lv));
  }
  for (std::size_t l = 0; l + 1 < W.size(); ++l) {
    const std::string p = "base.up" + std::to_string(l);
    u.ups_.push_back({nn::Linear::create(store, rng, p + ".proj", W[l + 1], W[l], true),
                      ResBlock::create(store, rng, p + ".res", W[l], E)});
  }
  u.out_norm_ = nn::LayerNorm::create(store, "base.out.norm", W[0]);
  u.out_proj_ = nn::Linear::create(store, rng, "base.out.proj", W[0], config.latent_channels, true,
                                   nn::Init::kZero);
  for (std::size_t l = 0; l < W.size(); ++l) {
    u.levels_[l].xattn = nn::AttnBlock::create(store, rng, "xattn.l" + std::to_string(l), W[l],
                                               config.cond_width, H, false, nn::Init::kZero);
  }
  if (with_adapters) {
    for (std::size_t l = 0; l < W.size(); ++l) {
      const std::string p = "adapter.l" + std::to_string(l);
      const std::size_t db = config.bottleneck(l);
      u.spatial_.push_back(SpatialAdapter::create(store, rng, p + ".sa", W[l], db));
      u.short_term_.push_back(
          ShortTermAdapter::create(store, rng, p + ".st", W[l], db, config.st_kernel));
      u.long_term_.push_back(LongTermAdapter::create(store, rng, p + ".lt", W[l], db));
    }
  }
  return u;
}

template <typename T>
nn::BasicTensor<T> UNet::forward(const nn::ParamStore<T>& store, const nn::BasicTensor<T>& inp,
                                 T c_noise, const std::type_identity_t<cond::MCondition<T>>* mcond, AdapterFlags flags,
                                 Cache<T>& cache) const {
  const auto& cfg = config_;
  const nn::Shape want{cfg.frames, cfg.input_channels(), cfg.height, cfg.width};
  if (inp.shape() != want)
    throw DimensionError("unet: input " + nn::shape_str(inp.shape()) + ", expected " +
                         nn::shape_str(want));
  if (flags.any() && !has_adapters())
    throw ConfigError("unet: adapters requested but this backbone was built without them");
  const bool use_cond = mcond != nullptr && !mcond->null();
  if (use_cond && (mcond->frames != cfg.frames || mcond->width() != cfg.cond_width))
    throw DimensionError("unet: condition built for " + std::to_string(mcond->frames) +
                         " frames of width " + std::to_string(mcond->width()) + ", backbone has " +
                         std::to_string(cfg.frames) + " frames of width " +
                         std::to_string(cfg.cond_width));
  const std::size_t N = cfg.frames, L = levels_.size();
  cache.mcond = use_cond ? mcond : nullptr;
  cache.levels.assign(L, {});
  cache.ups.assign(ups_.size(), {});

  cache.feat = sigma_features(c_noise, cfg.sigma_features);
  cache.emb_pre = emb1_.forward(store, cache.feat);
  cache.emb_act = nn::gelu(cache.emb_pre);
  cache.emb = emb2_.forward(store, cache.emb_act);

  cache.tokens_in = nchw_to_tokens(inp);
  auto x = in_proj_.forward(store, cache.tokens_in);
  {
    const auto& pos = store.value(frame_pos_);
    const std::size_t S = cfg.height * cfg.width, W0 = cfg.widths[0];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < W0; ++c) x[(n * S + s) * W0 + c] += pos[n * W0 + c];
  }

  nn::BasicTensor<T> ctx;
  std::size_t ctx_rows = 0;
  if (use_cond) {
    for (std::size_t i = 0; i < N; ++i) ctx = nn::concat_rows(ctx, mcond->frame_kv(i));
    ctx_rows = ctx.rows() / N;
  }

  std::size_t h = cfg.height, w = cfg.width;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& lv = levels_[l];
    auto& c = cache.levels[l];
    c.h = h;
    c.w = w;
    const std::size_t S = h * w;
    x = lv.res.forward(store, x, h, w, cache.emb, c.res);

    auto y = lv.spatial.forward(store, x, S, static_cast<const nn::BasicTensor<T>*>(nullptr), S,
                                c.spatial);
    c.sa_on = flags.spatial;
    if (c.sa_on) nn::add_inplace(y, spatial_[l].forward(store, x, c.sa).reshaped(y.shape()));
    x = std::move(y);

    x = nn::swap01(lv.temporal.forward(store, nn::swap01(x), N,
                                       static_cast<const nn::BasicTensor<T>*>(nullptr), N,
                                       c.temporal));
    c.st_on = flags.short_term;
    if (c.st_on) nn::add_inplace(x, short_term_[l].forward(store, x, h, w, c.st));
    c.lt_on = flags.long_term;
    if (c.lt_on) nn::add_inplace(x, long_term_[l].forward(store, x, c.lt));
    c.x_on = use_cond;
    if (c.x_on) x = lv.xattn.forward(store, x, S, &ctx, ctx_rows, c.xattn);

    c.skip = x;
    if (lv.down) {
      c.pooled = nn::avg_pool2(x, h, w);
      x = lv.down->forward(store, c.pooled);
      h /= 2;
      w /= 2;
    }
  }
  for (std::size_t l = ups_.size(); l-- > 0;) {
    auto& c = cache.ups[l];
    c.upsampled = nn::upsample2(x, h, w);
    h *= 2;
    w *= 2;
    x = ups_[l].proj.forward(store, c.upsampled);
    nn::add_inplace(x, cache.levels[l].skip);
    x = ups_[l].res.forward(store, x, h, w, cache.emb, c.res);
  }
  const auto out = out_proj_.forward(store, out_norm_.forward(store, x, cache.out_ln));
  return tokens_to_nchw(out, cfg.height, cfg.width);
}

template <typename T>
nn::BasicTensor<T> UNet::backward(const nn::ParamStore<T>& store, const Cache<T>& cache,
                                  const nn::BasicTensor<T>& grad_out, nn::Grads<T>& grads,
                                  std::type_identity_t<cond::MConditionGrad<T>>* grad_mcond) const {
  const auto& cfg = config_;
  const std::size_t N = cfg.frames, L = levels_.size();
  nn::BasicTensor<T> grad_emb;

  auto g = out_proj_.backward(store, cache.out_ln.y, nchw_to_tokens(grad_out), grads);
  g = out_norm_.backward(store, cache.out_ln, g, grads);

  std::vector<nn::BasicTensor<T>> grad_level_out(L);
  for (std::size_t l = 0; l < ups_.size(); ++l) {
    const auto& c = cache.ups[l];
    const auto gin = ups_[l].res.backward(store, c.res, g, grads, grad_emb);
    accumulate(grad_level_out[l], gin);
    const auto gup = ups_[l].proj.backward(store, c.upsampled, gin, grads);
    g = nn::upsample2_backward(gup, cache.levels[l + 1].h, cache.levels[l + 1].w);
  }
  accumulate(grad_level_out[L - 1], g);

  nn::BasicTensor<T> gctx;
  nn::BasicTensor<T> g_next;  // gradient w.r.t. the input of level l+1
  for (std::size_t l = L; l-- > 0;) {
    const auto& lv = levels_[l];
    const auto& c = cache.levels[l];
    g = grad_level_out[l];
    if (lv.down) {
      const auto gpool = lv.down->backward(store, c.pooled, g_next, grads);
      nn::add_inplace(g, nn::avg_pool2_backward(gpool, c.h, c.w).reshaped(g.shape()));
    }
    if (c.x_on) {
      auto [gx, gc] = lv.xattn.backward(store, c.xattn, g, grads);
      g = gx.reshaped(g.shape());
      accumulate(gctx, gc);
    }
    if (c.lt_on) nn::add_inplace(g, long_term_[l].backward(store, c.lt, g, grads));
    if (c.st_on) nn::add_inplace(g, short_term_[l].backward(store, c.st, g, grads));
    {
      const auto gt = nn::swap01(g);
      g = nn::swap01(lv.temporal.backward(store, c.temporal, gt, grads).first.reshaped(gt.shape()));
    }
    {
      auto gx = lv.spatial.backward(store, c.spatial, g, grads).first.reshaped(g.shape());
      if (c.sa_on) nn::add_inplace(gx, spatial_[l].backward(store, c.sa, g, grads).reshaped(g.shape()));
      g = std::move(gx);
    }
    g_next = lv.res.backward(store, c.res, g, grads, grad_emb);
  }

  // g_next now holds the gradient at the level-0 input.
  if (grads.wants(frame_pos_)) {
    auto& gp = grads.buffer(frame_pos_);
    const std::size_t S = cfg.height * cfg.width, W0 = cfg.widths[0];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < W0; ++k) gp[n * W0 + k] += g_next[(n * S + s) * W0 + k];
  }
  const auto gtok = in_proj_.backward(store, cache.tokens_in, g_next, grads);

  if (!grad_emb.empty()) {
    const auto gact = emb2_.backward(store, cache.emb_act, grad_emb, grads);
    emb1_.backward(store, cache.feat, nn::gelu_backward(cache.emb_pre, gact), grads);
  }
  if (grad_mcond && cache.mcond && !gctx.empty()) {
    const std::size_t n = gctx.rows() / N;
    for (std::size_t i = 0; i < N; ++i)
      grad_mcond->add_frame(*cache.mcond, i, nn::slice_rows(gctx, i * n, (i + 1) * n));
  }
  return tokens_to_nchw(gtok, cfg.height, cfg.width);
}

#define AID_INSTANTIATE(T)                                                                      \
  template nn::BasicTensor<T> assemble_input(const nn::BasicTensor<T>&,                        \
                                             const nn::BasicTensor<T>&, std::size_t);          \
  template nn::BasicTensor<T> assemble_unconditional(const nn::BasicTensor<T>&);               \
  template nn::BasicTensor<T> sigma_features(T, std::size_t);                                  \
  template ResBlock ResBlock::create(nn::ParamStore<T>&, nn::Rng&, const std::string&,         \
                                     std::size_t, std::size_t);                                \
  template nn::BasicTensor<T> ResBlock::forward(const nn::ParamStore<T>&,                      \
                                                const nn::BasicTensor<T>&, std::size_t,        \
                                                std::size_t, const nn::BasicTensor<T>&,        \
                                                Cache<T>&) const;                              \
  template nn::BasicTensor<T> ResBlock::backward(const nn::ParamStore<T>&, const Cache<T>&,    \
                                                 const nn::BasicTensor<T>&, nn::Grads<T>&,     \
                                                 nn::BasicTensor<T>&) const;                   \
  template UNet UNet::create(nn::ParamStore<T>&, nn::Rng&, const BackboneConfig&, bool);       \
  template nn::BasicTensor<T> UNet::forward(const nn::ParamStore<T>&, const nn::BasicTensor<T>&, \
                                            T, const cond::MCondition<T>*, AdapterFlags,       \
                                            Cache<T>&) const;                                  \
  template nn::BasicTensor<T> UNet::backward(const nn::ParamStore<T>&, const Cache<T>&,        \
                                             const nn::BasicTensor<T>&, nn::Grads<T>&,         \
                                             cond::MConditionGrad<T>*) const;

AID_INSTANTIATE(float)
AID_INSTANTIATE(double)
#undef AID_INSTANTIATE

}  // namespace aid::backbone
