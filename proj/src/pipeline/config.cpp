#include "pipeline/config.hpp"

#include <json.hpp>
#include <set>
#include <tuple>

namespace aid::pipeline {

using nlohmann::json;

// ---- Ablation ----

namespace {

struct AblationEntry {
  const char* name;
  bool Ablation::*flag;
};

constexpr AblationEntry kAblations[] = {
    {"no_mc", &Ablation::no_mc},         {"no_me", &Ablation::no_me},
    {"no_de", &Ablation::no_de},         {"no_llava", &Ablation::no_llava},
    {"no_adapter", &Ablation::no_adapter}, {"no_sa", &Ablation::no_sa},
    {"no_sta", &Ablation::no_sta},       {"no_lta", &Ablation::no_lta},
    {"no_ta", &Ablation::no_ta},
};

}  // namespace

const std::vector<std::string>& Ablation::names() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v{"full"};
    for (const auto& e : kAblations) v.emplace_back(e.name);
    return v;
  }();
  return all;
}

Ablation Ablation::from_name(std::string_view name) {
  Ablation a;
  if (name == "full") return a;
  for (const auto& e : kAblations)
    if (name == e.name) {
      a.*e.flag = true;
      if (a.no_mc) a.no_me = a.no_de = true;
      if (a.no_ta) a.no_sta = a.no_lta = true;
      if (a.no_adapter) a.no_sa = a.no_sta = a.no_lta = true;
      return a;
    }
  std::string known;
  for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
  throw UsageError("unknown ablation '" + std::string(name) + "' (known: " + known + ")");
}

std::string Ablation::name() const {
  auto effective = [](const Ablation& a) {
    const auto s = a.switches();
    const auto f = a.adapters();
    return std::tuple(s.multimodal, s.decomposed, s.states, a.drops_condition(), f.spatial,
                      f.short_term, f.long_term);
  };
  for (const auto& n : names())
    if (effective(from_name(n)) == effective(*this)) return n;
  std::string out;
  for (const auto& e : kAblations)
    if (this->*e.flag) out += (out.empty() ? "" : "+") + std::string(e.name);
  return out;
}

void Ablation::validate() const {
  if (no_mc && !(no_me && no_de)) throw ConfigError("ablation: no_mc requires no_me and no_de");
  if (no_ta && !(no_sta && no_lta)) throw ConfigError("ablation: no_ta requires no_sta and no_lta");
  if (no_adapter && !(no_sa && no_sta && no_lta))
    throw ConfigError("ablation: no_adapter requires no_sa, no_sta and no_lta");
}

cond::ConditionSwitches Ablation::switches() const {
  return {!no_me && !no_mc, !no_de && !no_mc, !no_llava};
}

backbone::AdapterFlags Ablation::adapters() const {
  return {!(no_adapter || no_sa), !(no_adapter || no_ta || no_sta),
          !(no_adapter || no_ta || no_lta)};
}

// ---- RunConfig ----

void RunConfig::resolve() {
  const codec::PatchCodec codec_model(codec);
  if (codec.patch == 0 || data.canvas % codec.patch != 0)
    throw ConfigError("config: codec.patch must divide data.canvas");
  backbone.latent_channels = codec_model.latent_channels();
  backbone.frames = data.frames;
  backbone.height = backbone.width = data.canvas / codec.patch;
  backbone.cond_width = conditioning.width;
  conditioning.frames = data.frames;
  conditioning.image = data.canvas;
  validate();
}

void RunConfig::validate() const {
  backbone.validate();
  diffusion.sampler.validate();
  ablation.validate();
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("config: ") + what + " must be in [0, 1]");
  };
  prob(train.p_drop_t, "train.p_drop_t");
  prob(train.p_drop_v, "train.p_drop_v");
  prob(data.val_fraction, "data.val_fraction");
  if (data.k == 0 || data.k >= data.frames) throw ConfigError("config: need 1 <= data.k < data.frames");
  if (train.batch == 0) throw ConfigError("config: train.batch must be at least 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("config: optimizer.lr must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
        optimizer.beta2 < 1.0))
    throw ConfigError("config: optimizer betas must be in [0, 1)");
  if (!(diffusion.p_std > 0.0)) throw ConfigError("config: diffusion.p_std must be positive");
  if (conditioning.image % conditioning.vis_patch != 0)
    throw ConfigError("config: conditioning.vis_patch must divide the canvas");
}

RunConfig RunConfig::preset(std::string_view name) {
  RunConfig c;
  auto tiny = [&c] {
    c.backbone.widths = {8, 16};
    c.backbone.heads = 2;
    c.backbone.sigma_features = 8;
    c.conditioning.width = 8;
    c.conditioning.tokens_per_frame = 77;
  };
  if (name == "desk") {
  } else if (name == "paper-ssv2") {
    tiny();
    c.data.frames = 12;
    c.data.k = 2;
  } else if (name == "paper-epic") {
    tiny();
    c.data.frames = 12;
    c.data.k = 1;
  } else if (name == "paper-bridge") {
    tiny();
    c.data.frames = 16;
    c.data.k = 1;
    c.data.canvas = 64;
  } else {
    throw UsageError("unknown preset '" + std::string(name) +
                     "' (known: desk, paper-ssv2, paper-epic, paper-bridge)");
  }
  c.resolve();
  return c;
}

// ---- JSON ----

std::string to_json(const RunConfig& c) {
  const auto& b = c.backbone;
  const auto& s = c.diffusion.sampler;
  json ablation = json::object();
  for (const auto& e : kAblations) ablation[e.name] = c.ablation.*e.flag;
  json doc = {
      {"codec", {{"patch", c.codec.patch}, {"seed", c.codec.seed}, {"retain_ratio", c.codec.retain_ratio}}},
      {"backbone",
       {{"latent_channels", b.latent_channels},
        {"frames", b.frames},
        {"height", b.height},
        {"width", b.width},
        {"widths", b.widths},
        {"heads", b.heads},
        {"cond_width", b.cond_width},
        {"adapter_divisor", b.adapter_divisor},
        {"st_kernel", b.st_kernel},
        {"sigma_features", b.sigma_features}}},
      {"conditioning",
       {{"width", c.conditioning.width},
        {"text_len", c.conditioning.text_len},
        {"vocab", c.conditioning.vocab},
        {"image", c.conditioning.image},
        {"vis_patch", c.conditioning.vis_patch},
        {"frames", c.conditioning.frames},
        {"tokens_per_frame", c.conditioning.tokens_per_frame},
        {"heads", c.conditioning.heads},
        {"depth", c.conditioning.depth}}},
      {"data",
       {{"num", c.data.num},
        {"frames", c.data.frames},
        {"k", c.data.k},
        {"seed", c.data.seed},
        {"canvas", c.data.canvas},
        {"val_fraction", c.data.val_fraction}}},
      {"diffusion",
       {{"p_mean", c.diffusion.p_mean},
        {"p_std", c.diffusion.p_std},
        {"steps", s.steps},
        {"sigma_min", s.sigma_min},
        {"sigma_max", s.sigma_max},
        {"rho", s.rho},
        {"s_v", c.diffusion.guidance.s_v},
        {"s_t", c.diffusion.guidance.s_t}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"clip_norm", c.optimizer.clip_norm}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch", c.train.batch},
        {"p_drop_t", c.train.p_drop_t},
        {"p_drop_v", c.train.p_drop_v},
        {"seed", c.train.seed},
        {"checkpoint_every", c.train.checkpoint_every},
        {"log_every", c.train.log_every}}},
      {"ablation", std::move(ablation)},
  };
  return doc.dump(2);
}

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }
  ~Section() = default;

  template <typename V>
  Section& field(const char* key, V& out) {
    known_.insert(key);
    if (j_.contains(key)) {
      try {
        out = j_.at(key).get<V>();
      } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + path_ + "." + key + "': " + e.what());
      }
    }
    return *this;
  }
  // Calls fn(Section) when the child object is present.
  template <typename Fn>
  Section& child(const char* key, Fn&& fn) {
    known_.insert(key);
    if (j_.contains(key)) {
      Section s(j_.at(key), path_.empty() ? key : path_ + "." + key);
      fn(s);
      s.finish();
    }
    return *this;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k))
        throw ConfigError("config: unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

}  // namespace

RunConfig from_json(const std::string& text, RunConfig c) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  Section root(doc, "");
  root.child("codec", [&](Section& s) {
        s.field("patch", c.codec.patch).field("seed", c.codec.seed).field("retain_ratio", c.codec.retain_ratio);
      })
      .child("backbone",
             [&](Section& s) {
               auto& b = c.backbone;
               s.field("latent_channels", b.latent_channels)
                   .field("frames", b.frames)
                   .field("height", b.height)
                   .field("width", b.width)
                   .field("widths", b.widths)
                   .field("heads", b.heads)
                   .field("cond_width", b.cond_width)
                   .field("adapter_divisor", b.adapter_divisor)
                   .field("st_kernel", b.st_kernel)
                   .field("sigma_features", b.sigma_features);
             })
      .child("conditioning",
             [&](Section& s) {
               auto& k = c.conditioning;
               s.field("width", k.width)
                   .field("text_len", k.text_len)
                   .field("vocab", k.vocab)
                   .field("image", k.image)
                   .field("vis_patch", k.vis_patch)
                   .field("frames", k.frames)
                   .field("tokens_per_frame", k.tokens_per_frame)
                   .field("heads", k.heads)
                   .field("depth", k.depth);
             })
      .child("data",
             [&](Section& s) {
               s.field("num", c.data.num)
                   .field("frames", c.data.frames)
                   .field("k", c.data.k)
                   .field("seed", c.data.seed)
                   .field("canvas", c.data.canvas)
                   .field("val_fraction", c.data.val_fraction);
             })
      .child("diffusion",
             [&](Section& s) {
               auto& d = c.diffusion;
               s.field("p_mean", d.p_mean)
                   .field("p_std", d.p_std)
                   .field("steps", d.sampler.steps)
                   .field("sigma_min", d.sampler.sigma_min)
                   .field("sigma_max", d.sampler.sigma_max)
                   .field("rho", d.sampler.rho)
                   .field("s_v", d.guidance.s_v)
                   .field("s_t", d.guidance.s_t);
             })
      .child("optimizer",
             [&](Section& s) {
               auto& o = c.optimizer;
               s.field("lr", o.lr)
                   .field("beta1", o.beta1)
                   .field("beta2", o.beta2)
                   .field("eps", o.eps)
                   .field("clip_norm", o.clip_norm);
             })
      .child("train",
             [&](Section& s) {
               auto& t = c.train;
               s.field("steps", t.steps)
                   .field("batch", t.batch)
                   .field("p_drop_t", t.p_drop_t)
                   .field("p_drop_v", t.p_drop_v)
                   .field("seed", t.seed)
                   .field("checkpoint_every", t.checkpoint_every)
                   .field("log_every", t.log_every);
             })
      .child("ablation", [&](Section& s) {
        for (const auto& e : kAblations) s.field(e.name, c.ablation.*e.flag);
      });
  root.finish();
  c.resolve();
  return c;
}

}  // namespace aid::pipeline
