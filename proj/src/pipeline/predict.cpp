#include "pipeline/predict.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "cond/prompter.hpp"
#include "data/render.hpp"
#include "diffusion/denoiser.hpp"
#include "parallel.hpp"

namespace aid::pipeline {

Prediction predict(const Model& model, const nn::Tensor& reference, const PredictOptions& opt) {
  const auto& cfg = model.config;
  const std::size_t n = cfg.data.frames, canvas = cfg.data.canvas;
  if (reference.rank() != 4 || reference.shape()[1] != 3 || reference.shape()[2] != canvas ||
      reference.shape()[3] != canvas)
    throw DimensionError("predict: reference video must be [>=K, 3, " + std::to_string(canvas) + ", " +
                         std::to_string(canvas) + "], got " + nn::shape_str(reference.shape()));
  if (opt.k == 0 || opt.k >= n)
    throw UsageError("predict: K must satisfy 1 <= K < " + std::to_string(n));
  if (reference.shape()[0] < opt.k)
    throw DimensionError("predict: reference has " + std::to_string(reference.shape()[0]) +
                         " frames, K = " + std::to_string(opt.k));
  opt.ablation.validate();

  // Reference frames padded to N with black.
  nn::Tensor padded({n, 3, canvas, canvas}, -1.0f);
  std::copy_n(reference.data(), opt.k * 3 * canvas * canvas, padded.data());
  const auto cond_latents = model.codec.encode(padded);
  const auto first = frame_of(padded, 0);

  cond::MCondition<float> mc;
  if (!opt.unconditional) {
    const auto ins = data::Instruction::parse(opt.instruction);
    if (!opt.ablation.drops_condition()) {
      cond::Conditioner::Cache<float> cc;
      const cond::ConditionInputs<float> in{ins.text(), cond::state_prompter(ins), &first};
      mc = model.conditioner.forward(model.store, in, opt.ablation.switches(), cc);
    }
  }
  const auto flags = opt.ablation.adapters();
  const auto scales = opt.unconditional ? diffusion::GuidanceScales{0.0, 0.0} : opt.scales;
  const auto w = diffusion::guidance_weights(scales);
  const diffusion::DenoiseContext<float> uu{nullptr, 0, nullptr, flags};
  const diffusion::DenoiseContext<float> vu{&cond_latents, opt.k, nullptr, flags};
  const diffusion::DenoiseContext<float> vt{&cond_latents, opt.k, mc.null() ? nullptr : &mc, flags};

  const diffusion::DenoiseFn<float> guided = [&](const nn::Tensor& x, double sigma) {
    nn::Tensor e_uu, e_vu, e_vt;
    if (w.uu != 0.0) e_uu = diffusion::denoise(model.unet, model.store, x, sigma, uu);
    if (w.vu != 0.0 || (w.vt != 0.0 && !vt.mcond)) e_vu = diffusion::denoise(model.unet, model.store, x, sigma, vu);
    if (w.vt != 0.0) e_vt = vt.mcond ? diffusion::denoise(model.unet, model.store, x, sigma, vt) : e_vu;
    return diffusion::dual_cfg(e_uu, e_vu, e_vt, scales);
  };

  nn::Rng rng(opt.seed);
  const nn::Shape shape = cond_latents.shape();
  auto x = nn::random_normal<float>(shape, opt.sampler.sigma_max, rng);
  Prediction out;
  out.latents = diffusion::euler_sample(guided, std::move(x), opt.sampler);
  // Reference frames come straight from the conditioning path.
  const std::size_t per_frame = nn::shape_numel(shape) / n;
  std::copy_n(cond_latents.data(), opt.k * per_frame, out.latents.data());
  out.video = model.codec.decode(out.latents);
  for (auto& v : out.video.values()) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

double psnr(const nn::Tensor& a, const nn::Tensor& b, std::size_t begin, std::size_t end) {
  nn::require_same_shape(a, b, "psnr");
  if (a.rank() == 0 || end <= begin || end > a.shape()[0])
    throw DimensionError("psnr: bad frame range");
  const std::size_t per = a.numel() / a.shape()[0];
  double se = 0;
  for (std::size_t i = begin * per; i < end * per; ++i) {
    const double d = double(a[i]) - double(b[i]);
    se += d * d;
  }
  const double mse = se / double((end - begin) * per);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(4.0 / mse));
}

std::uint64_t item_seed(std::uint64_t seed, std::string_view item_id) {
  return data::fnv1a64(item_id) ^ (seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
}

MetricsReport evaluate(const Model& model, const std::vector<Sample>& val, const EvalOptions& options) {
  if (val.empty()) throw ConfigError("eval: the validation split is empty");
  if (options.seeds.empty()) throw UsageError("eval: need at least one seed");
  const std::size_t count = options.limit ? std::min(options.limit, val.size()) : val.size();
  const std::size_t runs = count * options.seeds.size();
  std::vector<char> follows(runs);
  std::vector<double> cond_p(runs), pred_p(runs);
  parallel_for(runs, [&](std::size_t r) {
    const auto& s = val[r % count];
    const std::uint64_t seed = options.seeds[r / count];
    PredictOptions po;
    po.k = s.k;
    po.instruction = s.instruction.text();
    po.scales = options.scales;
    po.sampler = options.sampler;
    po.seed = item_seed(seed, s.id);
    po.ablation = options.ablation;
    const auto pred = predict(model, s.video, po);
    follows[r] = data::oracle_eval(pred.video, s.instruction).follows;
    cond_p[r] = psnr(pred.video, s.video, 0, s.k);
    pred_p[r] = psnr(pred.video, s.video, s.k, s.video.shape()[0]);
  });
  MetricsReport m;
  m.ablation = options.ablation.name();
  m.items = count;
  m.seeds = options.seeds;
  for (std::size_t si = 0; si < options.seeds.size(); ++si) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < count; ++i) hits += follows[si * count + i];
    m.seed_accuracy.push_back(double(hits) / double(count));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  m.instruction_accuracy = mean(m.seed_accuracy);
  m.cond_psnr = mean(cond_p);
  m.pred_psnr = mean(pred_p);
  m.trainable_param_fraction = model.trainable_fraction();
  m.config_json = to_json(model.config);
  return m;
}

std::string to_json(const MetricsReport& m) {
  nlohmann::json doc = {
      {"ablation", m.ablation},
      {"items", m.items},
      {"seeds", m.seeds},
      {"instruction_accuracy", m.instruction_accuracy},
      {"seed_accuracy", m.seed_accuracy},
      {"cond_psnr", m.cond_psnr},
      {"pred_psnr", m.pred_psnr},
      {"trainable_param_fraction", m.trainable_param_fraction},
      {"config", nlohmann::json::parse(m.config_json)},
  };
  return doc.dump(2) + "\n";
}

}  // namespace aid::pipeline
