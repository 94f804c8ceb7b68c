#include "pipeline/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cond/prompter.hpp"
#include "diffusion/denoiser.hpp"
#include "parallel.hpp"

namespace aid::pipeline {

double sample_loss(const Model& model, const Sample& sample, double sigma, const nn::Tensor& noise,
                   bool drop_text, bool drop_frames, nn::Grads<float>* grads) {
  const bool base = model.phase == Phase::kBase;
  diffusion::DenoiseContext<float> ctx;
  ctx.cond_latents = drop_frames ? nullptr : &sample.latents;
  ctx.k = sample.k;
  ctx.flags = base ? backbone::AdapterFlags::none() : backbone::AdapterFlags{};

  cond::MCondition<float> mc;
  cond::Conditioner::Cache<float> cc;
  if (!base && !drop_text) {
    const cond::ConditionInputs<float> in{sample.instruction.text(), sample.states,
                                          drop_frames ? nullptr : &sample.first_frame};
    mc = model.conditioner.forward(model.store, in, cond::ConditionSwitches{}, cc);
    if (!mc.null()) ctx.mcond = &mc;
  }
  cond::MConditionGrad<float> gm;
  const double loss = diffusion::dsm_loss(model.unet, model.store, sample.latents, sigma, noise, ctx,
                                          grads, ctx.mcond && grads ? &gm : nullptr);
  if (grads && ctx.mcond) model.conditioner.backward(model.store, cc, gm, *grads);
  return loss;
}

namespace {

struct Draw {
  std::size_t index;
  double sigma;
  std::uint64_t noise_seed;
  bool drop_text, drop_frames;
};

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  if (end <= begin) return 0.0;
  return std::accumulate(v.begin() + begin, v.begin() + end, 0.0) / double(end - begin);
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& data, const TrainOptions& options) {
  if (data.empty()) throw ConfigError("train: the training split is empty");
  const auto& tc = model.config.train;
  const bool base = model.phase == Phase::kBase;
  model.set_phase(model.phase);
  nn::Adam adam(model.config.optimizer);
  const diffusion::SigmaSampler sampler{model.config.diffusion.p_mean, model.config.diffusion.p_std};
  nn::Rng rng(tc.seed * 2 + (base ? 0 : 1));
  const auto start = std::chrono::steady_clock::now();

  std::ofstream log;
  if (!options.checkpoint.empty()) {
    save_checkpoint(options.checkpoint, model);
    auto log_path = options.checkpoint;
    log_path += ".log.csv";
    log.open(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write training log '" + log_path.string() + "'");
    log << "step,loss,grad_norm\n";
  }

  TrainResult result;
  result.losses.reserve(tc.steps);
  const nn::Shape shape = data.front().latents.shape();
  std::vector<double> losses(tc.batch);
  std::vector<nn::Grads<float>> grads(tc.batch);
  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::vector<Draw> draws(tc.batch);
    for (auto& d : draws) {
      d.index = rng.index(data.size());
      d.sigma = sampler.sample(rng);
      d.noise_seed = rng.next();
      d.drop_text = base || rng.uniform() < tc.p_drop_t;
      d.drop_frames = rng.uniform() < tc.p_drop_v;
    }
    parallel_for(tc.batch, [&](std::size_t b) {
      const auto& d = draws[b];
      nn::Rng noise_rng(d.noise_seed);
      const auto noise = nn::random_normal<float>(shape, 1.0, noise_rng);
      grads[b] = nn::Grads<float>(model.store);
      losses[b] = sample_loss(model, data[d.index], d.sigma, noise, d.drop_text, d.drop_frames, &grads[b]);
    });
    const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / double(tc.batch);
    model.store.zero_grad();
    for (const auto& g : grads) g.flush_into(model.store);
    double sq = 0;
    for (auto& p : model.store) {
      if (p.frozen) continue;
      nn::scale_inplace(p.grad, 1.0f / float(tc.batch));
      for (float v : p.grad.values()) sq += double(v) * v;
    }
    if (!std::isfinite(loss) || !std::isfinite(sq))
      throw NumericError("train: non-finite " + std::string(std::isfinite(loss) ? "gradient" : "loss") +
                         " at step " + std::to_string(step) +
                         (options.checkpoint.empty()
                              ? std::string()
                              : "; last good checkpoint kept at '" + options.checkpoint.string() + "'"));
    const double norm = adam.step(model.store);
    result.losses.push_back(loss);
    if (log) log << step << ',' << loss << ',' << norm << '\n';

    const std::size_t done = step + 1;
    if (options.on_log && (done % std::max<std::size_t>(tc.log_every, 1) == 0 || done == tc.steps)) {
      TrainProgress p;
      p.step = done;
      p.total = tc.steps;
      p.loss = loss;
      p.smoothed = window_mean(result.losses, done - std::min(done, tc.log_every), done);
      p.grad_norm = norm;
      p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      options.on_log(p);
    }
    if (!options.checkpoint.empty() && tc.checkpoint_every > 0 && done % tc.checkpoint_every == 0 &&
        done != tc.steps)
      save_checkpoint(options.checkpoint, model);
  }
  if (!options.checkpoint.empty()) save_checkpoint(options.checkpoint, model);
  const std::size_t w = std::min<std::size_t>(100, result.losses.size());
  result.first_window = window_mean(result.losses, 0, w);
  result.last_window = window_mean(result.losses, result.losses.size() - w, result.losses.size());
  return result;
}

}  // namespace aid::pipeline
