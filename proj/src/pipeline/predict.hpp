#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pipeline/dataset.hpp"

namespace aid::pipeline {

struct PredictOptions {
  std::size_t k = 1;
  std::string instruction;  // must follow the instruction grammar unless unconditional
  diffusion::GuidanceScales scales;
  diffusion::SamplerConfig sampler;
  std::uint64_t seed = 0;
  Ablation ablation;
  bool unconditional = false;  // sample without text and frame conditions
};

struct Prediction {
  nn::Tensor latents;  // [N, c, h, w]; frames < K are the encoded reference frames
  nn::Tensor video;    // [N, 3, H, W] in [-1, 1]
};

// Predicts an N-frame video from the first K frames of `reference` (at least
// K frames of [3, H, W]) and an instruction. Deterministic in all inputs.
Prediction predict(const Model& model, const nn::Tensor& reference, const PredictOptions& options);

// Peak signal-to-noise ratio for [-1, 1] data over frames [begin, end),
// capped at kPsnrCap for identical inputs.
inline constexpr double kPsnrCap = 100.0;
double psnr(const nn::Tensor& a, const nn::Tensor& b, std::size_t begin, std::size_t end);

struct EvalOptions {
  Ablation ablation;
  std::vector<std::uint64_t> seeds{0};
  diffusion::GuidanceScales scales;
  diffusion::SamplerConfig sampler;
  std::size_t limit = 0;  // evaluate at most this many items; 0 = all
};

struct MetricsReport {
  std::string ablation;
  std::size_t items = 0;
  std::vector<std::uint64_t> seeds;
  double instruction_accuracy = 0;
  std::vector<double> seed_accuracy;  // one per seed
  double cond_psnr = 0;
  double pred_psnr = 0;
  double trainable_param_fraction = 0;
  std::string config_json;
};

// Predicts every val item once per seed and aggregates oracle accuracy and PSNR.
MetricsReport evaluate(const Model& model, const std::vector<Sample>& val, const EvalOptions& options);
std::string to_json(const MetricsReport& report);

// Per-item sampling seed shared by every ablation, so rows compare on identical noise.
std::uint64_t item_seed(std::uint64_t seed, std::string_view item_id);

}  // namespace aid::pipeline
