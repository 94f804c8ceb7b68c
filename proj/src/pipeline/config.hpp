#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "backbone/unet.hpp"
#include "codec/codec.hpp"
#include "cond/mcondition.hpp"
#include "data/corpus.hpp"
#include "diffusion/edm.hpp"
#include "nn/optim.hpp"

namespace aid::pipeline {

// Inference-time ablations. no_mc implies no_me and no_de; no_ta implies
// no_sta and no_lta; no_adapter implies all three adapter switches.
struct Ablation {
  bool no_mc = false, no_me = false, no_de = false, no_llava = false;
  bool no_adapter = false, no_sa = false, no_sta = false, no_lta = false, no_ta = false;

  // "full" or one of the flag names. Throws UsageError for unknown names.
  static Ablation from_name(std::string_view name);
  static const std::vector<std::string>& names();
  std::string name() const;  // "full" when nothing is disabled
  void validate() const;

  cond::ConditionSwitches switches() const;
  backbone::AdapterFlags adapters() const;
  bool drops_condition() const { return no_mc || (no_me && no_de); }
};

struct DiffusionConfig {
  double p_mean = -1.2, p_std = 1.2;
  diffusion::SamplerConfig sampler;
  diffusion::GuidanceScales guidance;
};

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t batch = 8;
  double p_drop_t = 0.1;
  double p_drop_v = 0.1;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 500;
  std::size_t log_every = 50;
};

struct RunConfig {
  codec::CodecConfig codec;
  backbone::BackboneConfig backbone;
  cond::ConditionerConfig conditioning;
  data::CorpusConfig data;
  DiffusionConfig diffusion;
  nn::AdamConfig optimizer;
  TrainConfig train;
  Ablation ablation;

  // Fills the fields derived from data and codec (latent grid, frame counts,
  // image size, condition width) and validates the whole config.
  void resolve();
  void validate() const;

  // Named presets: "desk" (default) and "paper12" (12 frames, 77 tokens per
  // frame, tiny widths).
  static RunConfig preset(std::string_view name);
};

std::string to_json(const RunConfig& config);
// Starts from `base` and overrides every field present in the text. Unknown
// keys are rejected with ConfigError.
RunConfig from_json(const std::string& text, RunConfig base = {});

}  // namespace aid::pipeline
