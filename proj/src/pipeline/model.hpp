#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "pipeline/config.hpp"

namespace aid::pipeline {

enum class Phase { kBase, kFinetune };
std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view name);

// Parameters trained in each phase, by name prefix.
bool trainable_in(Phase phase, std::string_view param_name);

// Codec, conditioner and backbone over one parameter store.
struct Model {
  RunConfig config;
  Phase phase = Phase::kBase;
  nn::ParamStore<float> store;
  codec::PatchCodec codec;
  cond::Conditioner conditioner;
  backbone::UNet unet;

  // Fresh initialization from config.train.seed; the config is resolved first.
  static Model create(RunConfig config, Phase phase = Phase::kBase);
  // Marks parameters frozen according to the phase.
  void set_phase(Phase phase);
  double trainable_fraction() const;
};

// Checkpoint layout (little-endian):
//   "AIDK", u32 version, u32 phase, u32 config length, config JSON,
//   u32 parameter count, parameters (see nn::write_params), u8 frozen flag per parameter.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Model& model);
// Rebuilds the model from the embedded config and loads its parameters.
// Throws FormatError on bad magic/version/truncation, parameter mismatch, or
// frozen flags that disagree with the phase partition.
Model read_checkpoint(std::istream& is);
// Writes through a temporary file and renames, so an existing checkpoint is
// never left half-written.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace aid::pipeline
