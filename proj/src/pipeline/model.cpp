#include "pipeline/model.hpp"

#include <cstring>
#include <fstream>

namespace aid::pipeline {

std::string_view to_string(Phase phase) { return phase == Phase::kBase ? "base" : "finetune"; }

Phase phase_from_string(std::string_view name) {
  if (name == "base") return Phase::kBase;
  if (name == "finetune") return Phase::kFinetune;
  throw UsageError("unknown phase '" + std::string(name) + "' (known: base, finetune)");
}

bool trainable_in(Phase phase, std::string_view name) {
  const bool base = name.starts_with("base.");
  return phase == Phase::kBase ? base : !base;
}

Model Model::create(RunConfig config, Phase phase) {
  config.resolve();
  Model m{config, phase, {}, codec::PatchCodec(config.codec), {}, {}};
  nn::Rng rng(config.train.seed);
  m.unet = backbone::UNet::create(m.store, rng, config.backbone);
  m.conditioner = cond::Conditioner::create(m.store, rng, config.conditioning);
  m.set_phase(phase);
  return m;
}

void Model::set_phase(Phase p) {
  phase = p;
  for (auto& param : store) param.frozen = !trainable_in(p, param.name);
}

double Model::trainable_fraction() const {
  return double(store.trainable_element_count()) / double(store.element_count());
}

void write_checkpoint(std::ostream& os, const Model& model) {
  os.write("AIDK", 4);
  nn::write_u32(os, kCheckpointVersion);
  nn::write_u32(os, model.phase == Phase::kBase ? 0 : 1);
  const std::string cfg = to_json(model.config);
  nn::write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  nn::write_u32(os, static_cast<std::uint32_t>(model.store.size()));
  nn::write_params(os, model.store);
  for (const auto& p : model.store) os.put(p.frozen ? 1 : 0);
  if (!os) throw IoError("checkpoint: write failed");
}

Model read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AIDK", 4) != 0)
    throw FormatError("checkpoint: bad magic (expected AIDK)");
  const auto version = nn::read_u32(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto phase_tag = nn::read_u32(is);
  if (phase_tag > 1) throw FormatError("checkpoint: bad phase tag " + std::to_string(phase_tag));
  const Phase phase = phase_tag == 0 ? Phase::kBase : Phase::kFinetune;
  const auto cfg_len = nn::read_u32(is);
  if (cfg_len > (1u << 24)) throw FormatError("checkpoint: config block too large");
  std::string cfg(cfg_len, '\0');
  if (!is.read(cfg.data(), cfg_len)) throw FormatError("checkpoint: truncated config block");
  RunConfig config;
  try {
    config = from_json(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad config: ") + e.what());
  }
  Model model = Model::create(config, phase);
  const auto count = nn::read_u32(is);
  if (count != model.store.size())
    throw FormatError("checkpoint: " + std::to_string(count) + " parameters, model has " +
                      std::to_string(model.store.size()));
  auto loaded = nn::read_params(is, count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& dst = model.store[i];
    auto& src = loaded[i];
    if (src.name != dst.name || src.value.shape() != dst.value.shape())
      throw FormatError("checkpoint: parameter " + std::to_string(i) + " is '" + src.name + "' " +
                        nn::shape_str(src.value.shape()) + ", expected '" + dst.name + "' " +
                        nn::shape_str(dst.value.shape()));
    dst.value = std::move(src.value);
  }
  for (std::size_t i = 0; i < count; ++i) {
    const int flag = is.get();
    if (flag != 0 && flag != 1) throw FormatError("checkpoint: truncated or bad frozen table");
    if (bool(flag) != model.store[i].frozen)
      throw FormatError("checkpoint: frozen flag of '" + model.store[i].name +
                        "' disagrees with the " + std::string(to_string(phase)) + " partition");
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    write_checkpoint(os, model);
    os.flush();
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(is);
}

}  // namespace aid::pipeline
