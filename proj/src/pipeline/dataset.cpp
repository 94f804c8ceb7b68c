#include "pipeline/dataset.hpp"

#include "data/video_io.hpp"
#include "parallel.hpp"

namespace aid::pipeline {

nn::Tensor frame_of(const nn::Tensor& video, std::size_t i) {
  if (video.rank() != 4 || i >= video.shape()[0])
    throw DimensionError("frame_of: frame " + std::to_string(i) + " of " + nn::shape_str(video.shape()));
  const auto& s = video.shape();
  const std::size_t n = s[1] * s[2] * s[3];
  nn::Tensor out({s[1], s[2], s[3]});
  std::copy_n(video.data() + i * n, n, out.data());
  return out;
}

std::vector<Sample> load_split(const std::filesystem::path& corpus_dir,
                               const data::Manifest& manifest, std::string_view split,
                               const Model& model) {
  const auto& cfg = model.config.data;
  if (manifest.frames != cfg.frames || manifest.canvas != cfg.canvas)
    throw ConfigError("corpus has " + std::to_string(manifest.frames) + " frames at " +
                      std::to_string(manifest.canvas) + "px, model expects " +
                      std::to_string(cfg.frames) + " frames at " + std::to_string(cfg.canvas) + "px");
  const auto items = manifest.split(split);
  std::vector<Sample> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const auto& it = *items[i];
    auto& s = out[i];
    s.id = it.id;
    s.instruction = data::Instruction::parse(it.instruction);
    s.states = it.states;
    s.k = it.k;
    s.video = data::load_video(corpus_dir / it.video);
    s.latents = model.codec.encode(s.video);
    s.first_frame = frame_of(s.video, 0);
  });
  return out;
}

}  // namespace aid::pipeline
