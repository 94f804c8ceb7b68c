#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "data/corpus.hpp"
#include "pipeline/model.hpp"

namespace aid::pipeline {

// One corpus item held in memory: pixels, latents and its text.
struct Sample {
  std::string id;
  data::Instruction instruction;
  std::vector<std::string> states;
  std::size_t k = 1;
  nn::Tensor video;        // [N, 3, H, W]
  nn::Tensor latents;      // [N, c, h, w]
  nn::Tensor first_frame;  // [3, H, W]
};

// Loads the items of one split ("train" or "val"). Throws ConfigError when the
// corpus geometry disagrees with the model config.
std::vector<Sample> load_split(const std::filesystem::path& corpus_dir,
                               const data::Manifest& manifest, std::string_view split,
                               const Model& model);

nn::Tensor frame_of(const nn::Tensor& video, std::size_t i);

}  // namespace aid::pipeline
