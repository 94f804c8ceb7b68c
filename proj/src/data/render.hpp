#pragma once

#include <string>
#include <utility>

#include "data/scene.hpp"
#include "nn/tensor.hpp"

namespace aid::data {

// Pixel video [N, 3, H, W] in [-1, 1]: black background, object drawn with
// 4x4 supersampled coverage. Throws ConfigError for out-of-canvas scenes.
nn::Tensor render_video(const SceneSpec& scene);

struct OracleResult {
  bool follows = false;
  double dx = 0.0, dy = 0.0;  // centroid displacement, last frame minus first
  std::string diagnostic;     // empty unless the verdict was forced
};

// Judges instruction following from the colour-masked centroid of the
// instructed object in the first and last frames. The last-frame object must
// keep its mask mass within a factor of 2 and must not smear (spread at most
// 1.5x the first frame's plus 1 px).
OracleResult oracle_eval(const nn::Tensor& video, const Instruction& instruction,
                         double threshold_px = 3.0);

// Colour-mask weight sum and centroid of one frame; weight is
// clamp((v_target - max(v_other)) / 2, 0, 1) per pixel.
struct Centroid {
  double mass = 0.0, x = 0.0, y = 0.0;
  double spread = 0.0;  // RMS distance of the mask from the centroid, px
};
Centroid color_centroid(const nn::Tensor& video, std::size_t frame, Color color);

}  // namespace aid::data
