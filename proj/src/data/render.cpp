#include "data/render.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace aid::data {

namespace {

// Point-in-shape test relative to the object centre.
bool inside(ShapeKind shape, double size, double dx, double dy) {
  const double half = size / 2.0;
  switch (shape) {
    case ShapeKind::kSquare:
      return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeKind::kCircle:
      return dx * dx + dy * dy <= half * half;
    case ShapeKind::kTriangle: {
      // Apex at the top of the bounding box, base along its bottom edge.
      if (dy < -half || dy > half) return false;
      const double t = (dy + half) / size;  // 0 at apex, 1 at base
      return std::abs(dx) <= half * t;
    }
  }
  return false;
}

}  // namespace

nn::Tensor render_video(const SceneSpec& scene) {
  if (scene.frames == 0 || scene.canvas == 0) throw ConfigError("render: empty scene");
  if (!scene.in_canvas()) throw ConfigError("render: trajectory leaves the canvas");
  constexpr int kSub = 4;
  const std::size_t N = scene.frames, S = scene.canvas;
  const std::size_t ch = channel_of(scene.color);
  nn::Tensor video({N, 3, S, S}, -1.0f);
  for (std::size_t f = 0; f < N; ++f) {
    const double cx = scene.x0 + static_cast<double>(f) * scene.vx;
    const double cy = scene.y0 + static_cast<double>(f) * scene.vy;
    const double half = scene.size / 2.0 + 1.0;
    const auto y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(cy - half)));
    const auto y_hi = static_cast<std::size_t>(std::min<double>(S, std::ceil(cy + half)));
    const auto x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(cx - half)));
    const auto x_hi = static_cast<std::size_t>(std::min<double>(S, std::ceil(cx + half)));
    for (std::size_t y = y_lo; y < y_hi; ++y)
      for (std::size_t x = x_lo; x < x_hi; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSub; ++sy)
          for (int sx = 0; sx < kSub; ++sx) {
            const double px = static_cast<double>(x) + (sx + 0.5) / kSub;
            const double py = static_cast<double>(y) + (sy + 0.5) / kSub;
            hits += inside(scene.shape, scene.size, px - cx, py - cy);
          }
        const float coverage = static_cast<float>(hits) / (kSub * kSub);
        video[((f * 3 + ch) * S + y) * S + x] = -1.0f + 2.0f * coverage;
      }
  }
  return video;
}

Centroid color_centroid(const nn::Tensor& video, std::size_t frame, Color color) {
  const std::size_t H = video.dim(2), W = video.dim(3);
  const std::size_t target = channel_of(color);
  Centroid c;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      float other = -1.0f;
      for (std::size_t k = 0; k < 3; ++k)
        if (k != target) other = std::max(other, video[((frame * 3 + k) * H + y) * W + x]);
      const float v = video[((frame * 3 + target) * H + y) * W + x];
      const double wgt = std::clamp((static_cast<double>(v) - other) / 2.0, 0.0, 1.0);
      c.mass += wgt;
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      c.x += wgt * px;
      c.y += wgt * py;
      c.spread += wgt * (px * px + py * py);
    }
  if (c.mass > 0) {
    c.x /= c.mass;
    c.y /= c.mass;
    c.spread = std::sqrt(std::max(0.0, c.spread / c.mass - c.x * c.x - c.y * c.y));
  }
  return c;
}

OracleResult oracle_eval(const nn::Tensor& video, const Instruction& instruction,
                         double threshold_px) {
  if (video.rank() != 4 || video.dim(0) == 0 || video.dim(1) != 3) {
    throw DimensionError("oracle: expected a non-empty [N, 3, H, W] video, got " +
                         nn::shape_str(video.shape()));
  }
  constexpr double kMinMass = 1.0;  // at least one fully covered pixel
  OracleResult r;
  const auto first = color_centroid(video, 0, instruction.color);
  if (first.mass < kMinMass) {
    r.diagnostic = std::string(to_string(instruction.color)) + " object absent from frame 0";
    return r;
  }
  const auto last = color_centroid(video, video.dim(0) - 1, instruction.color);
  if (last.mass < kMinMass) {
    r.diagnostic = std::string(to_string(instruction.color)) + " object absent from last frame";
    return r;
  }
  // The object must survive intact: similar mask mass and no smearing.
  constexpr double kMassRatio = 2.0, kSpreadRatio = 1.5, kSpreadSlackPx = 1.0;
  if (last.mass * kMassRatio < first.mass || last.mass > kMassRatio * first.mass) {
    r.diagnostic = "object mass changed from " + std::to_string(first.mass) + " to " +
                   std::to_string(last.mass);
    return r;
  }
  if (last.spread > kSpreadRatio * first.spread + kSpreadSlackPx) {
    r.diagnostic = "object smeared: spread " + std::to_string(first.spread) + " -> " +
                   std::to_string(last.spread) + " px";
    return r;
  }
  r.dx = last.x - first.x;
  r.dy = last.y - first.y;
  const bool horizontal = std::abs(r.dx) >= std::abs(r.dy);
  double along = 0.0;
  switch (instruction.direction) {
    case Direction::kRight: along = horizontal ? r.dx : 0.0; break;
    case Direction::kLeft: along = horizontal ? -r.dx : 0.0; break;
    case Direction::kDown: along = horizontal ? 0.0 : r.dy; break;
    case Direction::kUp: along = horizontal ? 0.0 : -r.dy; break;
  }
  r.follows = along >= threshold_px;
  return r;
}

}  // namespace aid::data
