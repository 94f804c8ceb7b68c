#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nn/tensor.hpp"

namespace aid::media {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 216-entry uniform colour cube (index 36 r + 6 g + b, levels 0, 51, ..., 255)
// followed by a 40-step grey ramp.
const std::array<Rgb, 256>& palette();
// Palette entry with the smallest maximum per-channel error; the cube alone
// bounds that error by 26.
std::uint8_t nearest_index(Rgb c);

// Maps [-1, 1] to 0..255 with rounding and clamping.
std::uint8_t to_byte(float v);

// Variable-width GIF LZW over 8-bit indices; returns the raw code stream (no
// sub-block framing).
std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> indices);

// Animated GIF89a of a [N, 3, H, W] video in [-1, 1], looping forever.
std::vector<std::uint8_t> encode_gif(const nn::Tensor& video, double fps);
// Frames side by side as one RGB PNG.
std::vector<std::uint8_t> encode_png_strip(const nn::Tensor& video);

// Throw IoError when the file cannot be written.
void write_gif(const std::filesystem::path& path, const nn::Tensor& video, double fps);
void write_png_strip(const std::filesystem::path& path, const nn::Tensor& video);

}  // namespace aid::media
