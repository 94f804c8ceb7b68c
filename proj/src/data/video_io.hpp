#pragma once

#include <filesystem>
#include <iosfwd>

#include "nn/tensor.hpp"

namespace aid::data {

// AIDV layout: "AIDV", u32 version, u32 N, C, H, W, then N*C*H*W f32, all
// little-endian.
inline constexpr std::uint32_t kVideoVersion = 1;

void write_video(std::ostream& os, const nn::Tensor& video);
nn::Tensor read_video(std::istream& is);

void save_video(const std::filesystem::path& path, const nn::Tensor& video);
nn::Tensor load_video(const std::filesystem::path& path);

}  // namespace aid::data
