#include "data/video_io.hpp"

#include <fstream>
#include <sstream>

#include "nn/params.hpp"

namespace aid::data {

namespace {
constexpr char kMagic[4] = {'A', 'I', 'D', 'V'};
constexpr std::uint32_t kMaxExtent = 1u << 16;
}  // namespace

void write_video(std::ostream& os, const nn::Tensor& video) {
  if (video.rank() != 4)
    throw DimensionError("video must be [N, C, H, W], got " + nn::shape_str(video.shape()));
  os.write(kMagic, 4);
  nn::write_u32(os, kVideoVersion);
  for (std::size_t a = 0; a < 4; ++a) nn::write_u32(os, static_cast<std::uint32_t>(video.dim(a)));
  nn::write_f32(os, video.values());
}

nn::Tensor read_video(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw FormatError("not an AIDV video (bad magic)");
  const auto version = nn::read_u32(is);
  if (version != kVideoVersion)
    throw FormatError("unsupported AIDV version " + std::to_string(version));
  nn::Shape shape(4);
  for (auto& e : shape) {
    e = nn::read_u32(is);
    if (e == 0 || e > kMaxExtent) throw FormatError("AIDV header has a bad extent");
  }
  if (nn::shape_numel(shape) > (std::size_t{1} << 30)) throw FormatError("AIDV video too large");
  nn::Tensor video(shape);
  nn::read_f32(is, video.values());
  return video;
}

void save_video(const std::filesystem::path& path, const nn::Tensor& video) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_video(os, video);
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

nn::Tensor load_video(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_video(is);
}

}  // namespace aid::data
