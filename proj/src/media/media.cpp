#include "media/media.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "error.hpp"

namespace aid::media {

namespace {

constexpr int kCubeLevels = 6;
constexpr int kGreys = 40;

void check_video(const nn::Tensor& video, const char* what) {
  if (video.rank() != 4 || video.shape()[1] != 3 || video.shape()[0] == 0 ||
      video.shape()[2] == 0 || video.shape()[3] == 0)
    throw DimensionError(std::string(what) + ": expected a non-empty [N, 3, H, W] video, got " +
                         nn::shape_str(video.shape()));
  if (video.shape()[2] > 65535 || video.shape()[3] * video.shape()[0] > 65535)
    throw DimensionError(std::string(what) + ": video too large");
}

Rgb pixel(const nn::Tensor& video, std::size_t f, std::size_t y, std::size_t x) {
  const std::size_t h = video.shape()[2], w = video.shape()[3];
  const float* base = video.data() + f * 3 * h * w + y * w + x;
  return {to_byte(base[0]), to_byte(base[h * w]), to_byte(base[2 * h * w])};
}

void put_u16(std::vector<std::uint8_t>& out, std::size_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

class BitWriter {
 public:
  void put(std::uint32_t code, int width) {
    acc_ |= std::uint64_t(code) << bits_;
    bits_ += width;
    while (bits_ >= 8) {
      out_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
      acc_ >>= 8;
      bits_ -= 8;
    }
  }
  std::vector<std::uint8_t> finish() {
    if (bits_ > 0) out_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
    bits_ = 0;
    acc_ = 0;
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
  std::uint64_t acc_ = 0;
  int bits_ = 0;
};

}  // namespace

const std::array<Rgb, 256>& palette() {
  static const std::array<Rgb, 256> table = [] {
    std::array<Rgb, 256> t{};
    for (int r = 0; r < kCubeLevels; ++r)
      for (int g = 0; g < kCubeLevels; ++g)
        for (int b = 0; b < kCubeLevels; ++b)
          t[36 * r + 6 * g + b] = {std::uint8_t(51 * r), std::uint8_t(51 * g), std::uint8_t(51 * b)};
    for (int i = 0; i < kGreys; ++i) {
      const auto v = static_cast<std::uint8_t>(std::lround((i + 1) * 255.0 / (kGreys + 1)));
      t[216 + i] = {v, v, v};
    }
    return t;
  }();
  return table;
}

std::uint8_t nearest_index(Rgb c) {
  auto level = [](int v) { return (v + 25) / 51; };
  const int r = level(c.r), g = level(c.g), b = level(c.b);
  const int cube_err = std::max({std::abs(c.r - 51 * r), std::abs(c.g - 51 * g), std::abs(c.b - 51 * b)});
  // Best grey under the max-channel metric sits at the channel midrange.
  const int mid2 = std::max({c.r, c.g, c.b}) + std::min({c.r, c.g, c.b});
  int best = 36 * r + 6 * g + b, best_err = cube_err;
  const int gi = std::clamp(int(std::lround(mid2 / 2.0 * (kGreys + 1) / 255.0)) - 1, 0, kGreys - 1);
  for (int i = std::max(0, gi - 1); i <= std::min(kGreys - 1, gi + 1); ++i) {
    const int v = palette()[216 + i].r;
    const int err = std::max({std::abs(c.r - v), std::abs(c.g - v), std::abs(c.b - v)});
    if (err < best_err) {
      best_err = err;
      best = 216 + i;
    }
  }
  return static_cast<std::uint8_t>(best);
}

std::uint8_t to_byte(float v) {
  const double x = std::clamp((double(v) + 1.0) * 127.5, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(x));
}

std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> indices) {
  constexpr std::uint32_t kClear = 256, kEnd = 257, kFirst = 258, kMaxCodes = 4096;
  BitWriter out;
  std::unordered_map<std::uint32_t, std::uint32_t> dict;
  int width = 9;
  std::uint32_t next = kFirst;
  out.put(kClear, width);
  if (indices.empty()) {
    out.put(kEnd, width);
    return out.finish();
  }
  std::uint32_t prefix = indices[0];
  for (std::size_t i = 1; i < indices.size(); ++i) {
    const std::uint32_t key = (prefix << 8) | indices[i];
    if (auto it = dict.find(key); it != dict.end()) {
      prefix = it->second;
      continue;
    }
    out.put(prefix, width);
    if (next == (1u << width) && width < 12) ++width;
    dict.emplace(key, next++);
    if (next == kMaxCodes) {
      out.put(kClear, width);
      dict.clear();
      width = 9;
      next = kFirst;
    }
    prefix = indices[i];
  }
  out.put(prefix, width);
  out.put(kEnd, width);
  return out.finish();
}

std::vector<std::uint8_t> encode_gif(const nn::Tensor& video, double fps) {
  check_video(video, "encode_gif");
  if (!(fps > 0.0)) throw ConfigError("encode_gif: fps must be positive");
  const std::size_t n = video.shape()[0], h = video.shape()[2], w = video.shape()[3];
  std::vector<std::uint8_t> out = {'G', 'I', 'F', '8', '9', 'a'};
  put_u16(out, w);
  put_u16(out, h);
  out.insert(out.end(), {0xF7, 0x00, 0x00});  // global table of 256 colours
  for (const auto& c : palette()) out.insert(out.end(), {c.r, c.g, c.b});
  const std::uint8_t loop[] = {0x21, 0xFF, 0x0B, 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E',
                               '2',  '.',  '0',  0x03, 0x01, 0x00, 0x00, 0x00};
  out.insert(out.end(), std::begin(loop), std::end(loop));
  const auto delay = static_cast<std::size_t>(std::clamp(std::lround(100.0 / fps), 1L, 65535L));
  std::vector<std::uint8_t> indices(h * w);
  for (std::size_t f = 0; f < n; ++f) {
    out.insert(out.end(), {0x21, 0xF9, 0x04, 0x00});
    put_u16(out, delay);
    out.insert(out.end(), {0x00, 0x00});
    out.push_back(0x2C);
    put_u16(out, 0);
    put_u16(out, 0);
    put_u16(out, w);
    put_u16(out, h);
    out.push_back(0x00);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) indices[y * w + x] = nearest_index(pixel(video, f, y, x));
    out.push_back(8);  // minimum code size
    const auto codes = lzw_encode(indices);
    for (std::size_t pos = 0; pos < codes.size(); pos += 255) {
      const std::size_t len = std::min<std::size_t>(255, codes.size() - pos);
      out.push_back(static_cast<std::uint8_t>(len));
      out.insert(out.end(), codes.begin() + pos, codes.begin() + pos + len);
    }
    out.push_back(0x00);
  }
  out.push_back(0x3B);
  return out;
}

std::vector<std::uint8_t> encode_png_strip(const nn::Tensor& video) {
  check_video(video, "encode_png_strip");
  const std::size_t n = video.shape()[0], h = video.shape()[2], w = video.shape()[3];
  std::vector<std::uint8_t> rgb(h * n * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t x = 0; x < w; ++x) {
        const Rgb c = pixel(video, f, y, x);
        std::uint8_t* dst = rgb.data() + (y * n * w + f * w + x) * 3;
        dst[0] = c.r;
        dst[1] = c.g;
        dst[2] = c.b;
      }
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png_strip: cannot initialise libpng");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png_strip: libpng failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(n * w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = rgb.data() + y * n * w * 3;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_gif(const std::filesystem::path& path, const nn::Tensor& video, double fps) {
  write_file(path, encode_gif(video, fps));
}

void write_png_strip(const std::filesystem::path& path, const nn::Tensor& video) {
  write_file(path, encode_png_strip(video));
}

}  // namespace aid::media
