#pragma once

// Minimal GIF89a reader used to check the encoder: global palette, frame
// count, frame delays and LZW-decoded index streams.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace aid::test {

struct DecodedGif {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> palette;               // 3 bytes per entry
  std::vector<std::vector<std::uint8_t>> frames;  // palette indices, row-major
  std::vector<std::size_t> delays;                 // centiseconds
  bool loops = false;
};

inline std::vector<std::uint8_t> lzw_decode(const std::vector<std::uint8_t>& data, int min_code) {
  const std::uint32_t clear = 1u << min_code, end = clear + 1;
  std::vector<std::vector<std::uint8_t>> dict;
  auto reset = [&] {
    dict.clear();
    for (std::uint32_t i = 0; i < clear; ++i) dict.push_back({std::uint8_t(i)});
    dict.push_back({});
    dict.push_back({});
  };
  reset();
  int width = min_code + 1;
  std::size_t bitpos = 0;
  auto read = [&]() -> std::int64_t {
    if (bitpos + width > data.size() * 8) return -1;
    std::uint32_t v = 0;
    for (int b = 0; b < width; ++b, ++bitpos)
      v |= std::uint32_t((data[bitpos / 8] >> (bitpos % 8)) & 1) << b;
    return v;
  };
  std::vector<std::uint8_t> out;
  std::int64_t prev = -1;
  for (;;) {
    const std::int64_t code = read();
    if (code < 0) throw std::runtime_error("gif: code stream ended without end code");
    if (code == clear) {
      reset();
      width = min_code + 1;
      prev = -1;
      continue;
    }
    if (code == end) break;
    std::vector<std::uint8_t> entry;
    if (code < std::int64_t(dict.size())) {
      entry = dict[code];
      if (prev >= 0 && dict.size() < 4096) {
        auto added = dict[prev];
        added.push_back(entry[0]);
        dict.push_back(std::move(added));
      }
    } else if (code == std::int64_t(dict.size()) && prev >= 0) {
      entry = dict[prev];
      entry.push_back(dict[prev][0]);
      dict.push_back(entry);
    } else {
      throw std::runtime_error("gif: invalid code");
    }
    out.insert(out.end(), entry.begin(), entry.end());
    prev = code;
    if (dict.size() == (1u << width) && width < 12) ++width;
  }
  return out;
}

inline DecodedGif decode_gif(const std::vector<std::uint8_t>& b) {
  std::size_t p = 0;
  auto need = [&](std::size_t n) {
    if (p + n > b.size()) throw std::runtime_error("gif: truncated");
  };
  auto u8 = [&] { need(1); return b[p++]; };
  auto u16 = [&] { need(2); const std::size_t v = b[p] | (b[p + 1] << 8); p += 2; return v; };
  need(6);
  if (std::string(b.begin(), b.begin() + 6) != "GIF89a") throw std::runtime_error("gif: bad signature");
  p = 6;
  DecodedGif g;
  g.width = u16();
  g.height = u16();
  const auto packed = u8();
  u8();
  u8();
  if (packed & 0x80) {
    const std::size_t entries = std::size_t(2) << (packed & 7);
    need(3 * entries);
    g.palette.assign(b.begin() + p, b.begin() + p + 3 * entries);
    p += 3 * entries;
  }
  auto sub_blocks = [&] {
    std::vector<std::uint8_t> data;
    for (std::uint8_t len; (len = u8()) != 0;) {
      need(len);
      data.insert(data.end(), b.begin() + p, b.begin() + p + len);
      p += len;
    }
    return data;
  };
  std::size_t delay = 0;
  for (;;) {
    const auto tag = u8();
    if (tag == 0x3B) break;
    if (tag == 0x21) {
      const auto label = u8();
      const auto data = sub_blocks();
      if (label == 0xF9 && data.size() >= 3) delay = data[1] | (data[2] << 8);
      if (label == 0xFF && data.size() >= 11 && std::string(data.begin(), data.begin() + 11) == "NETSCAPE2.0")
        g.loops = true;
      continue;
    }
    if (tag != 0x2C) throw std::runtime_error("gif: unexpected block");
    u16();
    u16();
    const auto w = u16(), h = u16();
    if (u8() & 0x80) throw std::runtime_error("gif: local palettes unsupported");
    const int min_code = u8();
    auto indices = lzw_decode(sub_blocks(), min_code);
    if (indices.size() != w * h) throw std::runtime_error("gif: frame size mismatch");
    g.frames.push_back(std::move(indices));
    g.delays.push_back(delay);
  }
  return g;
}

}  // namespace aid::test
