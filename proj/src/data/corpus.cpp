#include "data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "cond/prompter.hpp"
#include "data/render.hpp"
#include "data/video_io.hpp"
#include "parallel.hpp"

namespace aid::data {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct SizeRange {
  double lo, hi;
};

SizeRange size_range(ShapeKind s) {
  switch (s) {
    case ShapeKind::kSquare: return {6.0, 9.0};
    case ShapeKind::kCircle: return {7.0, 10.0};
    case ShapeKind::kTriangle: return {8.0, 11.0};
  }
  return {6.0, 9.0};
}

}  // namespace

SceneSpec sample_scene(nn::Rng& rng, std::size_t frames, std::size_t canvas) {
  constexpr int kMaxRetries = 64;
  constexpr double kMinSpeed = 1.5, kMaxSpeed = 2.5, kMargin = 0.5;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    SceneSpec s;
    s.frames = frames;
    s.canvas = canvas;
    s.shape = kAllShapes[rng.index(kAllShapes.size())];
    s.color = kAllColors[rng.index(kAllColors.size())];
    const Direction dir = kAllDirections[rng.index(kAllDirections.size())];
    const auto range = size_range(s.shape);
    s.size = rng.uniform(range.lo, range.hi);
    const double speed = rng.uniform(kMinSpeed, kMaxSpeed);
    const double travel = speed * static_cast<double>(frames > 0 ? frames - 1 : 0);
    const double half = s.size / 2.0 + kMargin, lim = static_cast<double>(canvas);
    // Start coordinate along the motion axis, measured in the motion direction.
    const double lo = half, hi = lim - half - travel;
    if (hi <= lo) continue;
    const double along = rng.uniform(lo, hi);
    const double across = rng.uniform(half, lim - half);
    switch (dir) {
      case Direction::kRight: s.x0 = along; s.y0 = across; s.vx = speed; break;
      case Direction::kLeft: s.x0 = lim - along; s.y0 = across; s.vx = -speed; break;
      case Direction::kDown: s.y0 = along; s.x0 = across; s.vy = speed; break;
      case Direction::kUp: s.y0 = lim - along; s.x0 = across; s.vy = -speed; break;
    }
    if (s.in_canvas()) return s;
  }
  throw ConfigError("corpus: cannot place a moving object on a " + std::to_string(canvas) +
                    "px canvas over " + std::to_string(frames) + " frames");
}

std::vector<const ManifestItem*> Manifest::split(std::string_view tag) const {
  std::vector<const ManifestItem*> out;
  for (const auto& item : items)
    if (item.split == tag) out.push_back(&item);
  return out;
}

Manifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir) {
  if (config.num == 0) throw ConfigError("corpus: num must be at least 1");
  if (config.k == 0 || config.k >= config.frames)
    throw ConfigError("corpus: need 1 <= K < N reference frames");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "videos", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "videos").string() + "': " + ec.message());

  Manifest m;
  m.seed = config.seed;
  m.frames = config.frames;
  m.canvas = config.canvas;
  m.items.resize(config.num);
  char id[32];
  for (std::size_t i = 0; i < config.num; ++i) {
    std::snprintf(id, sizeof id, "item_%05zu", i);
    m.items[i].id = id;
  }
  // Validation set: the val_fraction of ids with the smallest hash.
  std::vector<std::size_t> order(config.num);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fnv1a64(m.items[a].id) < fnv1a64(m.items[b].id);
  });
  const auto n_val = static_cast<std::size_t>(std::floor(config.val_fraction * double(config.num)));
  for (std::size_t r = 0; r < config.num; ++r) m.items[order[r]].split = r < n_val ? "val" : "train";

  parallel_for(config.num, [&](std::size_t i) {
    auto& item = m.items[i];
    nn::Rng rng(splitmix64(config.seed ^ splitmix64(i)));
    item.scene = sample_scene(rng, config.frames, config.canvas);
    const auto ins = item.scene.instruction();
    item.instruction = ins.text();
    item.states = cond::state_prompter(ins);
    item.k = config.k;
    item.video = "videos/" + item.id + ".aidv";
    save_video(out_dir / item.video, render_video(item.scene));
  });

  std::ofstream os(out_dir / kManifestFile, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in '" + out_dir.string() + "'");
  os << manifest_to_json(m);
  return m;
}

std::string manifest_to_json(const Manifest& m) {
  json items = json::array();
  for (const auto& it : m.items) {
    items.push_back({{"id", it.id},
                     {"instruction", it.instruction},
                     {"states", it.states},
                     {"k", it.k},
                     {"video", it.video},
                     {"split", it.split},
                     {"scene",
                      {{"shape", to_string(it.scene.shape)},
                       {"color", to_string(it.scene.color)},
                       {"x0", it.scene.x0},
                       {"y0", it.scene.y0},
                       {"vx", it.scene.vx},
                       {"vy", it.scene.vy},
                       {"size", it.scene.size}}}});
  }
  json doc = {{"generator_seed", m.seed},
              {"frames", m.frames},
              {"canvas", m.canvas},
              {"items", std::move(items)}};
  return doc.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    Manifest m;
    m.seed = doc.at("generator_seed").get<std::uint64_t>();
    m.frames = doc.at("frames").get<std::size_t>();
    m.canvas = doc.at("canvas").get<std::size_t>();
    for (const auto& j : doc.at("items")) {
      ManifestItem it;
      it.id = j.at("id").get<std::string>();
      it.instruction = j.at("instruction").get<std::string>();
      it.states = j.at("states").get<std::vector<std::string>>();
      it.k = j.at("k").get<std::size_t>();
      it.video = j.at("video").get<std::string>();
      it.split = j.at("split").get<std::string>();
      const auto& s = j.at("scene");
      const auto ins = Instruction::parse(it.instruction);
      it.scene.shape = ins.shape;
      it.scene.color = ins.color;
      it.scene.x0 = s.at("x0").get<double>();
      it.scene.y0 = s.at("y0").get<double>();
      it.scene.vx = s.at("vx").get<double>();
      it.scene.vy = s.at("vy").get<double>();
      it.scene.size = s.at("size").get<double>();
      it.scene.frames = m.frames;
      it.scene.canvas = m.canvas;
      if (it.k == 0 || it.k >= m.frames) throw FormatError("manifest item " + it.id + ": bad K");
      m.items.push_back(std::move(it));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

Manifest load_manifest(const std::filesystem::path& corpus_dir) {
  std::ifstream is(corpus_dir / kManifestFile, std::ios::binary);
  if (!is) throw IoError("no manifest in '" + corpus_dir.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return manifest_from_json(ss.str());
}

}  // namespace aid::data
