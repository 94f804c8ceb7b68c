#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "data/scene.hpp"
#include "nn/params.hpp"

namespace aid::data {

struct ManifestItem {
  std::string id;
  std::string instruction;
  std::vector<std::string> states;
  std::size_t k = 1;
  std::string video;  // relative to the corpus directory
  std::string split;  // "train" or "val"
  SceneSpec scene;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::size_t canvas = 0;
  std::vector<ManifestItem> items;

  std::vector<const ManifestItem*> split(std::string_view tag) const;
};

inline constexpr const char* kManifestFile = "manifest.json";

struct CorpusConfig {
  std::size_t num = 512;
  std::size_t frames = 8;
  std::size_t k = 2;
  std::uint64_t seed = 7;
  std::size_t canvas = 32;
  double val_fraction = 0.2;
};

// Samples a scene whose trajectory stays on the canvas. Retries a bounded
// number of times, then throws ConfigError.
SceneSpec sample_scene(nn::Rng& rng, std::size_t frames, std::size_t canvas);

// Writes <out>/manifest.json and <out>/videos/<id>.aidv. Deterministic in the
// config: the same config yields byte-identical files.
Manifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);
Manifest load_manifest(const std::filesystem::path& corpus_dir);

std::uint64_t fnv1a64(std::string_view s);

}  // namespace aid::data
