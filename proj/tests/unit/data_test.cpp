#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cond/prompter.hpp"
#include "data/corpus.hpp"
#include "data/render.hpp"
#include "data/video_io.hpp"
#include "error.hpp"

namespace aid {
namespace {

using namespace data;
namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("aid_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

SceneSpec moving(Direction d, Color color = Color::kRed, ShapeKind shape = ShapeKind::kSquare) {
  SceneSpec s;
  s.shape = shape;
  s.color = color;
  s.size = 8;
  const double speed = 2.0;
  s.x0 = s.y0 = 16;
  switch (d) {
    case Direction::kRight: s.x0 = 6; s.vx = speed; break;
    case Direction::kLeft: s.x0 = 26; s.vx = -speed; break;
    case Direction::kDown: s.y0 = 6; s.vy = speed; break;
    case Direction::kUp: s.y0 = 26; s.vy = -speed; break;
  }
  return s;
}

TEST(Instruction, RoundTripsThroughGrammar) {
  for (auto c : kAllColors)
    for (auto s : kAllShapes)
      for (auto d : kAllDirections) {
        const Instruction ins{c, s, d};
        EXPECT_EQ(Instruction::parse(ins.text()), ins);
      }
  EXPECT_EQ(Instruction::parse("Move the RED square  right").direction, Direction::kRight);
}

TEST(Instruction, OutsideGrammarNamesIt) {
  try {
    Instruction::parse("rotate the red square");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("rotate the red square"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("move the"), std::string::npos);
  }
}

TEST(Prompter, TemplateInstantiation) {
  const std::vector<std::string> want = {"red square at start position", "red square moving right",
                                         "red square continuing right", "red square at right side"};
  EXPECT_EQ(cond::state_prompter("move the red square right"), want);
  EXPECT_EQ(cond::state_prompter("move the blue circle up").back(), "blue circle at top side");
}

TEST(Prompter, CardinalityAndDeterminism) {
  for (auto d : kAllDirections) {
    const Instruction ins{Color::kGreen, ShapeKind::kTriangle, d};
    const auto a = cond::state_prompter(ins);
    EXPECT_EQ(a.size(), cond::kNumStates);
    EXPECT_EQ(a, cond::state_prompter(ins));
  }
  EXPECT_THROW(cond::state_prompter("move the red hexagon right"), UsageError);
}

TEST(Render, StaticSceneFramesIdentical) {
  SceneSpec s;
  const auto v = render_video(s);
  const std::size_t frame = 3 * 32 * 32;
  for (std::size_t f = 1; f < s.frames; ++f)
    for (std::size_t i = 0; i < frame; ++i) ASSERT_EQ(v[f * frame + i], v[i]);
  for (float x : v.values()) {
    EXPECT_GE(x, -1.0f);
    EXPECT_LE(x, 1.0f);
  }
}

TEST(Render, CentroidStrictlyIncreasesForRightMotion) {
  const auto s = moving(Direction::kRight);
  const auto v = render_video(s);
  double prev = -1;
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto c = color_centroid(v, f, s.color);
    EXPECT_GT(c.x, prev);
    EXPECT_NEAR(c.x, s.x0 + 2.0 * double(f), 1e-6);
    prev = c.x;
  }
}

TEST(Render, SquareAreaOracle) {
  for (double side : {6.0, 7.5, 9.0}) {
    SceneSpec s;
    s.size = side;
    s.x0 = 15.3;
    s.y0 = 16.7;
    s.frames = 1;
    const auto v = render_video(s);
    double mass = 0;
    for (std::size_t i = 0; i < 32 * 32; ++i) mass += (v[i] + 1.0) / 2.0;  // red channel
    // Supersampling quantizes each boundary to a quarter pixel.
    EXPECT_NEAR(mass, side * side, 4 * side * 0.25);
  }
}

TEST(Render, OutOfCanvasRejected) {
  SceneSpec s;
  s.x0 = 30;
  s.vx = 2;
  EXPECT_THROW(render_video(s), ConfigError);
}

TEST(Oracle, ConfusionMatrixIsDiagonal) {
  for (auto shape : kAllShapes)
    for (auto color : kAllColors)
      for (auto truth : kAllDirections) {
        const auto v = render_video(moving(truth, color, shape));
        for (auto asked : kAllDirections) {
          const auto r = oracle_eval(v, Instruction{color, shape, asked});
          EXPECT_EQ(r.follows, truth == asked)
              << to_string(truth) << " judged as " << to_string(asked);
        }
      }
}

TEST(Oracle, StaticVideoDoesNotFollow) {
  const auto v = render_video(SceneSpec{});
  EXPECT_FALSE(oracle_eval(v, Instruction{Color::kRed, ShapeKind::kSquare, Direction::kLeft}).follows);
}

TEST(Oracle, AbsentColorGivesDiagnostic) {
  const auto v = render_video(moving(Direction::kRight, Color::kRed));
  const auto r = oracle_eval(v, Instruction{Color::kBlue, ShapeKind::kSquare, Direction::kRight});
  EXPECT_FALSE(r.follows);
  EXPECT_NE(r.diagnostic.find("blue"), std::string::npos);
}

TEST(Oracle, NoisyLastFrameDoesNotFollow) {
  // A structureless last frame has its colour centroid near the canvas centre,
  // which sits in the instructed direction for any object that starts near an edge.
  auto v = render_video(moving(Direction::kRight, Color::kRed));
  nn::Rng rng(5);
  const std::size_t per = 3 * 32 * 32, last = v.dim(0) - 1;
  for (std::size_t i = 0; i < per; ++i) v[last * per + i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto r = oracle_eval(v, Instruction{Color::kRed, ShapeKind::kSquare, Direction::kRight});
  EXPECT_FALSE(r.follows);
  EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Oracle, SmearedObjectDoesNotFollow) {
  // The object drawn at both its start and end positions.
  const auto right = render_video(moving(Direction::kRight, Color::kGreen));
  auto start_scene = moving(Direction::kRight, Color::kGreen);
  auto v = right;
  const std::size_t per = 3 * 32 * 32, last = v.dim(0) - 1;
  start_scene.vx = 0.0;
  start_scene.frames = 1;
  const auto still = render_video(start_scene);
  for (std::size_t i = 0; i < per; ++i) v[last * per + i] = std::max(right[last * per + i], still[i]);
  const auto c0 = color_centroid(v, 0, Color::kGreen), c1 = color_centroid(v, last, Color::kGreen);
  EXPECT_GT(c1.spread, 1.5 * c0.spread + 1.0);
  EXPECT_FALSE(oracle_eval(v, Instruction{Color::kGreen, ShapeKind::kSquare, Direction::kRight}).follows);
}

TEST(VideoIo, RoundTripAndHeader) {
  const auto dir = temp_dir("video");
  fs::create_directories(dir);
  const auto v = render_video(moving(Direction::kDown, Color::kGreen));
  save_video(dir / "a.aidv", v);
  EXPECT_EQ(load_video(dir / "a.aidv"), v);
  const auto bytes = slurp(dir / "a.aidv");
  ASSERT_EQ(bytes.size(), 24 + v.numel() * 4);
  EXPECT_EQ(bytes.substr(0, 4), "AIDV");
  const unsigned char hdr[] = {1, 0, 0, 0, 8, 0, 0, 0, 3, 0, 0, 0, 32, 0, 0, 0, 32, 0, 0, 0};
  EXPECT_EQ(bytes.substr(4, 20), std::string(reinterpret_cast<const char*>(hdr), 20));
  fs::remove_all(dir);
}

TEST(VideoIo, TruncatedAndBadMagic) {
  const auto v = render_video(SceneSpec{});
  std::stringstream ss;
  write_video(ss, v);
  const auto full = ss.str();
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, full.size() / 2, full.size() - 1}) {
    std::istringstream is(full.substr(0, cut));
    EXPECT_THROW(read_video(is), FormatError) << cut;
  }
  std::string bad = full;
  bad[0] = 'X';
  std::istringstream is(bad);
  EXPECT_THROW(read_video(is), FormatError);
  EXPECT_THROW(load_video("/nonexistent/x.aidv"), IoError);
}

TEST(Corpus, SplitArithmeticAndSelfConsistency) {
  const auto dir = temp_dir("corpus10");
  const auto m = generate_corpus({.num = 10, .frames = 8, .k = 2, .seed = 5}, dir);
  EXPECT_EQ(m.split("train").size(), 8u);
  EXPECT_EQ(m.split("val").size(), 2u);
  const auto loaded = load_manifest(dir);
  ASSERT_EQ(loaded.items.size(), 10u);
  for (const auto& it : loaded.items) {
    const auto v = load_video(dir / it.video);
    EXPECT_EQ(v.shape(), (nn::Shape{8, 3, 32, 32}));
    const auto r = oracle_eval(v, Instruction::parse(it.instruction));
    EXPECT_TRUE(r.follows) << it.id << " " << it.instruction;
    EXPECT_EQ(it.states, cond::state_prompter(it.instruction));
    EXPECT_LT(it.k, loaded.frames);
  }
  fs::remove_all(dir);
}

TEST(Corpus, SameSeedIsByteIdentical) {
  const auto a = temp_dir("corpus_a"), b = temp_dir("corpus_b");
  generate_corpus({.num = 12, .seed = 9}, a);
  generate_corpus({.num = 12, .seed = 9}, b);
  EXPECT_EQ(slurp(a / kManifestFile), slurp(b / kManifestFile));
  for (const auto& e : fs::directory_iterator(a / "videos"))
    EXPECT_EQ(slurp(e.path()), slurp(b / "videos" / e.path().filename()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Corpus, LargeCorpusAllFollow) {
  const auto dir = temp_dir("corpus_big");
  const auto m = generate_corpus({.num = 200, .seed = 21}, dir);
  std::size_t val = 0;
  for (const auto& it : m.items) {
    val += it.split == "val";
    EXPECT_TRUE(oracle_eval(load_video(dir / it.video), Instruction::parse(it.instruction)).follows);
  }
  EXPECT_EQ(val, 40u);
  fs::remove_all(dir);
}

TEST(Corpus, UnwritablePath) {
  EXPECT_THROW(generate_corpus({.num = 2}, "/proc/aid_cannot_write"), IoError);
}

}  // namespace
}  // namespace aid
