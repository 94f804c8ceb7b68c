#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "data/video_io.hpp"
#include "pipeline/predict.hpp"
#include "pipeline/trainer.hpp"
#include "test_util.hpp"

namespace aid {
namespace {

namespace fs = std::filesystem;
using pipeline::Ablation;
using pipeline::Model;
using pipeline::Phase;
using pipeline::RunConfig;

RunConfig tiny_run() {
  auto c = RunConfig::preset("desk");
  c.data.num = 12;
  c.data.frames = 4;
  c.data.k = 1;
  c.backbone.widths = {8, 16};
  c.backbone.sigma_features = 8;
  c.conditioning.width = 8;
  c.conditioning.tokens_per_frame = 2;
  c.train.steps = 4;
  c.train.batch = 2;
  c.train.checkpoint_every = 2;
  c.train.log_every = 2;
  c.diffusion.sampler.steps = 3;
  c.resolve();
  return c;
}

std::string bytes_of(const Model& m) {
  std::ostringstream os;
  pipeline::write_checkpoint(os, m);
  return os.str();
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("aid_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    manifest_ = data::generate_corpus(tiny_run().data, dir_ / "corpus");
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static Model base_model() {
    auto m = Model::create(tiny_run());
    nn::Rng rng(99);
    for (auto& p : m.store)
      if (p.name.starts_with("base.") && !p.name.ends_with(".gain"))
        p.value = nn::random_normal<float>(p.value.shape(), 0.1, rng);
    return m;
  }
  static std::vector<pipeline::Sample> split(const Model& m, const char* tag) {
    return pipeline::load_split(dir_ / "corpus", manifest_, tag, m);
  }

  static inline fs::path dir_;
  static inline data::Manifest manifest_;
};

TEST(Config, JsonRoundTrip) {
  const auto c = tiny_run();
  const auto text = pipeline::to_json(c);
  EXPECT_EQ(pipeline::to_json(pipeline::from_json(text)), text);
}

TEST(Config, PartialOverride) {
  const auto c = pipeline::from_json(R"({"train": {"steps": 7}, "diffusion": {"s_t": 2.5}})");
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(c.diffusion.guidance.s_t, 2.5);
  EXPECT_EQ(c.train.batch, RunConfig{}.train.batch);
  EXPECT_EQ(c.backbone.latent_channels, 48u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(pipeline::from_json(R"({"train": {"stepz": 7}})"), ConfigError);
  EXPECT_THROW(pipeline::from_json(R"({"colour": {}})"), ConfigError);
  EXPECT_THROW(pipeline::from_json(R"({"train": {"p_drop_t": 1.5}})"), ConfigError);
  EXPECT_THROW(pipeline::from_json(R"({"train": {"steps": "many"}})"), ConfigError);
  EXPECT_THROW(pipeline::from_json(R"({"data": {"k": 8}})"), ConfigError);
  EXPECT_THROW(pipeline::from_json(R"({"ablation": {"no_mc": true}})"), ConfigError);
  EXPECT_THROW(pipeline::from_json("not json"), ConfigError);
  EXPECT_NO_THROW(pipeline::from_json(R"({"ablation": {"no_mc": true, "no_me": true, "no_de": true}})"));
}

TEST(AblationNames, ImplicationsAndEffects) {
  for (const auto& name : Ablation::names()) {
    const auto a = Ablation::from_name(name);
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.name(), name);
  }
  const auto mc = Ablation::from_name("no_mc");
  EXPECT_TRUE(mc.no_me && mc.no_de && mc.drops_condition());
  const auto ta = Ablation::from_name("no_ta");
  EXPECT_TRUE(ta.adapters().spatial);
  EXPECT_FALSE(ta.adapters().short_term || ta.adapters().long_term);
  EXPECT_FALSE(Ablation::from_name("no_adapter").adapters().any());
  EXPECT_FALSE(Ablation::from_name("no_llava").switches().states);
  EXPECT_FALSE(Ablation::from_name("no_me").switches().multimodal);
  EXPECT_TRUE(Ablation::from_name("no_me").switches().decomposed);
  EXPECT_THROW(Ablation::from_name("no_everything"), UsageError);
}

TEST(Config, PaperPresets) {
  const auto ssv2 = RunConfig::preset("paper-ssv2");
  EXPECT_EQ(ssv2.data.frames, 12u);
  EXPECT_EQ(ssv2.data.k, 2u);
  EXPECT_EQ(ssv2.conditioning.tokens_per_frame, 77u);
  EXPECT_EQ(RunConfig::preset("paper-epic").data.k, 1u);
  EXPECT_EQ(RunConfig::preset("paper-bridge").data.k, 1u);
  EXPECT_EQ(RunConfig::preset("paper-bridge").data.frames, 16u);
  EXPECT_THROW(RunConfig::preset("huge"), UsageError);
}

TEST(Phases, Partition) {
  auto m = Model::create(tiny_run());
  for (const auto& p : m.store) EXPECT_EQ(p.frozen, !p.name.starts_with("base.")) << p.name;
  m.set_phase(Phase::kFinetune);
  for (const auto& p : m.store) EXPECT_EQ(p.frozen, p.name.starts_with("base.")) << p.name;
  EXPECT_GT(m.trainable_fraction(), 0.0);
  EXPECT_LT(m.trainable_fraction(), 1.0);
  EXPECT_THROW(pipeline::phase_from_string("warmup"), UsageError);
}

TEST_F(PipelineTest, CheckpointRoundTripIsBitIdentical) {
  auto m = base_model();
  m.set_phase(Phase::kFinetune);
  const auto path = dir_ / "rt.aidk";
  pipeline::save_checkpoint(path, m);
  const auto loaded = pipeline::load_checkpoint(path);
  EXPECT_EQ(loaded.phase, Phase::kFinetune);
  EXPECT_EQ(bytes_of(loaded), bytes_of(m));
  for (std::size_t i = 0; i < m.store.size(); ++i) {
    EXPECT_EQ(loaded.store[i].value, m.store[i].value);
    EXPECT_EQ(loaded.store[i].frozen, m.store[i].frozen);
  }
}

TEST_F(PipelineTest, CheckpointRejectsCorruption) {
  const auto m = base_model();
  const auto good = bytes_of(m);
  auto load = [](const std::string& s) {
    std::istringstream is(s);
    return pipeline::read_checkpoint(is);
  };
  EXPECT_NO_THROW(load(good));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(load(bad_magic), FormatError);
  EXPECT_THROW(load(good.substr(0, good.size() / 2)), FormatError);
  EXPECT_THROW(load(good.substr(0, good.size() - 1)), FormatError);
  // Flip one frozen flag: the table no longer matches the base partition.
  auto tampered = good;
  tampered.back() = tampered.back() == 1 ? 0 : 1;
  EXPECT_THROW(load(tampered), FormatError);
  EXPECT_THROW(pipeline::load_checkpoint(dir_ / "missing.aidk"), IoError);
}

TEST_F(PipelineTest, FinetuneStepZeroMatchesBase) {
  auto base = base_model();
  const auto data = split(base, "train");
  auto ft = base;
  ft.set_phase(Phase::kFinetune);
  nn::Rng rng(5);
  for (const auto& s : data) {
    const double sigma = std::exp(rng.normal() - 1.0);
    const auto noise = nn::random_normal<float>(s.latents.shape(), 1.0, rng);
    const double b = pipeline::sample_loss(base, s, sigma, noise, true, false, nullptr);
    EXPECT_EQ(pipeline::sample_loss(ft, s, sigma, noise, false, false, nullptr), b);
    EXPECT_EQ(pipeline::sample_loss(ft, s, sigma, noise, true, false, nullptr), b);
  }
}

TEST_F(PipelineTest, FreezeContractAndDeterminism) {
  auto base = base_model();
  const auto data = split(base, "train");
  auto ft1 = base, ft2 = base;
  ft1.set_phase(Phase::kFinetune);
  ft2.set_phase(Phase::kFinetune);
  const auto r1 = pipeline::train(ft1, data, {});
  const auto r2 = pipeline::train(ft2, data, {});
  EXPECT_EQ(r1.losses, r2.losses);
  bool moved = false;
  for (std::size_t i = 0; i < base.store.size(); ++i) {
    const auto& p = ft1.store[i];
    if (p.name.starts_with("base.")) EXPECT_EQ(p.value, base.store[i].value) << p.name;
    else moved |= !(p.value == base.store[i].value);
    EXPECT_EQ(p.value, ft2.store[i].value) << p.name;
  }
  EXPECT_TRUE(moved);
}

TEST_F(PipelineTest, TrainWritesCheckpointsAndLog) {
  auto m = base_model();
  const auto data = split(m, "train");
  const auto ckpt = dir_ / "train.aidk";
  std::vector<std::size_t> logged;
  pipeline::TrainOptions opt;
  opt.checkpoint = ckpt;
  opt.on_log = [&](const pipeline::TrainProgress& p) { logged.push_back(p.step); };
  const auto result = pipeline::train(m, data, opt);
  EXPECT_EQ(result.losses.size(), 4u);
  EXPECT_EQ(logged, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(bytes_of(pipeline::load_checkpoint(ckpt)), bytes_of(m));
  auto log = ckpt;
  log += ".log.csv";
  std::ifstream is(log);
  std::size_t lines = 0;
  for (std::string l; std::getline(is, l);) ++lines;
  EXPECT_EQ(lines, 5u);
}

TEST_F(PipelineTest, NonFiniteLossAbortsAndKeepsCheckpoint) {
  auto m = base_model();
  const auto data = split(m, "train");
  const auto ckpt = dir_ / "nan.aidk";
  auto poisoned = m;
  poisoned.store.at("base.out.proj.weight").value[0] = std::nanf("");
  pipeline::TrainOptions opt;
  opt.checkpoint = ckpt;
  try {
    pipeline::train(poisoned, data, opt);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
  // The checkpoint on disk is the pre-training state, still loadable.
  EXPECT_EQ(bytes_of(pipeline::load_checkpoint(ckpt)), bytes_of(poisoned));
}

TEST_F(PipelineTest, PredictContract) {
  auto m = base_model();
  m.set_phase(Phase::kFinetune);
  test::randomize(m.store, *std::make_unique<nn::Rng>(7), 0.1);
  const auto val = split(m, "val");
  ASSERT_FALSE(val.empty());
  const auto& s = val.front();
  pipeline::PredictOptions po;
  po.k = 1;
  po.instruction = s.instruction.text();
  po.sampler.steps = 3;
  po.seed = 11;
  const auto a = pipeline::predict(m, s.video, po);
  const auto b = pipeline::predict(m, s.video, po);
  EXPECT_EQ(a.video.shape(), s.video.shape());
  EXPECT_EQ(a.video, b.video);
  EXPECT_GE(pipeline::psnr(a.video, s.video, 0, 1), 30.0);
  for (float v : a.video.values()) EXPECT_TRUE(v >= -1.0f && v <= 1.0f);

  // Zero guidance is exactly unconditional sampling.
  auto zero = po;
  zero.scales = {0.0, 0.0};
  auto uncond = po;
  uncond.unconditional = true;
  EXPECT_EQ(pipeline::predict(m, s.video, zero).latents, pipeline::predict(m, s.video, uncond).latents);

  // A different seed gives a different sample.
  auto other = po;
  other.seed = 12;
  EXPECT_FALSE(pipeline::predict(m, s.video, other).latents == a.latents);

  auto bad = po;
  bad.instruction = "move the red blob left";
  EXPECT_THROW(pipeline::predict(m, s.video, bad), UsageError);
  bad = po;
  bad.k = 4;
  EXPECT_THROW(pipeline::predict(m, s.video, bad), UsageError);
  EXPECT_THROW(pipeline::predict(m, nn::Tensor({4, 3, 16, 16}), po), DimensionError);
}

TEST_F(PipelineTest, EvaluateReport) {
  auto m = base_model();
  m.set_phase(Phase::kFinetune);
  const auto val = split(m, "val");
  pipeline::EvalOptions eo;
  eo.seeds = {0, 1};
  eo.sampler.steps = 2;
  eo.ablation = Ablation::from_name("no_mc");
  const auto r = pipeline::evaluate(m, val, eo);
  EXPECT_EQ(r.items, val.size());
  ASSERT_EQ(r.seed_accuracy.size(), 2u);
  EXPECT_GE(r.instruction_accuracy, 0.0);
  EXPECT_LE(r.instruction_accuracy, 1.0);
  EXPECT_GE(r.cond_psnr, 30.0);
  const auto doc = nlohmann::json::parse(pipeline::to_json(r));
  EXPECT_EQ(doc["ablation"], "no_mc");
  EXPECT_EQ(doc["config"]["data"]["frames"], 4);
  EXPECT_DOUBLE_EQ(doc["trainable_param_fraction"].get<double>(), m.trainable_fraction());
  eo.limit = 1;
  EXPECT_EQ(pipeline::evaluate(m, val, eo).items, 1u);
}

TEST(Psnr, Basics) {
  nn::Tensor a({2, 1, 1, 2}, {0.f, 0.f, 0.f, 0.f}), b = a;
  EXPECT_EQ(pipeline::psnr(a, b, 0, 2), pipeline::kPsnrCap);
  b[2] = 0.2f;
  b[3] = 0.2f;  // frame 1 MSE 0.04 -> 10 log10(4 / 0.04) = 20 dB
  EXPECT_NEAR(pipeline::psnr(a, b, 1, 2), 20.0, 1e-5);
  EXPECT_EQ(pipeline::psnr(a, b, 0, 1), pipeline::kPsnrCap);
  EXPECT_THROW(pipeline::psnr(a, b, 1, 3), DimensionError);
}

}  // namespace
}  // namespace aid
