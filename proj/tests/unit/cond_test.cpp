#include <gtest/gtest.h>

#include <cmath>

#include "cond/mcondition.hpp"
#include "nn/grad_check.hpp"
#include "test_util.hpp"

namespace aid {
namespace {

using namespace cond;
using nn::ParamStore;
using nn::Rng;
using nn::Tensor;
using nn::Tensor64;

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

TEST(Tokenizer, DeterministicPaddedAndCaseInsensitive) {
  const auto a = tokenize("move the red square right", 16, 512);
  ASSERT_EQ(a.size(), 16u);
  EXPECT_EQ(a, tokenize("MOVE the  red square right", 16, 512));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_GT(a[i], 0u);
  for (std::size_t i = 5; i < 16; ++i) EXPECT_EQ(a[i], 0u);
  EXPECT_EQ(tokenize("a b c d e", 3, 512).size(), 3u);
  for (auto id : tokenize("x y z w", 4, 7)) EXPECT_LT(id, 7u);
}

struct TextFixture : ::testing::Test {
  ParamStore<float> store;
  Rng rng{42};
  TextEncoder enc = TextEncoder::create(store, rng, "text_enc", {});
  Tensor encode(const std::string& s) {
    TextEncoder::Cache<float> c;
    return enc.forward(store, s, c);
  }
};

TEST_F(TextFixture, DeterministicAndShaped) {
  const auto a = encode("move the red square right");
  EXPECT_EQ(a.shape(), (nn::Shape{16, 32}));
  EXPECT_EQ(a, encode("move the red square right"));
}

TEST_F(TextFixture, EmptyStringIsNullEmbedding) {
  const auto null = encode("");
  for (float v : null.values()) EXPECT_EQ(v, 0.0f);
}

TEST_F(TextFixture, DistinctInstructionsDiffer) {
  EXPECT_GT(max_abs_diff(encode("move the red square right"), encode("move the red square left")),
            1e-3);
}

TEST_F(TextFixture, PermutationSensitive) {
  EXPECT_GT(max_abs_diff(encode("red square"), encode("square red")), 1e-3);
}

TEST(VisualEncoder, TokenCountAndDistinctness) {
  ParamStore<float> store;
  Rng rng(5);
  auto enc = VisualEncoder::create(store, rng, "vis_enc", {});
  EXPECT_EQ(enc.config.tokens(), 16u);
  VisualEncoder::Cache<float> c;
  const Tensor black({3, 32, 32}, -1.0f), white({3, 32, 32}, 1.0f);
  const auto eb = enc.forward(store, black, c);
  EXPECT_EQ(eb.shape(), (nn::Shape{16, 32}));
  EXPECT_EQ(eb, enc.forward(store, black, c));
  const auto ew = enc.forward(store, white, c);
  double mean_diff = 0;
  for (std::size_t ch = 0; ch < 32; ++ch) {
    double mb = 0, mw = 0;
    for (std::size_t t = 0; t < 16; ++t) {
      mb += eb[t * 32 + ch] / 16;
      mw += ew[t * 32 + ch] / 16;
    }
    mean_diff = std::max(mean_diff, std::abs(mb - mw));
  }
  EXPECT_GT(mean_diff, 1e-3);
  EXPECT_THROW(enc.forward(store, Tensor({3, 30, 32}), c), ConfigError);
}

TEST(DQFormer, ZeroInitBranchesReturnResidualStreams) {
  ParamStore<float> store;
  Rng rng(1);
  auto dq = DQFormer::create(store, rng, "dqformer", {.depth = 2});
  const auto t1 = nn::random_normal<float>({16, 32}, 1.0, rng);
  const auto v = nn::random_normal<float>({16, 32}, 1.0, rng);
  const auto t2 = nn::random_normal<float>({64, 32}, 1.0, rng);
  DQFormer::MultimodalCache<float> mc;
  DQFormer::DecomposedCache<float> dc;
  EXPECT_EQ(dq.multimodal(store, t1, v, mc), t1);
  EXPECT_EQ(dq.decomposed(store, t1, t2, dc), store.value(dq.query));
}

TEST(DQFormer, SingleVisualTokenGivesEqualCrossAttentionRows) {
  ParamStore<float> store;
  Rng rng(2);
  auto dq = DQFormer::create(store, rng, "dqformer", {});
  test::randomize(store, rng);
  // Leave only the cross-attention path active.
  for (auto& p : store)
    if (p.name.find(".mm.l0.self.attn.o") != std::string::npos ||
        p.name.find(".mm.l0.ffn.down") != std::string::npos)
      p.value.fill(0.0f);
  const auto t1 = nn::random_normal<float>({16, 32}, 1.0, rng);
  const auto v = nn::random_normal<float>({1, 32}, 1.0, rng);
  DQFormer::MultimodalCache<float> c;
  const auto y = dq.multimodal(store, t1, v, c);
  const auto delta = nn::sub(y, t1);
  for (std::size_t r = 1; r < 16; ++r)
    for (std::size_t k = 0; k < 32; ++k) EXPECT_NEAR(delta[r * 32 + k], delta[k], 1e-5);
}

// Row-wise layer norm with unit gain and zero bias, for the hand oracle.
std::vector<double> ln_row(std::vector<double> x) {
  double mean = 0, var = 0;
  for (double v : x) mean += v / double(x.size());
  for (double v : x) var += (v - mean) * (v - mean) / double(x.size());
  for (double& v : x) v = (v - mean) / std::sqrt(var + 1e-5);
  return x;
}

TEST(DQFormer, MultimodalMatchesHandAttention) {
  ParamStore<double> store;
  Rng rng(3);
  auto dq = DQFormer::create(store, rng, "dq", {.width = 2, .frames = 1, .tokens_per_frame = 1,
                                                .heads = 1, .depth = 1});
  const Tensor64 t1({2, 2}, {0.3, -0.8, 1.1, 0.4});
  const Tensor64 v({2, 2}, {0.5, 0.2, -0.7, 0.9});
  const Tensor64 wq({2, 2}, {0.4, -0.3, 0.2, 0.6}), wk({2, 2}, {-0.5, 0.1, 0.7, 0.3}),
      wv({2, 2}, {0.9, -0.2, 0.4, 0.8}), wo({2, 2}, {0.6, 0.1, -0.3, 0.5});
  store.at("dq.mm.l0.cross.attn.q.weight").value = wq;
  store.at("dq.mm.l0.cross.attn.k.weight").value = wk;
  store.at("dq.mm.l0.cross.attn.v.weight").value = wv;
  store.at("dq.mm.l0.cross.attn.o.weight").value = wo;
  DQFormer::MultimodalCache<double> c;
  const auto y = dq.multimodal(store, t1, v, c);

  auto mat = [](const std::vector<double>& x, const Tensor64& w) {
    return std::vector<double>{x[0] * w[0] + x[1] * w[2], x[0] * w[1] + x[1] * w[3]};
  };
  const std::vector<double> v0{v[0], v[1]}, v1{v[2], v[3]};
  const auto k0 = mat(v0, wk), k1 = mat(v1, wk), vv0 = mat(v0, wv), vv1 = mat(v1, wv);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto q = mat(ln_row({t1[2 * r], t1[2 * r + 1]}), wq);
    const double s0 = (q[0] * k0[0] + q[1] * k0[1]) / std::sqrt(2.0);
    const double s1 = (q[0] * k1[0] + q[1] * k1[1]) / std::sqrt(2.0);
    const double p0 = std::exp(s0) / (std::exp(s0) + std::exp(s1)), p1 = 1 - p0;
    const auto o = mat({p0 * vv0[0] + p1 * vv1[0], p0 * vv0[1] + p1 * vv1[1]}, wo);
    EXPECT_NEAR(y[2 * r], t1[2 * r] + o[0], 1e-6);
    EXPECT_NEAR(y[2 * r + 1], t1[2 * r + 1] + o[1], 1e-6);
  }
}

TEST(DQFormer, DecomposedScalarCaseOracle) {
  // Width 1: every layer norm collapses to its bias, each single-key attention
  // returns its value row, so the branch is a closed-form composition.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParamStore<double> store;
    Rng rng(seed);
    auto dq = DQFormer::create(store, rng, "dq", {.width = 1, .frames = 1, .tokens_per_frame = 1,
                                                  .heads = 1, .depth = 1, .ffn_mult = 1});
    test::randomize(store, rng);
    const Tensor64 t1({1, 1}, {0.7}), t2({1, 1}, {-1.3});
    DQFormer::DecomposedCache<double> c;
    const auto y = dq.decomposed(store, t1, t2, c);
    auto P = [&](const std::string& n) { return store.at("dq.de.l0." + n).value[0]; };
    const double q0 = store.at("dq.query").value[0];
    const double self = P("self.norm.bias") * P("self.attn.v.weight") * P("self.attn.o.weight");
    const double c1 = t1[0] * P("cross_t1.attn.v.weight") * P("cross_t1.attn.o.weight");
    const double c2 = t2[0] * P("cross_t2.attn.v.weight") * P("cross_t2.attn.o.weight");
    const double hidden = P("ffn.norm.bias") * P("ffn.up.weight") + P("ffn.up.bias");
    const double ffn = nn::gelu_scalar(hidden) * P("ffn.down.weight") + P("ffn.down.bias");
    EXPECT_NEAR(y[0], q0 + self + c1 + c2 + ffn, 1e-12);
  }
}

TEST(DQFormer, MissingStatesFallBackToInstruction) {
  ParamStore<float> store;
  Rng rng(4);
  auto dq = DQFormer::create(store, rng, "dqformer", {});
  test::randomize(store, rng);
  const auto t1 = nn::random_normal<float>({16, 32}, 1.0, rng);
  DQFormer::DecomposedCache<float> c;
  EXPECT_EQ(dq.decomposed(store, t1, Tensor(), c), dq.decomposed(store, t1, t1, c));
}

TEST(DQFormer, PaperScalePresetGives924Rows) {
  ParamStore<float> store;
  Rng rng(5);
  auto dq = DQFormer::create(store, rng, "dqformer",
                             {.width = 8, .frames = 12, .tokens_per_frame = 77, .heads = 2});
  const auto t1 = nn::random_normal<float>({16, 8}, 1.0, rng);
  DQFormer::DecomposedCache<float> c;
  EXPECT_EQ(dq.decomposed(store, t1, Tensor(), c).shape(), (nn::Shape{924, 8}));
}

TEST(DQFormer, FrameCountOnlyChangesQueryBank) {
  ParamStore<float> a, b;
  Rng ra(6), rb(6);
  DQFormer::create(a, ra, "dqformer", {.frames = 8});
  DQFormer::create(b, rb, "dqformer", {.frames = 12});
  ASSERT_EQ(a.size(), b.size());
  for (nn::ParamId id = 0; id < a.size(); ++id) {
    EXPECT_EQ(a[id].name, b[id].name);
    if (a[id].name != "dqformer.query") EXPECT_EQ(a[id].value.shape(), b[id].value.shape());
  }
}

TEST(MCondition, ShapeArithmeticAndSlices) {
  Rng rng(7);
  const auto mm = nn::random_normal<float>({16, 32}, 1.0, rng);
  const auto de = nn::random_normal<float>({64, 32}, 1.0, rng);
  const auto mc = build_mcondition(mm, de, 8);
  EXPECT_EQ(mc.total_tokens(), 80u);
  EXPECT_EQ(mc.frame_kv(3).shape(), (nn::Shape{24, 32}));
  EXPECT_EQ(nn::slice_rows(mc.frame_kv(0), 16, 24), nn::slice_rows(de, 0, 8));
  Tensor rebuilt;
  for (std::size_t i = 0; i < 8; ++i) rebuilt = nn::concat_rows(rebuilt, nn::slice_rows(mc.frame_kv(i), 16, 24));
  EXPECT_EQ(rebuilt, de);
  EXPECT_THROW(mc.frame_kv(8), DimensionError);
}

TEST(MCondition, AblationConventionsAndErrors) {
  Rng rng(8);
  const auto mm = nn::random_normal<float>({16, 32}, 1.0, rng);
  const auto de = nn::random_normal<float>({64, 32}, 1.0, rng);
  EXPECT_EQ(build_mcondition(mm, Tensor(), 8).frame_kv(2), mm);
  EXPECT_EQ(build_mcondition(Tensor(), de, 8).frame_kv(2), nn::slice_rows(de, 16, 24));
  EXPECT_THROW(build_mcondition(mm, nn::random_normal<float>({64, 16}, 1.0, rng), 8),
               DimensionError);
  Tensor same({64, 32});
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t k = 0; k < 32; ++k) same[r * 32 + k] = float(k);
  const auto shared = build_mcondition(mm, same, 8);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_EQ(shared.frame_kv(i), shared.frame_kv(0));
}

TEST(Conditioner, NullAndSwitches) {
  ParamStore<float> store;
  Rng rng(9);
  auto cond = Conditioner::create(store, rng, {});
  const Tensor frame({3, 32, 32}, -1.0f);
  Conditioner::Cache<float> c;
  EXPECT_TRUE(cond.forward(store, ConditionInputs<float>{"", {}, &frame}, {}, c).null());
  const ConditionInputs<float> in{"move the red square right",
                                  {"a", "b", "c", "d"}, &frame};
  const auto full = cond.forward(store, in, {}, c);
  EXPECT_EQ(full.total_tokens(), 16u + 64u);
  EXPECT_TRUE(cond.forward(store, in, {.decomposed = false}, c).decomposed.empty());
  EXPECT_TRUE(cond.forward(store, in, {.multimodal = false}, c).multimodal.empty());
  EXPECT_TRUE(cond.forward(store, in, {.multimodal = false, .decomposed = false}, c).null());
}

TEST(Conditioner, AllNamesCarryConditioningPrefixes) {
  ParamStore<float> store;
  Rng rng(10);
  Conditioner::create(store, rng, {});
  for (const auto& p : store) {
    const bool ok = p.name.starts_with("text_enc.") || p.name.starts_with("vis_enc.") ||
                    p.name.starts_with("dqformer.");
    EXPECT_TRUE(ok) << p.name;
  }
}

// --- Gradient checks ------------------------------------------------------

TEST(GradCheck, MultimodalBranch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    ParamStore<double> store;
    auto dq = DQFormer::create(store, rng, "dq", {.width = 4, .frames = 2, .tokens_per_frame = 1,
                                                  .heads = 2, .depth = 1});
    test::randomize(store, rng);
    const auto packed = nn::random_normal<double>({3 + 2, 4}, 1.0, rng);
    const auto proj = nn::random_normal<double>({3, 4}, 1.0, rng);
    auto report = nn::grad_check(
        [&](const ParamStore<double>& p, const Tensor64& in, nn::Grads<double>* g, Tensor64* gx) {
          const auto t1 = nn::slice_rows(in, 0, 3), v = nn::slice_rows(in, 3, 5);
          DQFormer::MultimodalCache<double> c;
          auto y = dq.multimodal(p, t1, v, c);
          if (g) {
            auto [gt1, gv] = dq.multimodal_backward(p, c, proj, *g);
            *gx = nn::concat_rows(gt1, gv);
          }
          return test::dot(y, proj);
        },
        store, packed);
    EXPECT_LT(report.max_rel_error, 1e-4) << "seed " << seed << " worst " << report.worst;
  }
}

TEST(GradCheck, DecomposedBranch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    ParamStore<double> store;
    auto dq = DQFormer::create(store, rng, "dq", {.width = 4, .frames = 2, .tokens_per_frame = 2,
                                                  .heads = 2, .depth = 1});
    test::randomize(store, rng);
    const auto packed = nn::random_normal<double>({3 + 4, 4}, 1.0, rng);
    const auto proj = nn::random_normal<double>({4, 4}, 1.0, rng);
    auto report = nn::grad_check(
        [&](const ParamStore<double>& p, const Tensor64& in, nn::Grads<double>* g, Tensor64* gx) {
          const auto t1 = nn::slice_rows(in, 0, 3), t2 = nn::slice_rows(in, 3, 7);
          DQFormer::DecomposedCache<double> c;
          auto y = dq.decomposed(p, t1, t2, c);
          if (g) {
            auto [gt1, gt2] = dq.decomposed_backward(p, c, proj, *g);
            *gx = nn::concat_rows(gt1, gt2);
          }
          return test::dot(y, proj);
        },
        store, packed);
    EXPECT_LT(report.max_rel_error, 1e-4) << "seed " << seed << " worst " << report.worst;
  }
}

TEST(GradCheck, ConditionerEndToEnd) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(500 + seed);
    ParamStore<double> store;
    auto cond = Conditioner::create(store, rng,
                                    {.width = 4, .text_len = 3, .vocab = 6, .image = 4,
                                     .vis_patch = 2, .frames = 2, .tokens_per_frame = 1,
                                     .heads = 2, .depth = 1});
    test::randomize(store, rng);
    const auto frame = nn::random_normal<double>({3, 4, 4}, 1.0, rng);
    const auto proj = nn::random_normal<double>({3 + 2, 4}, 1.0, rng);
    auto report = nn::grad_check(
        [&](const ParamStore<double>& p, const Tensor64&, nn::Grads<double>* g, Tensor64*) {
          Conditioner::Cache<double> c;
          const ConditionInputs<double> in{"move red square", {"red at start", "red moving"},
                                           &frame};
          auto mc = cond.forward(p, in, {}, c);
          const auto y = nn::concat_rows(mc.multimodal, mc.decomposed);
          if (g) {
            MConditionGrad<double> grad;
            grad.multimodal = nn::slice_rows(proj, 0, 3);
            grad.decomposed = nn::slice_rows(proj, 3, 5);
            cond.backward(p, c, grad, *g);
          }
          return test::dot(y, proj);
        },
        store, Tensor64({0}));
    EXPECT_LT(report.max_rel_error, 1e-4) << "seed " << seed << " worst " << report.worst;
  }
}

}  // namespace
}  // namespace aid
