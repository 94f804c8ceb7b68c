#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstring>

#include "diffusion/denoiser.hpp"
#include "nn/grad_check.hpp"
#include "nn/optim.hpp"
#include "test_util.hpp"

namespace aid {
namespace {

using backbone::AdapterFlags;
using backbone::BackboneConfig;
using backbone::UNet;
using diffusion::DenoiseContext;
using nn::ParamStore;
using nn::Rng;
using nn::Tensor;
using nn::Tensor64;

TEST(Edm, CoefficientsAtSigmaData) {
  const auto c = diffusion::edm_coeffs(0.5);
  EXPECT_DOUBLE_EQ(c.c_skip, 0.5);
  EXPECT_DOUBLE_EQ(c.c_out, 0.5 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(c.c_in, 1.0 / (0.5 * std::sqrt(2.0)));
  EXPECT_DOUBLE_EQ(c.c_noise, std::log(0.5) / 4.0);
  EXPECT_DOUBLE_EQ(c.weight, 8.0);
}

TEST(Edm, CoefficientsFiniteAndChecked) {
  for (double s : {1e-4, 0.002, 0.1, 1.0, 80.0, 1e3}) {
    const auto c = diffusion::edm_coeffs(s);
    for (double v : {c.c_skip, c.c_out, c.c_in, c.c_noise, c.weight}) EXPECT_TRUE(std::isfinite(v));
    // Unit-variance network input for x0 with std sigma_data.
    EXPECT_NEAR(c.c_in * c.c_in * (s * s + 0.25), 1.0, 1e-12);
  }
  EXPECT_THROW(diffusion::edm_coeffs(-0.1), ConfigError);
  EXPECT_THROW(diffusion::edm_coeffs(std::nan("")), ConfigError);
}

TEST(Edm, SigmaSamplerLogMoments) {
  Rng rng(3);
  diffusion::SigmaSampler sampler;
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double l = std::log(sampler.sample(rng));
    sum += l;
    sq += l * l;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_NEAR(mean, -1.2, 0.05);
  EXPECT_NEAR(std::sqrt(var), 1.2, 0.05);
}

TEST(KarrasGrid, Examples) {
  diffusion::SamplerConfig two;
  two.steps = 2;
  EXPECT_EQ(diffusion::karras_grid(two), (std::vector<double>{80.0, 0.002, 0.0}));
  diffusion::SamplerConfig lin{3, 1.0, 3.0, 1.0};
  const auto g = diffusion::karras_grid(lin);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
  EXPECT_EQ(g[3], 0.0);
}

TEST(KarrasGrid, DefaultIsMonotone) {
  const auto g = diffusion::karras_grid({});
  ASSERT_EQ(g.size(), 26u);
  EXPECT_EQ(g.front(), 80.0);
  EXPECT_EQ(g[24], 0.002);
  EXPECT_EQ(g.back(), 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i], g[i - 1]);
}

TEST(KarrasGrid, RejectsBadConfig) {
  EXPECT_THROW(diffusion::karras_grid({0, 0.002, 80, 7}), ConfigError);
  EXPECT_THROW(diffusion::karras_grid({5, 1.0, 0.5, 7}), ConfigError);
  EXPECT_THROW(diffusion::karras_grid({5, 0.002, 80, 0}), ConfigError);
}

TEST(DualCfg, ScalarExample) {
  const Tensor uu({1}, {0.f}), vu({1}, {1.f}), vt({1}, {2.f});
  EXPECT_EQ(diffusion::dual_cfg(uu, vu, vt, {2.0, 3.0})[0], 5.f);
}

TEST(DualCfg, Identities) {
  Rng rng(5);
  const auto uu = nn::random_normal<float>({4, 3, 2, 2}, 1.0, rng);
  const auto vu = nn::random_normal<float>({4, 3, 2, 2}, 1.0, rng);
  const auto vt = nn::random_normal<float>({4, 3, 2, 2}, 1.0, rng);
  EXPECT_EQ(diffusion::dual_cfg(uu, vu, vt, {1.0, 1.0}), vt);
  EXPECT_EQ(diffusion::dual_cfg(uu, vu, vt, {0.0, 0.0}), uu);
  EXPECT_EQ(diffusion::dual_cfg(uu, vu, vt, {1.0, 0.0}), vu);
  // Skipped branches may be left empty.
  EXPECT_EQ(diffusion::dual_cfg(Tensor{}, vu, vt, {1.0, 5.0}).shape(), vt.shape());
  const auto mixed = diffusion::dual_cfg(uu, vu, vt, {1.5, 4.0});
  for (std::size_t i = 0; i < mixed.numel(); ++i)
    EXPECT_NEAR(mixed[i], uu[i] + 1.5f * (vu[i] - uu[i]) + 4.0f * (vt[i] - vu[i]), 1e-5);
  EXPECT_THROW(diffusion::dual_cfg(uu, Tensor({2}), vt, {1.5, 4.0}), DimensionError);
}

TEST(EulerSample, ConstantOracleOneStep) {
  Rng rng(8);
  const auto target = nn::random_normal<float>({2, 3, 4}, 1.0, rng);
  const diffusion::DenoiseFn<float> oracle = [&](const Tensor&, double) { return target; };
  for (double sigma : {0.01, 1.0, 80.0}) {
    diffusion::SamplerConfig one{1, 0.002, 80.0, 7.0};
    one.sigma_max = std::max(sigma, 0.003);
    const auto x = nn::random_normal<float>({2, 3, 4}, one.sigma_max, rng);
    EXPECT_EQ(diffusion::euler_sample(oracle, x, one), target);
  }
}

TEST(EulerSample, ConstantOracleFixedPoint) {
  Rng rng(9);
  const auto target = nn::random_normal<float>({2, 3, 4}, 1.0, rng);
  std::size_t calls = 0;
  const diffusion::DenoiseFn<float> oracle = [&](const Tensor& x, double) {
    if (calls++ > 0) {
      EXPECT_EQ(x, target);
    }
    return target;
  };
  EXPECT_EQ(diffusion::euler_sample(oracle, target, {}), target);
  EXPECT_EQ(calls, 25u);
  calls = 0;
  const diffusion::DenoiseFn<float> plain = [&](const Tensor&, double) { return target; };
  EXPECT_EQ(diffusion::euler_sample(plain, nn::random_normal<float>({2, 3, 4}, 80.0, rng), {}),
            target);
}

TEST(EulerSample, NonFiniteAbortsWithStep) {
  const diffusion::DenoiseFn<float> bad = [](const Tensor& x, double s) {
    Tensor d = x;
    if (s < 1.0) d[0] = std::nanf("");
    return d;
  };
  try {
    diffusion::euler_sample(bad, Tensor({3}, {1, 2, 3}), {});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

// Gaussian toy data: x0 ~ N(mu, Sigma) has the closed-form optimal denoiser
// D(x; s) = mu + Sigma (Sigma + s^2 I)^-1 (x - mu).
struct GaussianToy {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma, chol;

  explicit GaussianToy(std::size_t d, Rng& rng) : mu(d), sigma(d, d) {
    Eigen::MatrixXd a(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      mu[i] = 0.8 * rng.normal();
      for (std::size_t j = 0; j < d; ++j) a(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd ev(d);
    for (std::size_t i = 0; i < d; ++i) ev[i] = 0.01 * std::pow(100.0, double(i) / double(d - 1));
    sigma = q * ev.asDiagonal() * q.transpose();
    chol = sigma.llt().matrixL();
  }
  Eigen::VectorXd sample(Rng& rng) const {
    Eigen::VectorXd z(mu.size());
    for (auto& v : z) v = rng.normal();
    return mu + chol * z;
  }
  Eigen::VectorXd denoise(const Eigen::VectorXd& x, double s) const {
    const Eigen::MatrixXd m = sigma + s * s * Eigen::MatrixXd::Identity(mu.size(), mu.size());
    return mu + sigma * m.ldlt().solve(x - mu);
  }
  Eigen::VectorXd score(const Eigen::VectorXd& x, double s) const {
    return (denoise(x, s) - x) / (s * s);
  }
};

struct Moments {
  double mean_err, cov_err;
};

// Relative moment errors of `count` Euler samples driven by the exact denoiser.
Moments gaussian_moment_errors(const GaussianToy& toy, std::size_t steps, std::size_t count,
                               Rng& rng) {
  const std::size_t d = toy.mu.size();
  const diffusion::DenoiseFn<double> oracle = [&](const Tensor64& x, double s) {
    const auto dv = toy.denoise(Eigen::Map<const Eigen::VectorXd>(x.data(), d), s);
    Tensor64 out({d});
    for (std::size_t i = 0; i < d; ++i) out[i] = dv[i];
    return out;
  };
  diffusion::SamplerConfig cfg;
  cfg.steps = steps;
  Eigen::MatrixXd samples(count, d);
  for (std::size_t n = 0; n < count; ++n) {
    const auto x = diffusion::euler_sample(oracle, nn::random_normal<double>({d}, 80.0, rng), cfg);
    for (std::size_t i = 0; i < d; ++i) samples(n, i) = x[i];
  }
  const Eigen::VectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centred = samples.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centred.transpose() * centred / double(count - 1);
  return {(mean - toy.mu).norm() / toy.mu.norm(), (cov - toy.sigma).norm() / toy.sigma.norm()};
}

TEST(EulerSample, GaussianMomentMatch) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(21);
  GaussianToy toy(4, rng);
  // First-order steps shrink the variance; 200 steps bring the bias to a few percent.
  const auto fine = gaussian_moment_errors(toy, 200, 1000, rng);
  EXPECT_LT(fine.mean_err, 0.1);
  EXPECT_LT(fine.cov_err, 0.1);
  const auto coarse = gaussian_moment_errors(toy, 25, 1000, rng);
  EXPECT_GT(coarse.cov_err, fine.cov_err);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}

BackboneConfig toy_config() {
  BackboneConfig c;
  c.latent_channels = 2;
  c.frames = 2;
  c.height = c.width = 2;
  c.widths = {16, 32};
  c.heads = 2;
  c.cond_width = 4;
  c.sigma_features = 8;
  return c;
}

Tensor from_vec(const Eigen::VectorXd& v, const nn::Shape& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

double mean_score_cosine(const UNet& unet, const ParamStore<float>& store, const GaussianToy& toy,
                         const nn::Shape& shape, Rng& rng) {
  double total = 0;
  int n = 0;
  for (double s : {0.1, 0.3, 1.0})
    for (int i = 0; i < 50; ++i) {
      Eigen::VectorXd x = toy.sample(rng);
      for (auto& v : x) v += s * rng.normal();
      const auto sc = diffusion::score(unet, store, from_vec(x, shape), s,
                                       DenoiseContext<float>{nullptr, 0, nullptr, AdapterFlags::none()});
      total += cosine(Eigen::Map<const Eigen::VectorXd>(sc.data(), x.size()), toy.score(x, s));
      ++n;
    }
  return total / n;
}

TEST(Dsm, TrainedScoreMatchesGaussianScore) {
  Rng rng(31);
  const auto cfg = toy_config();
  const nn::Shape shape{cfg.frames, cfg.latent_channels, cfg.height, cfg.width};
  const std::size_t d = nn::shape_numel(shape);
  GaussianToy toy(d, rng);
  ParamStore<float> store;
  auto unet = UNet::create(store, rng, cfg, false);
  const DenoiseContext<float> ctx{nullptr, 0, nullptr, AdapterFlags::none()};
  const double before = mean_score_cosine(unet, store, toy, shape, rng);
  nn::Adam adam({2e-3, 0.9, 0.999, 1e-8, 1.0});
  diffusion::SigmaSampler sampler;
  const std::size_t batch = 16;
  for (int step = 0; step < 1500; ++step) {
    store.zero_grad();
    nn::Grads<float> grads(store);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto x0 = from_vec(toy.sample(rng), shape);
      const auto noise = nn::random_normal<float>(shape, 1.0, rng);
      diffusion::dsm_loss(unet, store, x0, sampler.sample(rng), noise, ctx, &grads);
    }
    grads.flush_into(store);
    for (auto& p : store) nn::scale_inplace(p.grad, 1.0f / batch);
    adam.step(store);
  }
  const double after = mean_score_cosine(unet, store, toy, shape, rng);
  EXPECT_LT(before, 0.9);
  EXPECT_GT(after, 0.9) << "before " << before;
}

TEST(Dsm, ScalarCase) {
  // x0 = 0, sigma = sigma_data, F = 0: D = x / 2 and the loss is 8 (x / 2)^2 = 2 x^2.
  Rng rng(41);
  ParamStore<float> store;
  auto cfg = toy_config();
  cfg.latent_channels = 1;
  cfg.frames = 1;
  cfg.height = cfg.width = 1;
  cfg.widths = {4};
  auto unet = UNet::create(store, rng, cfg, false);  // zero output projection: F = 0
  const Tensor x0({1, 1, 1, 1}, {0.f});
  for (float eps : {-1.5f, 0.3f, 2.0f}) {
    const Tensor noise({1, 1, 1, 1}, {eps});
    const DenoiseContext<float> ctx{nullptr, 0, nullptr, AdapterFlags::none()};
    const double x = 0.5 * eps;
    EXPECT_NEAR(diffusion::dsm_loss(unet, store, x0, 0.5, noise, ctx), 2.0 * x * x, 1e-6);
    EXPECT_NEAR(diffusion::denoise(unet, store, Tensor({1, 1, 1, 1}, {float(x)}), 0.5, ctx)[0],
                0.5 * x, 1e-7);
  }
}

TEST(Dsm, LossDecreases) {
  Rng rng(51);
  const auto cfg = toy_config();
  const nn::Shape shape{cfg.frames, cfg.latent_channels, cfg.height, cfg.width};
  GaussianToy toy(nn::shape_numel(shape), rng);
  ParamStore<float> store;
  auto unet = UNet::create(store, rng, cfg, false);
  const DenoiseContext<float> ctx{nullptr, 0, nullptr, AdapterFlags::none()};
  // A fixed evaluation set of (x0, sigma, noise).
  std::vector<std::tuple<Tensor, double, Tensor>> eval;
  diffusion::SigmaSampler sampler;
  for (int i = 0; i < 64; ++i)
    eval.emplace_back(from_vec(toy.sample(rng), shape), sampler.sample(rng),
                      nn::random_normal<float>(shape, 1.0, rng));
  auto eval_loss = [&] {
    double s = 0;
    for (const auto& [x0, sg, n] : eval) s += diffusion::dsm_loss(unet, store, x0, sg, n, ctx);
    return s / eval.size();
  };
  const double before = eval_loss();
  nn::Adam adam;
  for (int step = 0; step < 200; ++step) {
    store.zero_grad();
    nn::Grads<float> grads(store);
    for (int b = 0; b < 8; ++b)
      diffusion::dsm_loss(unet, store, from_vec(toy.sample(rng), shape), sampler.sample(rng),
                          nn::random_normal<float>(shape, 1.0, rng), ctx, &grads);
    grads.flush_into(store);
    adam.step(store);
  }
  EXPECT_LT(eval_loss(), 0.8 * before);
}

BackboneConfig tiny_config() {
  BackboneConfig c;
  c.latent_channels = 2;
  c.frames = 3;
  c.height = c.width = 4;
  c.widths = {4, 8};
  c.heads = 2;
  c.cond_width = 4;
  c.sigma_features = 4;
  return c;
}

TEST(Score, ReconstructsDenoiserExactly) {
  Rng rng(61);
  ParamStore<float> store;
  const auto cfg = tiny_config();
  auto unet = UNet::create(store, rng, cfg);
  test::randomize(store, rng, 0.3);
  const auto cond = nn::random_normal<float>({3, 2, 4, 4}, 0.5, rng);
  const DenoiseContext<float> ctx{&cond, 1, nullptr, AdapterFlags{}};
  for (double s : {0.002, 0.3, 1.0, 17.0, 80.0}) {
    const auto x = nn::random_normal<float>({3, 2, 4, 4}, s, rng);
    const auto d = diffusion::denoise(unet, store, x, s, ctx);
    const auto sc = diffusion::score(unet, store, x, s, ctx);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const float rec = static_cast<float>(double(x[i]) + s * s * sc[i]);
      EXPECT_EQ(std::memcmp(&rec, &d[i], sizeof rec), 0) << "sigma " << s << " index " << i;
    }
  }
  EXPECT_THROW(diffusion::score(unet, store, nn::random_normal<float>({3, 2, 4, 4}, 1.0, rng), 0.0, ctx),
               ConfigError);
}

TEST(GradCheck, Denoiser) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(700 + seed);
    ParamStore<double> store;
    const auto cfg = tiny_config();
    auto unet = UNet::create(store, rng, cfg);
    test::randomize(store, rng, 0.4);
    const auto cond = nn::random_normal<double>({3, 2, 4, 4}, 1.0, rng);
    const auto mc = cond::build_mcondition(nn::random_normal<double>({2, 4}, 1.0, rng),
                                           nn::random_normal<double>({6, 4}, 1.0, rng), 3);
    const double sigma = std::exp(rng.normal());
    const auto x = nn::random_normal<double>({3, 2, 4, 4}, sigma, rng);
    const auto proj = nn::random_normal<double>({3, 2, 4, 4}, 1.0, rng);
    const DenoiseContext<double> ctx{seed % 2 ? &cond : nullptr, 1, &mc, AdapterFlags{}};
    auto report = nn::grad_check(
        [&](const ParamStore<double>& p, const Tensor64& in, nn::Grads<double>* g, Tensor64* gx) {
          diffusion::DenoiseCache<double> c;
          const auto y = diffusion::denoise(unet, p, in, sigma, ctx, &c);
          if (g) *gx = diffusion::denoise_backward(unet, p, c, proj, *g);
          return test::dot(y, proj);
        },
        store, x);
    EXPECT_LT(report.max_rel_error, 1e-4) << "seed " << seed << " worst " << report.worst;
  }
}

TEST(GradCheck, DsmLoss) {
  Rng rng(800);
  ParamStore<double> store;
  const auto cfg = tiny_config();
  auto unet = UNet::create(store, rng, cfg);
  test::randomize(store, rng, 0.4);
  const auto x0 = nn::random_normal<double>({3, 2, 4, 4}, 0.5, rng);
  const auto noise = nn::random_normal<double>({3, 2, 4, 4}, 1.0, rng);
  const DenoiseContext<double> ctx{&x0, 2, nullptr, AdapterFlags{}};
  auto report = nn::grad_check(
      [&](const ParamStore<double>& p, const Tensor64&, nn::Grads<double>* g, Tensor64*) {
        return diffusion::dsm_loss(unet, p, x0, 0.7, noise, ctx, g);
      },
      store, Tensor64({0}));
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
}

}  // namespace
}  // namespace aid
