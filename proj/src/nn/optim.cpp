#include "nn/optim.hpp"

#include <cmath>

namespace aid::nn {

double Adam::step(ParamStore<float>& store) {
  if (m_.size() != store.size()) {
    m_.assign(store.size(), {});
    v_.assign(store.size(), {});
    for (ParamId i = 0; i < store.size(); ++i) {
      m_[i].assign(store[i].value.numel(), 0.0);
      v_[i].assign(store[i].value.numel(), 0.0);
    }
  }
  double sq = 0.0;
  for (const auto& p : store)
    if (!p.frozen)
      for (float g : p.grad.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  const double clip =
      (config_.clip_norm > 0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (ParamId i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (p.frozen) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const double g = clip * p.grad[j];
      m[j] = config_.beta1 * m[j] + (1 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1 - config_.beta2) * g * g;
      const double update = config_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
      p.value[j] = static_cast<float>(p.value[j] - update);
    }
  }
  return norm;
}

}  // namespace aid::nn
