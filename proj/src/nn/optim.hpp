#pragma once

#include <vector>

#include "nn/params.hpp"

namespace aid::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

// Adam over the trainable parameters of a store. Frozen parameters are never
// written.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update from the store's grad buffers. Returns the pre-clip
  // global gradient norm.
  double step(ParamStore<float>& store);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace aid::nn
