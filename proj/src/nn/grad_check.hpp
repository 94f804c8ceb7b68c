#pragma once

#include <functional>
#include <string>

#include "nn/params.hpp"

namespace aid::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;            // "<param name>[index]" or "input[index]"
  std::size_t checked = 0;      // number of scalar entries compared
  bool frozen_untouched = true;  // no gradient buffer was produced for a frozen parameter
};

// Scalar loss of (params, input). When `grads` and `grad_input` are non-null
// the closure must also run its backward pass and fill them.
using LossFn = std::function<double(const ParamStore<double>& params, const Tensor64& input,
                                    Grads<double>* grads, Tensor64* grad_input)>;

// Compares reverse-mode gradients with central differences of step h for every
// trainable parameter entry and every input entry. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport grad_check(const LossFn& loss, ParamStore<double>& params, const Tensor64& input,
                           double h = 1e-5, double floor = 1e-5);

}  // namespace aid::nn
