#include "nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace aid::nn {

namespace {

double checked_loss(const LossFn& loss, const ParamStore<double>& params, const Tensor64& input,
                    const std::string& where) {
  const double v = loss(params, input, nullptr, nullptr);
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss while perturbing " + where);
  return v;
}

void compare(GradCheckReport& report, double analytic, double numeric, double floor,
             const std::string& where) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  const double rel = std::abs(analytic - numeric) / denom;
  ++report.checked;
  if (report.worst.empty() || rel > report.max_rel_error) {
    report.max_rel_error = rel;
    report.worst = where;
  }
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, ParamStore<double>& params, const Tensor64& input,
                           double h, double floor) {
  GradCheckReport report;
  Grads<double> grads(params);
  Tensor64 grad_input(input.shape());
  const double base = loss(params, input, &grads, &grad_input);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss at the base point");

  for (ParamId id = 0; id < params.size(); ++id) {
    auto& p = params[id];
    if (p.frozen) {
      if (grads.find(id) != nullptr) report.frozen_untouched = false;
      continue;
    }
    const Tensor64* analytic = grads.find(id);
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const std::string where = p.name + "[" + std::to_string(i) + "]";
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = checked_loss(loss, params, input, where);
      p.value[i] = saved - h;
      const double down = checked_loss(loss, params, input, where);
      p.value[i] = saved;
      compare(report, analytic ? (*analytic)[i] : 0.0, (up - down) / (2 * h), floor, where);
    }
  }

  Tensor64 probe = input;
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    const std::string where = "input[" + std::to_string(i) + "]";
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = checked_loss(loss, params, probe, where);
    probe[i] = saved - h;
    const double down = checked_loss(loss, params, probe, where);
    probe[i] = saved;
    compare(report, grad_input[i], (up - down) / (2 * h), floor, where);
  }
  return report;
}

}  // namespace aid::nn
