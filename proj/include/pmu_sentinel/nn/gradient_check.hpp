// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "pmu_sentinel/nn/network.hpp"

namespace pmu::nn {

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; central differences cannot resolve them any better in double.
inline constexpr double kGradientFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
  return std::abs(analytic - numeric) / scale;
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst;  // "<parameter>[<index>]"
  std::size_t checked = 0;
};

/// Compares `analytic` against central differences of `loss` taken by
/// perturbing each entry of `values` by +/- eps.
inline void check_against_central_differences(
    const std::function<double()>& loss, std::span<double> values,
    std::span<const double> analytic, double eps, const std::string& label,
    GradientCheckReport& report) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = loss();
    values[i] = saved - eps;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(analytic[i], numeric);
    ++report.checked;
    if (report.worst.empty() || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst = label + "[" + std::to_string(i) + "]";
    }
  }
}

/// Checks every parameter gradient (and optionally the input gradient) of
/// mse(net(x), y) against central finite differences. Runs in inference
/// mode, so dropout layers are the identity.
inline GradientCheckReport gradient_check(Network& net, const Tensor& x,
                                          const Tensor& y, double eps = 1e-5,
                                          bool include_input = true) {
  net.zero_grad();
  const Tensor pred = net.forward(x, Mode::inference);
  const Tensor dx = net.backward(mse_grad(y, pred));

  Tensor input = x;
  auto loss = [&] { return mse(y, net.forward(input, Mode::inference)); };

  GradientCheckReport report;
  for (const auto& p : net.parameters()) {
    const Tensor analytic = *p.grad;
    check_against_central_differences(loss, p.value->values(),
                                      analytic.values(), eps, p.name, report);
  }
  if (include_input) {
    check_against_central_differences(loss, input.values(), dx.values(), eps,
                                      "input", report);
  }
  return report;
}

}  // namespace pmu::nn
