#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "notecode/numcore/tensor.hpp"

namespace notecode::num {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  int coords_checked = 0;
};

// Central-difference check: (f(v+eps) - f(v-eps)) / (2*eps) per coordinate,
// compared against the analytic gradients already stored in each parameter.
// The closure is always evaluated in double precision; checking a float
// kernel means copying its parameters (float values are exactly
// representable) and its analytic gradients into double-parameter mirrors.
// Coordinates are subsampled for large arrays. Relative error uses
// |a - n| / max(|a| + |n|, floor); coordinates whose magnitudes fall below
// the floor are effectively compared absolutely at that scale.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::vector<Parameter<double>*>& params,
                                  double epsilon, int max_coords_per_param, Rng& rng,
                                  double denom_floor = 1e-2) {
  GradCheckReport report;
  for (auto* p : params) {
    const Eigen::Index n = p->value.size();
    std::vector<Eigen::Index> coords;
    if (n <= max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < n; ++k) coords[static_cast<std::size_t>(k)] = k;
    } else {
      for (int k = 0; k < max_coords_per_param; ++k)
        coords.push_back(static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n))));
    }
    double* data = p->value.data();
    const double* grad = p->grad.data();
    for (Eigen::Index idx : coords) {
      const double saved = data[idx];
      data[idx] = saved + epsilon;
      const double f_plus = loss();
      data[idx] = saved - epsilon;
      const double f_minus = loss();
      data[idx] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double analytic = grad[idx];
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err =
          abs_err / std::max(std::abs(analytic) + std::abs(numeric), denom_floor);
      ++report.coords_checked;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.worst_param = p->name;
        report.worst_index = idx;
      }
    }
  }
  return report;
}

}  // namespace notecode::num
