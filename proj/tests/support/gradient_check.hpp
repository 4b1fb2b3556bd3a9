#pragma once

// Central finite differences over every parameter of a model.

#include <algorithm>
#include <cmath>
#include <string>

#include "logrep/encoder.hpp"

namespace logrep::testing {

struct GradCheckResult {
  double worst = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Relative error |a - f| / max(|a|, |f|, floor) per component.
inline GradCheckResult finite_difference_check(ModelParameters params, const EncoderConfig& cfg,
                                               const EncoderInput& input, const LossTarget& target,
                                               const ForwardOptions& opts, double step = 1e-5,
                                               double floor = 1e-6) {
  const LossGradients analytic = backward(params, cfg, input, target, opts);
  auto views = parameter_views(params);
  const auto grads = parameter_views(analytic.gradients);
  GradCheckResult r;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (std::size_t i = 0; i < views[v].values.size(); ++i) {
      double& w = views[v].values[i];
      const double saved = w;
      w = saved + step;
      const double up = compute_loss(params, cfg, input, target, opts);
      w = saved - step;
      const double down = compute_loss(params, cfg, input, target, opts);
      w = saved;
      const double fd = (up - down) / (2.0 * step);
      const double a = grads[v].values[i];
      const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      if (err > r.worst) {
        r.worst = err;
        r.worst_name = views[v].name;
        r.worst_index = i;
      }
      ++r.checked;
    }
  }
  return r;
}

}  // namespace logrep::testing
