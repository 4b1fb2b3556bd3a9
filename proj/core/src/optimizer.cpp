#include "logrep/optimizer.hpp"

#include <cmath>

#include "logrep/error.hpp"

namespace logrep {
namespace {

ModelParameters zeros_like(const ModelParameters& like) {
  ModelParameters z = like;
  for (auto& v : parameter_views(z)) {
    for (double& x : v.values) x = 0.0;
  }
  return z;
}

}  // namespace

LinearSchedule::LinearSchedule(std::size_t total_steps, std::size_t warmup_steps)
    : total_(total_steps), warmup_(warmup_steps) {
  if (total_ == 0) throw InvalidArgument("schedule needs at least one step");
  if (warmup_ > total_) throw InvalidArgument("warmup longer than the schedule");
}

LinearSchedule LinearSchedule::with_warmup_fraction(std::size_t total_steps, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("warmup fraction must lie in [0, 1]");
  const auto warmup = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total_steps)));
  return LinearSchedule(total_steps, std::min(warmup, total_steps));
}

double LinearSchedule::factor(std::size_t step) const {
  if (step < warmup_) return static_cast<double>(step + 1) / static_cast<double>(warmup_);
  if (step >= total_) return 1.0 / static_cast<double>(total_ - warmup_ + 1);
  return static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
}

double gradient_norm(const ModelParameters& grads) {
  double sq = 0.0;
  for (const auto& v : parameter_views(grads)) {
    for (double x : v.values) sq += x * x;
  }
  return std::sqrt(sq);
}

double clip_gradient_norm(ModelParameters& grads, double max_norm) {
  const double norm = gradient_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (auto& v : parameter_views(grads)) {
      for (double& x : v.values) x *= scale;
    }
  }
  return norm;
}

AdamW::AdamW(const ModelParameters& like, AdamWConfig config)
    : config_(config), m_(zeros_like(like)), v_(zeros_like(like)) {}

void AdamW::step(ModelParameters& params, ModelParameters& grads, double lr) {
  clip_gradient_norm(grads, config_.max_grad_norm);
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  auto p = parameter_views(params);
  auto g = parameter_views(grads);
  auto m = parameter_views(m_);
  auto v = parameter_views(v_);
  if (p.size() != g.size() || p.size() != m.size()) {
    throw InvalidArgument("optimizer state does not match parameter layout");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].values.size() != g[i].values.size() || p[i].values.size() != m[i].values.size()) {
      throw InvalidArgument("gradient shape mismatch for " + p[i].name);
    }
    const double decay = p[i].decay ? lr * config_.weight_decay : 0.0;
    for (std::size_t j = 0; j < p[i].values.size(); ++j) {
      const double gj = g[i].values[j];
      double& mj = m[i].values[j];
      double& vj = v[i].values[j];
      mj = config_.beta1 * mj + (1.0 - config_.beta1) * gj;
      vj = config_.beta2 * vj + (1.0 - config_.beta2) * gj * gj;
      double& x = p[i].values[j];
      x -= decay * x;
      x -= lr * (mj / c1) / (std::sqrt(vj / c2) + config_.epsilon);
    }
  }
}

}  // namespace logrep
