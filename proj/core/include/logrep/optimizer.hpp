#pragma once

#include <cstddef>

#include "logrep/encoder.hpp"

namespace logrep {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  /// Global L2 norm limit applied before each update; 0 disables clipping.
  double max_grad_norm = 1.0;
};

/// Linear warmup to the peak rate, then linear decay towards zero.
/// Step indices are 0-based and every step gets a positive multiplier.
class LinearSchedule {
 public:
  LinearSchedule(std::size_t total_steps, std::size_t warmup_steps);

  double factor(std::size_t step) const;
  std::size_t total_steps() const noexcept { return total_; }
  std::size_t warmup_steps() const noexcept { return warmup_; }

  /// Warmup length as a fraction of `total_steps`, rounded up.
  static LinearSchedule with_warmup_fraction(std::size_t total_steps, double fraction);

 private:
  std::size_t total_;
  std::size_t warmup_;
};

double gradient_norm(const ModelParameters& grads);

/// Scales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before scaling.
double clip_gradient_norm(ModelParameters& grads, double max_norm);

/// Adam with bias correction and decoupled weight decay. Decay applies only
/// to tensors whose view is flagged `decay`.
class AdamW {
 public:
  AdamW(const ModelParameters& like, AdamWConfig config = {});

  /// One update with learning rate `lr`. Clips `grads` in place first.
  void step(ModelParameters& params, ModelParameters& grads, double lr);

  std::size_t steps() const noexcept { return steps_; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  AdamWConfig config_;
  ModelParameters m_;
  ModelParameters v_;
  std::size_t steps_ = 0;
};

}  // namespace logrep
