#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stp/tensor.hpp"

namespace stp {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// L2 norm of all accumulated gradients taken together.
double global_grad_norm(const NamedTensors& params);

/// Scale that brings `norm` down to `max_norm`; 1 when clipping is off
/// (max_norm == 0) or not needed.
double clip_scale(double norm, double max_norm);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Updates parameter values in place from their
/// accumulated gradients; the caller zeroes gradients between steps.
class Adam {
 public:
  Adam(NamedTensors params, AdamOptions options);

  /// One update using grad * grad_scale.
  void step(double grad_scale = 1.0);
  std::size_t steps() const { return steps_; }

 private:
  NamedTensors params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace stp
