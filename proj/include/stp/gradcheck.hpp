#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stp/tensor.hpp"

namespace stp {

struct GradientReport {
  double max_discrepancy = 0.0;  // max over elements of |analytic - numeric| / scale
  double max_raw_relative = 0.0;  // same ratio without the noise allowance
  std::size_t worst_index = 0;   // flat index into the concatenated parameters
  std::string worst_param;
  std::size_t elements = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares reverse-mode gradients of a scalar objective against central
/// differences, element by element.
///
/// The discrepancy of one element is max(0, |a - n| - noise) / max(|a|, |n|, floor)
/// where floor = 1e-6 * max(1, max_i |a_i|) and
/// noise = 64 ε (|f(x+h)| + |f(x-h)|) / 2h is the rounding error the central
/// difference itself carries. Gradients that are exactly zero by structure
/// then compare as zero instead of as rounding noise over a tiny floor.
///
/// `objective` must rebuild the graph on each call; parameter values are
/// perturbed in place and restored. Existing gradients on `params` are
/// cleared.
GradientReport check_gradient(const std::function<Tensor()>& objective,
                              const std::vector<std::pair<std::string, Tensor>>& params,
                              double step, double tolerance);

/// Single-input form: f maps x to a scalar.
GradientReport check_gradient(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step,
                              double tolerance);

}  // namespace stp
