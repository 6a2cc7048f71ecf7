#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "stp/tensor.hpp"

namespace stp {

/// Scaled moments of a k×k filter:
///   M(a,b) = 1/(a!·b!) · Σ_{u,v} w[u,v]·(u-c)^a·(v-c)^b,  c = (k-1)/2,
/// with u the row (first spatial axis) and v the column. A filter whose
/// moment matrix is one-hot at (i,j) approximates ∂^{i+j}/∂x^i∂y^j where x
/// runs along rows and y along columns, under cross-correlation.
struct MomentMatrix {
  std::size_t order = 0;
  Tensor entries;  // [k, k]
};

/// Differentiable in the filter. Throws for even or non-square filters.
MomentMatrix moment_of(const Tensor& filter);

/// One-hot k×k moment target with the unit at (i, j).
MomentMatrix target_moment(std::size_t k, std::size_t i, std::size_t j);

/// The k²×k² linear map taking a flattened filter to its flattened moments.
Tensor moment_operator(std::size_t k);

/// k² spatial-derivative stencils feeding a 1×1 combiner:
/// F(h) = combiner · [stencil_f ⋆ h_c]_{c,f}. Filter f = i·k + j targets the
/// (i, j) moment.
struct DerivativeBank {
  std::size_t order = 3;
  std::size_t channels = 1;
  Tensor filters;   // [k², k, k]
  Tensor combiner;  // [c, c·k², 1, 1]

  /// Filters ~ N(0, filter_std²), combiner zero (F ≡ 0).
  static DerivativeBank create(std::size_t channels, std::size_t k, std::mt19937_64& rng,
                               double filter_std = 0.02);
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

/// Σ_{i,j<k} ‖moment_of(filter_{i,j}) − target(i,j)‖².
Tensor moment_loss(const DerivativeBank& bank);

/// Depthwise derivative channels followed by the 1×1 combiner; h[b,c,H,W]
/// with H, W ≥ k.
Tensor derivative_bank_apply(const DerivativeBank& bank, const Tensor& h);

/// The unique k×k filters whose moment matrices are the one-hot targets,
/// ordered f = i·k + j.
std::vector<Tensor> solve_exact_stencils(std::size_t k);

}  // namespace stp
