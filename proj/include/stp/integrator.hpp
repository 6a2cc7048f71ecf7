#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "stp/physics.hpp"
#include "stp/tensor.hpp"

namespace stp {

enum class RkMode { conventional, adaptive };

/// Learned stage gate g = sigmoid(W_g * [h1; h2] + b_g). With `scalar` the
/// gate has a single channel shared by every feature channel.
struct GateParams {
  Tensor weight;  // [c_g, 2c, 1, 1], c_g = c or 1
  Tensor bias;    // [c_g]
  bool scalar = false;

  static GateParams zeros(std::size_t channels, bool scalar = false);
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

struct RKConfig {
  RkMode mode = RkMode::adaptive;
  double dt = 1.0 / 3.0;  // nominal stage spacing; the model absorbs it into F
};

/// h + ½(h1 + h2) with h1 = F(h), h2 = F(h + h1).
Tensor rk2_step(const Tensor& h, const DerivativeBank& F);

struct AdaptiveStep {
  Tensor state;  // H_t
  Tensor gate;   // g, same shape as the state (broadcast when scalar)
};

/// ĥ + g⊙h1 + (1−g)⊙h2 with h1 = F(ĥ), h2 = F(ĥ + h1).
AdaptiveStep adaptive_rk2_step(const Tensor& h_hat, const DerivativeBank& F, const GateParams& gate);

struct ProbeOptions {
  std::size_t channels = 4;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t order = 3;
};

/// Stacks `depth` integrator steps, each with its own derivative bank, and
/// returns ‖∂L/∂θ_l‖₂ over each layer's F parameters for L = ½‖output‖².
/// Layers are drawn from `seed` identically for both modes; gates (adaptive
/// only) come from a separate stream so F stays identical across modes.
std::vector<double> gradient_norm_probe(std::size_t depth, RkMode mode, std::uint64_t seed,
                                        const ProbeOptions& options = {});

}  // namespace stp
