#pragma once

#include "stp/physics.hpp"
#include "stp/tensor.hpp"

namespace stp {

/// How pointwise metrics are reduced. `sum_per_frame` sums over each frame
/// (the trailing C,H,W axes) and averages over frames, the convention most
/// video benchmarks report.
enum class Reduction { mean, sum_per_frame };

/// Mean squared difference; differentiable.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

double mse_metric(const Tensor& pred, const Tensor& target, Reduction reduction = Reduction::mean);
double mae_metric(const Tensor& pred, const Tensor& target, Reduction reduction = Reduction::mean);

/// Frequency-weighted error over the trailing two axes:
///   Σ_ξ (1 + 4π²|ξ|²) |FFT(pred − target)_ξ|² / numel
/// with ξ in signed cycles per pixel. Leading axes are summed. Differentiable.
Tensor h1_loss(const Tensor& pred, const Tensor& target);

/// The per-bin weight 1 + 4π²(ξ_u² + ξ_v²) for an h×w grid, row-major.
std::vector<double> h1_weights(std::size_t h, std::size_t w);

struct LossWeights {
  double h1 = 0.05;
  double moment = 1.0;

  /// Throws std::invalid_argument for negative or non-finite weights.
  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  double h1 = 0.0;
  double moment = 0.0;
};

struct TotalLoss {
  Tensor value;
  LossBreakdown parts;
};

/// mse + λ_H·h1 + λ_m·moment_loss(bank). Terms with zero weight are still
/// reported but carry no gradient.
TotalLoss total_loss(const Tensor& pred, const Tensor& target, const DerivativeBank& bank, const LossWeights& w);

struct SsimOptions {
  double data_range = 1.0;
  std::size_t window = 11;
  double sigma = 1.5;
};

/// Mean local SSIM of two [C,H,W] images over every fully-contained Gaussian
/// window, averaged across channels.
double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& options = {});

/// Mean SSIM over the frames of [..., C, H, W] tensors.
double ssim_frames(const Tensor& pred, const Tensor& target, const SsimOptions& options = {});

/// ‖pred − target‖² / ‖target‖² per leading-axis sample, averaged.
double nmse(const Tensor& pred, const Tensor& target);

}  // namespace stp
