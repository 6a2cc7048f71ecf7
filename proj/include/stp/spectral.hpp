#pragma once

#include <complex>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "stp/tensor.hpp"

namespace stp {

/// Complex field over the trailing h×w axes, split into real and imaginary
/// tensors of identical shape [..., h, w].
struct ComplexGrid {
  Tensor re;
  Tensor im;

  std::size_t height() const { return re.dim(re.rank() - 2); }
  std::size_t width() const { return re.dim(re.rank() - 1); }
};

/// Unnormalized forward DFT over the last two axes:
/// Z(u,v) = Σ_x Σ_y f(x,y) e^{-2πi(ux/h + vy/w)}. Differentiable.
ComplexGrid fft2(const Tensor& field);
ComplexGrid fft2(const ComplexGrid& grid);

/// 1/(hw)-normalized inverse DFT returning the full complex result.
ComplexGrid ifft2_complex(const ComplexGrid& grid);

/// Inverse DFT of a grid expected to be conjugate-symmetric. Throws
/// NumericError when the imaginary residue exceeds
/// kImagResidueTolerance · max(1, max|real|).
Tensor ifft2(const ComplexGrid& grid);

/// Real part of the inverse DFT, with no symmetry requirement.
Tensor ifft2_real(const ComplexGrid& grid);

inline constexpr double kImagResidueTolerance = 1e-9;

/// Trainable complex multiplier R_re + i·R_im with one value per channel and
/// frequency bin, shape [c, h, w] each.
struct SpectralKernel {
  Tensor re;
  Tensor im;

  /// R = 1 + 0i, the identity multiplier.
  static SpectralKernel identity(std::size_t channels, std::size_t h, std::size_t w);
  static SpectralKernel constant(std::size_t channels, std::size_t h, std::size_t w, double re,
                                 double im);
};

/// Real part of ifft2(R ⊙ fft2(u)) for u[b,c,h,w].
Tensor fourier_block(const Tensor& u, const SpectralKernel& kernel);

/// `depth` residual Fourier blocks: x ← x + fourier_block(x, kernels[l]).
Tensor stack_fourier_blocks(const Tensor& u, const std::vector<SpectralKernel>& kernels,
                            std::size_t depth);

namespace spectral {

/// Plain (non-differentiable) transforms of a single complex plane, used by
/// the data generators.
void fft2_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w);
/// Normalized inverse.
void ifft2_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w);

/// Signed frequency index of DFT bin `bin` on an axis of length n:
/// bins above n/2 map to negative frequencies, n/2 itself stays positive.
long signed_frequency(std::size_t bin, std::size_t n);

}  // namespace spectral

}  // namespace stp
