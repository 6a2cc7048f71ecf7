#pragma once

// Raw numeric kernels behind the differentiable ops.
//
// Every kernel exists twice: the default version in `stp::kernels` is
// OpenMP-parallel and blocked for cache reuse; `stp::kernels::serial` holds a
// direct loop-nest reference with the same contract. Tests pin the two
// together, and bench/ compares their throughput.

#include <complex>
#include <cstddef>
#include <span>

namespace stp::kernels {

/// Geometry of a 2D convolution over [batch, channels, height, width] data.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

/// Geometry of a transposed convolution (no padding): output extent is
/// (in - 1) * stride + kernel.
struct DeconvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;

  std::size_t out_height() const { return (height - 1) * stride + kernel; }
  std::size_t out_width() const { return (width - 1) * stride + kernel; }
};

// C[m,n] (+)= op(A) op(B), op = optional transpose. A is m×k (k×m when
// trans_a), B is k×n (n×k when trans_b).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

// Cross-correlation: out[b,o,y,x] = Σ in[b,i,y*s+ky-p,x*s+kx-p]·w[o,i,ky,kx] (+ bias[o]).
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
// Accumulates into whichever gradient spans are non-empty.
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);

// Each of `filters` k×k stencils applied to every channel with zero "same"
// padding: out[b, c*filters + f] = stencil_f ⋆ in[b, c].
void depthwise_bank_forward(std::size_t batch, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t filters, std::size_t k,
                            std::span<const double> input, std::span<const double> stencils,
                            std::span<double> output);
void depthwise_bank_backward(std::size_t batch, std::size_t channels, std::size_t height,
                             std::size_t width, std::size_t filters, std::size_t k,
                             std::span<const double> input, std::span<const double> stencils,
                             std::span<const double> grad_out, std::span<double> grad_input,
                             std::span<double> grad_stencils);

// out[b,o,y*s+ky,x*s+kx] += in[b,i,y,x]·w[i,o,ky,kx] (+ bias[o]).
void conv_transpose2d_forward(const DeconvGeometry& g, std::span<const double> input,
                              std::span<const double> weight, std::span<const double> bias,
                              std::span<double> output);
void conv_transpose2d_backward(const DeconvGeometry& g, std::span<const double> input,
                               std::span<const double> weight, std::span<const double> grad_out,
                               std::span<double> grad_input, std::span<double> grad_weight,
                               std::span<double> grad_bias);

// In-place 2D DFT over `count` contiguous h×w complex planes. Unnormalized
// in both directions: forward uses e^{-2πi(...)}, inverse e^{+2πi(...)}.
// Power-of-two extents use iterative radix-2; other extents fall back to a
// direct O(n²) DFT per line.
void dft2(std::span<std::complex<double>> planes, std::size_t count, std::size_t h, std::size_t w,
          bool inverse);

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
void depthwise_bank_forward(std::size_t batch, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t filters, std::size_t k,
                            std::span<const double> input, std::span<const double> stencils,
                            std::span<double> output);
void depthwise_bank_backward(std::size_t batch, std::size_t channels, std::size_t height,
                             std::size_t width, std::size_t filters, std::size_t k,
                             std::span<const double> input, std::span<const double> stencils,
                             std::span<const double> grad_out, std::span<double> grad_input,
                             std::span<double> grad_stencils);
void conv_transpose2d_forward(const DeconvGeometry& g, std::span<const double> input,
                              std::span<const double> weight, std::span<const double> bias,
                              std::span<double> output);
void conv_transpose2d_backward(const DeconvGeometry& g, std::span<const double> input,
                               std::span<const double> weight, std::span<const double> grad_out,
                               std::span<double> grad_input, std::span<double> grad_weight,
                               std::span<double> grad_bias);
// Direct double-sum DFT of each plane, O(h²w²).
void dft2(std::span<std::complex<double>> planes, std::size_t count, std::size_t h, std::size_t w,
          bool inverse);

}  // namespace serial

}  // namespace stp::kernels
