#include "stp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "stp/kernels.hpp"
#include "stp/ops.hpp"

namespace stp {

namespace {

Shape unpacked_shape(const Tensor& packed) {
  Shape s = packed.shape();
  s.erase(s.begin());
  return s;
}

ComplexGrid transform(const ComplexGrid& grid, bool inverse) {
  if (grid.re.shape() != grid.im.shape()) throw ShapeError("ComplexGrid", grid.re.shape(), grid.im.shape());
  if (grid.re.rank() < 2) throw ShapeError("fft2 needs at least two axes, got " + shape_str(grid.re.shape()));
  Tensor packed = dft2(stack({grid.re, grid.im}), inverse);
  const Shape shape = unpacked_shape(packed);
  return {reshape(slice(packed, 0, 0, 1), shape), reshape(slice(packed, 0, 1, 1), shape)};
}

}  // namespace

ComplexGrid fft2(const Tensor& field) {
  return transform({field, Tensor::zeros(field.shape())}, false);
}

ComplexGrid fft2(const ComplexGrid& grid) { return transform(grid, false); }

ComplexGrid ifft2_complex(const ComplexGrid& grid) {
  auto raw = transform(grid, true);
  const double scale = 1.0 / static_cast<double>(grid.height() * grid.width());
  return {mul(raw.re, scale), mul(raw.im, scale)};
}

Tensor ifft2(const ComplexGrid& grid) {
  auto out = ifft2_complex(grid);
  double peak = 1.0;
  for (double v : out.re.data()) peak = std::max(peak, std::abs(v));
  double residue = 0.0;
  for (double v : out.im.data()) residue = std::max(residue, std::abs(v));
  if (residue > kImagResidueTolerance * peak) {
    throw NumericError("ifft2: imaginary residue " + std::to_string(residue) +
                       " exceeds tolerance; input is not conjugate-symmetric");
  }
  return out.re;
}

Tensor ifft2_real(const ComplexGrid& grid) {
  const std::size_t hw = grid.height() * grid.width();
  Tensor packed = dft2(stack({grid.re, grid.im}), true);
  return mul(reshape(slice(packed, 0, 0, 1), unpacked_shape(packed)), 1.0 / static_cast<double>(hw));
}

SpectralKernel SpectralKernel::identity(std::size_t channels, std::size_t h, std::size_t w) {
  return constant(channels, h, w, 1.0, 0.0);
}

SpectralKernel SpectralKernel::constant(std::size_t channels, std::size_t h, std::size_t w,
                                        double re, double im) {
  return {Tensor::full({channels, h, w}, re, true), Tensor::full({channels, h, w}, im, true)};
}

namespace {

// Repeats a [c,h,w] tensor over a leading batch axis.
Tensor tile_batch(const Tensor& t, std::size_t batch) {
  if (batch == 1) return reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)});
  auto index = std::make_shared<std::vector<std::size_t>>(batch * t.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < t.numel(); ++i) (*index)[b * t.numel() + i] = i;
  return gather(t, {batch, t.dim(0), t.dim(1), t.dim(2)}, index);
}

}  // namespace

Tensor fourier_block(const Tensor& u, const SpectralKernel& kernel) {
  if (u.rank() != 4) throw ShapeError("fourier_block: expected [b,c,h,w], got " + shape_str(u.shape()));
  const Shape expected{u.dim(1), u.dim(2), u.dim(3)};
  if (kernel.re.shape() != expected) throw ShapeError("fourier_block kernel", kernel.re.shape(), expected);
  if (kernel.im.shape() != expected) throw ShapeError("fourier_block kernel", kernel.im.shape(), expected);
  const auto z = fft2(u);
  const Tensor r_re = tile_batch(kernel.re, u.dim(0));
  const Tensor r_im = tile_batch(kernel.im, u.dim(0));
  const ComplexGrid mixed{r_re * z.re - r_im * z.im, r_re * z.im + r_im * z.re};
  return ifft2_real(mixed);
}

Tensor stack_fourier_blocks(const Tensor& u, const std::vector<SpectralKernel>& kernels,
                            std::size_t depth) {
  if (depth != kernels.size()) {
    throw std::invalid_argument("stack_fourier_blocks: depth " + std::to_string(depth) + " with " +
                                std::to_string(kernels.size()) + " kernels");
  }
  Tensor x = u;
  for (const auto& kernel : kernels) x = x + fourier_block(x, kernel);
  return x;
}

namespace spectral {

void fft2_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w) {
  kernels::dft2(plane, 1, h, w, false);
}

void ifft2_inplace(std::span<std::complex<double>> plane, std::size_t h, std::size_t w) {
  kernels::dft2(plane, 1, h, w, true);
  const double scale = 1.0 / static_cast<double>(h * w);
  for (auto& z : plane) z *= scale;
}

long signed_frequency(std::size_t bin, std::size_t n) {
  const auto b = static_cast<long>(bin);
  const auto len = static_cast<long>(n);
  return b <= len / 2 ? b : b - len;
}

}  // namespace spectral

}  // namespace stp
