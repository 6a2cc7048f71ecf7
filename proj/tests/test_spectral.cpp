#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "stp/gradcheck.hpp"
#include "stp/ops.hpp"
#include "stp/spectral.hpp"
#include "test_util.hpp"

using namespace stp;
using stp::testing::max_abs;
using stp::testing::max_abs_diff;
using stp::testing::random_tensor;

namespace {

// Direct double sum Z(u,v) = Σ_x Σ_y f(x,y) e^{-2πi(ux/h + vy/w)}.
std::vector<std::complex<double>> brute_force_dft(std::span<const double> f, std::size_t h, std::size_t w) {
  std::vector<std::complex<double>> z(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t x = 0; x < h; ++x)
        for (std::size_t y = 0; y < w; ++y) {
          const double angle = -2.0 * std::numbers::pi *
                               (static_cast<double>(u * x) / static_cast<double>(h) +
                                static_cast<double>(v * y) / static_cast<double>(w));
          acc += f[x * w + y] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
      z[u * w + v] = acc;
    }
  return z;
}

}  // namespace

TEST(Fft2, ConstantFieldIsPureDc) {
  const double c = 2.5;
  auto z = fft2(Tensor::full({4, 4}, c));
  EXPECT_NEAR(z.re[0], 16 * c, 1e-12);
  for (std::size_t i = 1; i < 16; ++i) {
    EXPECT_NEAR(z.re[i], 0.0, 1e-12);
    EXPECT_NEAR(z.im[i], 0.0, 1e-12);
  }
}

TEST(Fft2, DeltaHasFlatSpectrum) {
  Tensor delta = Tensor::zeros({8, 8});
  delta.mutable_data()[0] = 1.0;
  auto z = fft2(delta);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_NEAR(z.re[i], 1.0, 1e-14);
    EXPECT_NEAR(z.im[i], 0.0, 1e-14);
  }
}

TEST(Fft2, MatchesBruteForceOnEveryGridUpToTwelve) {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (std::size_t h = 1; h <= 12; ++h)
    for (std::size_t w = 1; w <= 12; ++w) {
      Tensor f = random_tensor({h, w}, rng);
      auto z = fft2(f);
      auto ref = brute_force_dft(f.data(), h, w);
      for (std::size_t i = 0; i < h * w; ++i) {
        worst = std::max(worst, std::abs(z.re[i] - ref[i].real()));
        worst = std::max(worst, std::abs(z.im[i] - ref[i].imag()));
      }
    }
  EXPECT_LT(worst, 1e-10);
}

TEST(Fft2, RejectsNonFiniteInput) {
  Tensor f = Tensor::zeros({4, 4});
  f.mutable_data()[5] = std::nan("");
  EXPECT_THROW(fft2(f), NumericError);
}

TEST(Fft2, ParsevalAndConjugateSymmetry) {
  std::mt19937_64 rng(2);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 10}, {7, 5}}) {
    Tensor f = random_tensor({h, w}, rng);
    auto z = fft2(f);
    double spatial = 0.0, freq = 0.0;
    for (double v : f.data()) spatial += v * v;
    for (std::size_t i = 0; i < h * w; ++i) freq += z.re[i] * z.re[i] + z.im[i] * z.im[i];
    EXPECT_NEAR(spatial, freq / static_cast<double>(h * w), 1e-9 * spatial);
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        const std::size_t m = ((h - u) % h) * w + (w - v) % w;
        EXPECT_NEAR(z.re[u * w + v], z.re[m], 1e-12);
        EXPECT_NEAR(z.im[u * w + v], -z.im[m], 1e-12);
      }
  }
}

TEST(Ifft2, RoundTripZeroAndCosinePair) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({8, 8}, rng);
  EXPECT_LT(max_abs_diff(ifft2(fft2(x)).data(), x.data()), 1e-10);

  auto zero = ifft2({Tensor::zeros({4, 4}), Tensor::zeros({4, 4})});
  EXPECT_EQ(max_abs(zero.data()), 0.0);

  const std::size_t h = 8, w = 6;
  ComplexGrid pair{Tensor::zeros({h, w}), Tensor::zeros({h, w})};
  pair.re.mutable_data()[1 * w] = h * w / 2.0;
  pair.re.mutable_data()[(h - 1) * w] = h * w / 2.0;
  auto field = ifft2(pair);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      EXPECT_NEAR(field[r * w + c], std::cos(2.0 * std::numbers::pi * r / h), 1e-12);
}

TEST(Ifft2, BrokenSymmetryIsRejected) {
  ComplexGrid lone{Tensor::zeros({4, 4}), Tensor::zeros({4, 4})};
  lone.re.mutable_data()[1] = 16.0;
  EXPECT_THROW(ifft2(lone), NumericError);
  EXPECT_NO_THROW(ifft2_real(lone));
}

TEST(FourierBlock, UnitAndZeroKernels) {
  std::mt19937_64 rng(4);
  Tensor u = random_tensor({2, 3, 4, 8}, rng);
  auto unit = fourier_block(u, SpectralKernel::identity(3, 4, 8));
  EXPECT_LT(max_abs_diff(unit.data(), u.data()), 1e-10);
  auto zero = fourier_block(u, SpectralKernel::constant(3, 4, 8, 0.0, 0.0));
  EXPECT_LT(max_abs(zero.data()), 1e-15);
}

TEST(FourierBlock, DoublingKernelAndItsGradient) {
  std::mt19937_64 rng(5);
  Tensor u = random_tensor({1, 2, 4, 4}, rng);
  auto kernel = SpectralKernel::constant(2, 4, 4, 2.0, 0.0);
  auto y = fourier_block(u, kernel);
  for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_NEAR(y[i], 2.0 * u[i], 1e-10);
  Tensor w = random_tensor({1, 2, 4, 4}, rng);
  auto report = check_gradient([&] { return sum(mul(fourier_block(u, kernel), w)); },
                               {{"R_re", kernel.re}}, 1e-6, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_discrepancy;
}

TEST(FourierBlock, GradientsWrtInputAndBothKernelParts) {
  std::mt19937_64 rng(6);
  Tensor u = random_tensor({2, 2, 4, 6}, rng, true);
  SpectralKernel kernel{random_tensor({2, 4, 6}, rng, true), random_tensor({2, 4, 6}, rng, true)};
  Tensor w = random_tensor({2, 2, 4, 6}, rng);
  auto report = check_gradient([&] { return sum(mul(fourier_block(u, kernel), w)); },
                               {{"u", u}, {"R_re", kernel.re}, {"R_im", kernel.im}}, 1e-6, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_discrepancy << " at " << report.worst_param;
}

TEST(FourierBlock, ShapeMismatchThrows) {
  EXPECT_THROW(fourier_block(Tensor::zeros({1, 2, 4, 4}), SpectralKernel::identity(3, 4, 4)), ShapeError);
}

TEST(FourierStack, DepthZeroOneAndTwo) {
  std::mt19937_64 rng(7);
  Tensor u = random_tensor({1, 2, 4, 4}, rng);
  EXPECT_EQ(max_abs_diff(stack_fourier_blocks(u, {}, 0).data(), u.data()), 0.0);

  auto doubled = stack_fourier_blocks(u, {SpectralKernel::identity(2, 4, 4)}, 1);
  for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_NEAR(doubled[i], 2.0 * u[i], 1e-10);

  std::vector<SpectralKernel> kernels{{random_tensor({2, 4, 4}, rng, true), random_tensor({2, 4, 4}, rng, true)},
                                      {random_tensor({2, 4, 4}, rng, true), random_tensor({2, 4, 4}, rng, true)}};
  sum(square(stack_fourier_blocks(u, kernels, 2))).backward();
  for (const auto& k : kernels) {
    EXPECT_GT(max_abs(k.re.grad()), 0.0);
    EXPECT_GT(max_abs(k.im.grad()), 0.0);
  }
  EXPECT_THROW(stack_fourier_blocks(u, {}, 1), std::invalid_argument);
}
