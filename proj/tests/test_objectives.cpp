#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stp/gradcheck.hpp"
#include "stp/objectives.hpp"
#include "stp/ops.hpp"
#include "stp/spectral.hpp"
#include "test_util.hpp"

using namespace stp;
using stp::testing::random_tensor;

namespace {

// Unweighted Σ|ΔZ|² / numel via the transform.
double spectral_l2(const Tensor& a, const Tensor& b) {
  auto z = fft2(a - b);
  double acc = 0.0;
  for (std::size_t i = 0; i < z.re.numel(); ++i) acc += z.re[i] * z.re[i] + z.im[i] * z.im[i];
  return acc / static_cast<double>(a.numel());
}

// SSIM of one window position as luminance · contrast · structure, with the
// Gaussian weights rebuilt from scratch.
double window_ssim(const Tensor& x, const Tensor& y, std::size_t w, std::size_t top, std::size_t left) {
  const std::size_t n = 11;
  std::vector<double> g(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += g[i] = std::exp(-std::pow(static_cast<double>(i) - 5.0, 2) / 4.5);
  double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const double wt = g[a] * g[b] / (z * z);
      const double xv = x[(top + a) * w + left + b], yv = y[(top + a) * w + left + b];
      mx += wt * xv;
      my += wt * yv;
    }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const double wt = g[a] * g[b] / (z * z);
      const double dx = x[(top + a) * w + left + b] - mx, dy = y[(top + a) * w + left + b] - my;
      sxx += wt * dx * dx;
      syy += wt * dy * dy;
      sxy += wt * dx * dy;
    }
  const double c1 = 1e-4, c2 = 9e-4, c3 = c2 / 2;
  const double sx = std::sqrt(sxx), sy = std::sqrt(syy);
  const double lum = (2 * mx * my + c1) / (mx * mx + my * my + c1);
  const double con = (2 * sx * sy + c2) / (sxx + syy + c2);
  const double str = (sxy + c3) / (sx * sy + c3);
  return lum * con * str;
}

}  // namespace

TEST(PointwiseMetrics, HandExamplesAndOracle) {
  std::mt19937_64 rng(1);
  Tensor t = random_tensor({2, 3, 1, 4, 4}, rng);
  EXPECT_EQ(mse_metric(t, t), 0.0);
  EXPECT_EQ(mse_loss(t, t).item(), 0.0);
  Tensor shifted = t + 1.0;
  EXPECT_DOUBLE_EQ(mse_metric(shifted, t), 1.0);
  EXPECT_DOUBLE_EQ(mae_metric(shifted, t), 1.0);
  EXPECT_DOUBLE_EQ(mse_metric(shifted, t, Reduction::sum_per_frame), 16.0);

  Tensor p = random_tensor({2, 3, 1, 4, 4}, rng);
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) se += (p[i] - t[i]) * (p[i] - t[i]), ae += std::abs(p[i] - t[i]);
  EXPECT_NEAR(mse_metric(p, t), se / 96.0, 1e-12);
  EXPECT_NEAR(mae_metric(p, t), ae / 96.0, 1e-12);
  EXPECT_NEAR(mse_loss(p, t).item(), se / 96.0, 1e-12);
  EXPECT_NEAR(mae_metric(p, t, Reduction::sum_per_frame), ae / 6.0, 1e-12);
  EXPECT_THROW(mse_metric(p, Tensor::zeros({2, 3, 1, 4, 5})), ShapeError);
}

TEST(H1Loss, ZeroAndDcOffset) {
  std::mt19937_64 rng(2);
  Tensor t = random_tensor({2, 3, 8, 6}, rng);
  EXPECT_NEAR(h1_loss(t, t).item(), 0.0, 1e-30);
  const double delta = 0.37;
  const double expect = std::pow(8 * 6 * delta, 2) / (2 * 3 * 8 * 6) * (2 * 3);
  EXPECT_NEAR(h1_loss(t + delta, t).item(), expect, 1e-12 * expect);
}

TEST(H1Loss, NyquistOverDcIsTheAnalyticWeight) {
  const std::size_t h = 8, w = 8;
  Tensor zero = Tensor::zeros({1, 1, h, w});
  Tensor dc = Tensor::full({1, 1, h, w}, 0.5);
  Tensor nyq = Tensor::zeros({1, 1, h, w});
  for (std::size_t x = 0; x < h; ++x)
    for (std::size_t y = 0; y < w; ++y) nyq.mutable_data()[x * w + y] = 0.5 * std::cos(std::numbers::pi * x);
  const double ratio = h1_loss(nyq, zero).item() / h1_loss(dc, zero).item();
  const double expect = 1.0 + 4 * std::numbers::pi * std::numbers::pi * 0.25;
  EXPECT_NEAR(ratio, expect, 1e-9 * expect);
}

TEST(H1Loss, DominatesSpectralL2AndParseval) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({2, 1, 6, 10}, rng), b = random_tensor({2, 1, 6, 10}, rng);
    const double l2 = spectral_l2(a, b);
    EXPECT_GE(h1_loss(a, b).item(), l2);
    EXPECT_NEAR(l2, 60.0 * mse_metric(a, b), 1e-9 * l2);
  }
}

TEST(H1Loss, GradientCheck) {
  std::mt19937_64 rng(4);
  Tensor p = random_tensor({1, 2, 4, 6}, rng, true);
  Tensor t = random_tensor({1, 2, 4, 6}, rng);
  auto report = check_gradient([&] { return h1_loss(p, t); }, {{"pred", p}}, 1e-6, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_discrepancy;
}

TEST(TotalLoss, ZeroWeightsPerfectPredictionAndBreakdown) {
  std::mt19937_64 rng(5);
  auto bank = DerivativeBank::create(1, 3, rng);
  Tensor p = random_tensor({1, 1, 8, 8}, rng), t = random_tensor({1, 1, 8, 8}, rng);
  auto pure = total_loss(p, t, bank, {0.0, 0.0});
  EXPECT_EQ(pure.value.item(), mse_loss(p, t).item());
  EXPECT_GT(pure.parts.h1, 0.0);

  auto stencils = solve_exact_stencils(3);
  auto f = bank.filters.mutable_data();
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) f[i * 9 + j] = stencils[i][j];
  EXPECT_LT(total_loss(t, t, bank, {}).value.item(), 1e-20);

  auto mixed = total_loss(p, t, DerivativeBank::create(1, 3, rng), {0.3, 2.0});
  EXPECT_NEAR(mixed.parts.total, mixed.parts.mse + 0.3 * mixed.parts.h1 + 2.0 * mixed.parts.moment, 1e-12);
  EXPECT_THROW(total_loss(p, t, bank, {-1.0, 1.0}), std::invalid_argument);
}

TEST(Ssim, IdentityConstantsAndSymmetry) {
  std::mt19937_64 rng(6);
  Tensor a = random_tensor({2, 16, 16}, rng, false, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(Tensor::full({1, 12, 12}, 0.4), Tensor::full({1, 12, 12}, 0.4)), 1.0, 1e-12);
  Tensor b = random_tensor({2, 16, 16}, rng, false, 0, 1);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_THROW(ssim(Tensor::zeros({1, 10, 16}), Tensor::zeros({1, 10, 16})), std::invalid_argument);
}

TEST(Ssim, InvertedContrastMatchesWindowOracle) {
  std::mt19937_64 rng(7);
  const std::size_t h = 14, w = 13;
  Tensor x = random_tensor({1, h, w}, rng, false, 0, 1);
  Tensor y = Tensor::full({1, h, w}, 1.0) - x;
  const double score = ssim(y, x);
  EXPECT_LT(score, 1.0);
  double oracle = 0.0;
  for (std::size_t top = 0; top + 11 <= h; ++top)
    for (std::size_t left = 0; left + 11 <= w; ++left) oracle += window_ssim(y, x, w, top, left);
  oracle /= static_cast<double>((h - 10) * (w - 10));
  EXPECT_NEAR(score, oracle, 1e-10);
}

TEST(Nmse, Examples) {
  std::mt19937_64 rng(8);
  Tensor t = random_tensor({3, 1, 4, 4}, rng);
  EXPECT_EQ(nmse(t, t), 0.0);
  EXPECT_DOUBLE_EQ(nmse(Tensor::zeros(t.shape()), t), 1.0);
  EXPECT_NEAR(nmse(t * 1.1, t), 0.01, 1e-14);
  EXPECT_THROW(nmse(t, Tensor::zeros(t.shape())), NumericError);
}
