#include <gtest/gtest.h>

#include <cmath>

#include "stp/gradcheck.hpp"
#include "stp/ops.hpp"
#include "stp/physics.hpp"
#include "test_util.hpp"

using namespace stp;
using stp::testing::max_abs;
using stp::testing::max_abs_diff;
using stp::testing::random_tensor;

namespace {

DerivativeBank exact_bank(std::size_t channels, std::size_t k) {
  std::mt19937_64 rng(0);
  auto bank = DerivativeBank::create(channels, k, rng);
  auto stencils = solve_exact_stencils(k);
  auto dst = bank.filters.mutable_data();
  for (std::size_t f = 0; f < stencils.size(); ++f)
    for (std::size_t i = 0; i < k * k; ++i) dst[f * k * k + i] = stencils[f][i];
  return bank;
}

// Combiner reading, for every channel, a weighted set of derivative channels.
void select(DerivativeBank& bank, const std::vector<std::pair<std::size_t, double>>& picks) {
  const std::size_t kk = bank.order * bank.order, c = bank.channels;
  auto w = bank.combiner.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (auto [f, weight] : picks) w[ch * c * kk + ch * kk + f] = weight;
}

}  // namespace

TEST(MomentOf, ZeroDeltaAndCentralDifference) {
  EXPECT_EQ(max_abs(moment_of(Tensor::zeros({3, 3})).entries.data()), 0.0);

  auto delta = moment_of(Tensor::from({3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0})).entries;
  EXPECT_EQ(delta[0], 1.0);
  for (std::size_t i = 1; i < 9; ++i) EXPECT_EQ(delta[i], 0.0);

  // Varies along rows (the first spatial axis, x).
  auto dx = moment_of(Tensor::from({3, 3}, {0, -0.5, 0, 0, 0, 0, 0, 0.5, 0})).entries;
  EXPECT_DOUBLE_EQ(dx[1 * 3 + 0], 1.0);
  EXPECT_DOUBLE_EQ(dx[0], 0.0);
  EXPECT_DOUBLE_EQ(dx[2 * 3 + 0], 0.0);
}

TEST(MomentOf, RejectsEvenOrder) {
  EXPECT_THROW(moment_of(Tensor::zeros({4, 4})), std::invalid_argument);
  EXPECT_THROW(moment_of(Tensor::zeros({3, 5})), ShapeError);
}

TEST(MomentOf, IsLinearInTheFilter) {
  std::mt19937_64 rng(1);
  Tensor w1 = random_tensor({5, 5}, rng), w2 = random_tensor({5, 5}, rng);
  const double a = 0.7, b = -2.1;
  auto lhs = moment_of(w1 * a + w2 * b).entries;
  auto rhs = moment_of(w1).entries * a + moment_of(w2).entries * b;
  EXPECT_LT(max_abs_diff(lhs.data(), rhs.data()), 1e-12);
}

TEST(TargetMoment, OneHotEntries) {
  for (auto [k, i, j] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 0, 0}, {3, 1, 0}, {5, 2, 2}}) {
    auto t = target_moment(k, i, j).entries;
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) EXPECT_EQ(t[r * k + c], (r == i && c == j) ? 1.0 : 0.0);
  }
  EXPECT_THROW(target_moment(3, 3, 0), std::out_of_range);
}

TEST(ExactStencils, KnownStencilsAndRoundTrip) {
  auto s3 = solve_exact_stencils(3);
  ASSERT_EQ(s3.size(), 9u);
  EXPECT_LT(max_abs_diff(s3[0].data(), std::vector<double>{0, 0, 0, 0, 1, 0, 0, 0, 0}), 1e-14);
  EXPECT_LT(max_abs_diff(s3[1 * 3 + 0].data(), std::vector<double>{0, -0.5, 0, 0, 0, 0, 0, 0.5, 0}), 1e-14);
  for (std::size_t k : {3u, 5u}) {
    auto stencils = solve_exact_stencils(k);
    for (std::size_t f = 0; f < k * k; ++f) {
      auto m = moment_of(stencils[f]).entries;
      auto t = target_moment(k, f / k, f % k).entries;
      EXPECT_LT(max_abs_diff(m.data(), t.data()), 1e-12) << "k=" << k << " f=" << f;
    }
  }
  EXPECT_THROW(solve_exact_stencils(4), std::invalid_argument);
}

TEST(MomentLoss, ExactStencilsZeroAndZeroFiltersNine) {
  EXPECT_LT(moment_loss(exact_bank(1, 3)).item(), 1e-20);
  EXPECT_LT(moment_loss(exact_bank(1, 5)).item(), 1e-20);
  std::mt19937_64 rng(2);
  auto bank = DerivativeBank::create(2, 3, rng);
  std::fill(bank.filters.mutable_data().begin(), bank.filters.mutable_data().end(), 0.0);
  EXPECT_DOUBLE_EQ(moment_loss(bank).item(), 9.0);
}

TEST(MomentLoss, GradientCheck) {
  std::mt19937_64 rng(3);
  auto bank = DerivativeBank::create(1, 3, rng, 0.3);
  auto report = check_gradient([&] { return moment_loss(bank); }, {{"filters", bank.filters}}, 1e-6, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_discrepancy;
}

TEST(DerivativeBankApply, ZeroCombinerGivesZero) {
  std::mt19937_64 rng(4);
  auto bank = DerivativeBank::create(2, 3, rng);
  auto out = derivative_bank_apply(bank, random_tensor({1, 2, 6, 6}, rng));
  EXPECT_EQ(max_abs(out.data()), 0.0);
}

TEST(DerivativeBankApply, FirstDerivativeOfRamp) {
  auto bank = exact_bank(2, 3);
  select(bank, {{1 * 3 + 0, 1.0}});
  const std::size_t h = 7, w = 6;
  Tensor ramp = Tensor::zeros({1, 2, h, w});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t col = 0; col < w; ++col) ramp.mutable_data()[(c * h + r) * w + col] = static_cast<double>(r);
  auto out = derivative_bank_apply(bank, ramp);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 1; r + 1 < h; ++r)
      for (std::size_t col = 1; col + 1 < w; ++col) EXPECT_DOUBLE_EQ(out[(c * h + r) * w + col], 1.0);
}

TEST(DerivativeBankApply, ScaledLaplacianMatchesFivePointOracle) {
  const double nu = 0.35;
  auto bank = exact_bank(1, 3);
  select(bank, {{2 * 3 + 0, nu}, {0 * 3 + 2, nu}});
  const std::size_t n = 16;
  Tensor gauss = Tensor::zeros({1, 1, n, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double dx = r - 7.3, dy = c - 8.1;
      gauss.mutable_data()[r * n + c] = std::exp(-(dx * dx + dy * dy) / (2 * 2.5 * 2.5));
    }
  auto out = derivative_bank_apply(bank, gauss);
  auto f = gauss.data();
  for (std::size_t r = 1; r + 1 < n; ++r)
    for (std::size_t c = 1; c + 1 < n; ++c) {
      const double lap = f[(r - 1) * n + c] + f[(r + 1) * n + c] + f[r * n + c - 1] + f[r * n + c + 1] - 4 * f[r * n + c];
      EXPECT_NEAR(out[r * n + c], nu * lap, 1e-6);
    }
}

TEST(DerivativeBankApply, FieldSmallerThanKernelThrows) {
  std::mt19937_64 rng(5);
  auto bank = DerivativeBank::create(1, 5, rng);
  EXPECT_THROW(derivative_bank_apply(bank, Tensor::zeros({1, 1, 4, 8})), ShapeError);
}

TEST(DerivativeBankApply, GradientsWrtInputFiltersCombiner) {
  std::mt19937_64 rng(6);
  auto bank = DerivativeBank::create(2, 3, rng, 0.3);
  for (auto& v : bank.combiner.mutable_data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  Tensor h = random_tensor({1, 2, 5, 5}, rng, true);
  Tensor w = random_tensor({1, 2, 5, 5}, rng);
  auto report = check_gradient([&] { return sum(mul(derivative_bank_apply(bank, h), w)); },
                               {{"h", h}, {"filters", bank.filters}, {"combiner", bank.combiner}}, 1e-6, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_discrepancy;
}
