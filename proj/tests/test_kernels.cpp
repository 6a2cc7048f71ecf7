// The OpenMP kernels must agree with the serial reference loop nests.

#include <gtest/gtest.h>

#include <complex>
#include <random>
#include <vector>

#include "stp/kernels.hpp"
#include "test_util.hpp"

using namespace stp;
namespace k = stp::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Kernels, GemmAllTransposeCombinations) {
  std::mt19937_64 rng(1);
  const std::size_t m = 7, n = 5, kk = 9;
  auto a = random_vec(m * kk, rng);
  auto b = random_vec(kk * n, rng);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      auto c1 = random_vec(m * n, rng);
      auto c2 = c1;
      k::gemm(ta, tb, m, n, kk, a, b, c1, true);
      k::serial::gemm(ta, tb, m, n, kk, a, b, c2, true);
      EXPECT_LT(stp::testing::max_abs_diff(c1, c2), 1e-13) << ta << tb;
    }
}

TEST(Kernels, Conv2dMatchesReference) {
  std::mt19937_64 rng(2);
  for (auto geo : {k::ConvGeometry{2, 3, 4, 7, 6, 3, 1, 1}, k::ConvGeometry{1, 2, 3, 8, 8, 4, 4, 0},
                   k::ConvGeometry{2, 5, 2, 5, 5, 1, 1, 0}, k::ConvGeometry{1, 2, 2, 9, 7, 5, 2, 2}}) {
    const std::size_t in_n = geo.batch * geo.in_channels * geo.height * geo.width;
    const std::size_t w_n = geo.out_channels * geo.in_channels * geo.kernel * geo.kernel;
    const std::size_t out_n = geo.batch * geo.out_channels * geo.out_height() * geo.out_width();
    auto in = random_vec(in_n, rng);
    auto w = random_vec(w_n, rng);
    auto bias = random_vec(geo.out_channels, rng);
    std::vector<double> o1(out_n), o2(out_n);
    k::conv2d_forward(geo, in, w, bias, o1);
    k::serial::conv2d_forward(geo, in, w, bias, o2);
    EXPECT_LT(stp::testing::max_abs_diff(o1, o2), 1e-13);

    auto go = random_vec(out_n, rng);
    std::vector<double> gi1(in_n), gi2(in_n), gw1(w_n), gw2(w_n), gb1(geo.out_channels), gb2(geo.out_channels);
    k::conv2d_backward(geo, in, w, go, gi1, gw1, gb1);
    k::serial::conv2d_backward(geo, in, w, go, gi2, gw2, gb2);
    EXPECT_LT(stp::testing::max_abs_diff(gi1, gi2), 1e-13);
    EXPECT_LT(stp::testing::max_abs_diff(gw1, gw2), 1e-12);
    EXPECT_LT(stp::testing::max_abs_diff(gb1, gb2), 1e-12);
  }
}

TEST(Kernels, DepthwiseBankMatchesReference) {
  std::mt19937_64 rng(3);
  const std::size_t b = 2, c = 3, h = 7, w = 5, f = 9, kk = 3;
  auto in = random_vec(b * c * h * w, rng);
  auto st = random_vec(f * kk * kk, rng);
  std::vector<double> o1(b * c * f * h * w), o2(o1.size());
  k::depthwise_bank_forward(b, c, h, w, f, kk, in, st, o1);
  k::serial::depthwise_bank_forward(b, c, h, w, f, kk, in, st, o2);
  EXPECT_LT(stp::testing::max_abs_diff(o1, o2), 1e-13);
  auto go = random_vec(o1.size(), rng);
  std::vector<double> gi1(in.size()), gi2(in.size()), gs1(st.size()), gs2(st.size());
  k::depthwise_bank_backward(b, c, h, w, f, kk, in, st, go, gi1, gs1);
  k::serial::depthwise_bank_backward(b, c, h, w, f, kk, in, st, go, gi2, gs2);
  EXPECT_LT(stp::testing::max_abs_diff(gi1, gi2), 1e-13);
  EXPECT_LT(stp::testing::max_abs_diff(gs1, gs2), 1e-12);
}

TEST(Kernels, TransposedConvMatchesReference) {
  std::mt19937_64 rng(4);
  for (auto geo : {k::DeconvGeometry{2, 3, 2, 4, 5, 2, 2}, k::DeconvGeometry{1, 4, 1, 3, 3, 4, 4},
                   k::DeconvGeometry{1, 2, 3, 3, 4, 3, 2}}) {
    const std::size_t in_n = geo.batch * geo.in_channels * geo.height * geo.width;
    const std::size_t w_n = geo.in_channels * geo.out_channels * geo.kernel * geo.kernel;
    const std::size_t out_n = geo.batch * geo.out_channels * geo.out_height() * geo.out_width();
    auto in = random_vec(in_n, rng);
    auto w = random_vec(w_n, rng);
    auto bias = random_vec(geo.out_channels, rng);
    std::vector<double> o1(out_n), o2(out_n);
    k::conv_transpose2d_forward(geo, in, w, bias, o1);
    k::serial::conv_transpose2d_forward(geo, in, w, bias, o2);
    EXPECT_LT(stp::testing::max_abs_diff(o1, o2), 1e-13);
    auto go = random_vec(out_n, rng);
    std::vector<double> gi1(in_n), gi2(in_n), gw1(w_n), gw2(w_n), gb1(geo.out_channels), gb2(geo.out_channels);
    k::conv_transpose2d_backward(geo, in, w, go, gi1, gw1, gb1);
    k::serial::conv_transpose2d_backward(geo, in, w, go, gi2, gw2, gb2);
    EXPECT_LT(stp::testing::max_abs_diff(gi1, gi2), 1e-13);
    EXPECT_LT(stp::testing::max_abs_diff(gw1, gw2), 1e-12);
    EXPECT_LT(stp::testing::max_abs_diff(gb1, gb2), 1e-12);
  }
}

TEST(Kernels, Dft2MatchesDirectSumForMixedSizes) {
  std::mt19937_64 rng(5);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 4}, {6, 5}, {1, 7}, {16, 3}}) {
    const std::size_t count = 2;
    auto re = random_vec(count * h * w, rng);
    auto im = random_vec(count * h * w, rng);
    std::vector<std::complex<double>> a(count * h * w);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = {re[i], im[i]};
    for (bool inverse : {false, true}) {
      auto fast = a;
      auto slow = a;
      k::dft2(fast, count, h, w, inverse);
      k::serial::dft2(slow, count, h, w, inverse);
      double err = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(fast[i] - slow[i]));
      EXPECT_LT(err, 1e-11) << h << "x" << w;
    }
  }
}
