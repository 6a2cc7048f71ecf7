// Parallel kernels against their serial references. Thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <complex>
#include <random>
#include <vector>

#include "stp/kernels.hpp"

namespace k = stp::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(false, true, n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_gemm<k::gemm>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);

// Latent-grid sized: 32 channels on 16x16, 3x3 kernel.
k::ConvGeometry conv_geometry() {
  k::ConvGeometry g;
  g.batch = 2;
  g.in_channels = g.out_channels = 32;
  g.height = g.width = 16;
  g.kernel = 3;
  g.padding = 1;
  return g;
}

template <auto Forward>
void BM_conv_forward(benchmark::State& state) {
  const auto g = conv_geometry();
  auto in = noise(g.batch * g.in_channels * g.height * g.width, 3);
  auto w = noise(g.out_channels * g.in_channels * g.kernel * g.kernel, 4);
  auto bias = noise(g.out_channels, 5);
  std::vector<double> out(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    Forward(g, in, w, bias, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_conv_forward<k::conv2d_forward>)->Name("conv2d_forward/parallel");
BENCHMARK(BM_conv_forward<k::serial::conv2d_forward>)->Name("conv2d_forward/serial");

template <auto Backward>
void BM_conv_backward(benchmark::State& state) {
  const auto g = conv_geometry();
  auto in = noise(g.batch * g.in_channels * g.height * g.width, 3);
  auto w = noise(g.out_channels * g.in_channels * g.kernel * g.kernel, 4);
  auto gout = noise(g.batch * g.out_channels * g.out_height() * g.out_width(), 6);
  std::vector<double> gin(in.size()), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    Backward(g, in, w, gout, gin, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}
BENCHMARK(BM_conv_backward<k::conv2d_backward>)->Name("conv2d_backward/parallel");
BENCHMARK(BM_conv_backward<k::serial::conv2d_backward>)->Name("conv2d_backward/serial");

template <auto Forward>
void BM_depthwise_bank(benchmark::State& state) {
  const std::size_t b = 2, c = 32, h = 16, w = 16, f = 9, kk = 3;
  auto in = noise(b * c * h * w, 7), stencils = noise(f * kk * kk, 8);
  std::vector<double> out(b * c * f * h * w);
  for (auto _ : state) {
    Forward(b, c, h, w, f, kk, in, stencils, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_depthwise_bank<k::depthwise_bank_forward>)->Name("depthwise_bank/parallel");
BENCHMARK(BM_depthwise_bank<k::serial::depthwise_bank_forward>)->Name("depthwise_bank/serial");

// Patch decoder shape: 32 latent channels on 16x16, stride 4.
template <auto Forward>
void BM_conv_transpose(benchmark::State& state) {
  k::DeconvGeometry g;
  g.batch = 2;
  g.in_channels = 32;
  g.out_channels = 1;
  g.height = g.width = 16;
  g.kernel = g.stride = 4;
  auto in = noise(g.batch * g.in_channels * g.height * g.width, 9);
  auto w = noise(g.in_channels * g.out_channels * g.kernel * g.kernel, 10);
  auto bias = noise(g.out_channels, 11);
  std::vector<double> out(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    Forward(g, in, w, bias, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_conv_transpose<k::conv_transpose2d_forward>)->Name("conv_transpose2d/parallel");
BENCHMARK(BM_conv_transpose<k::serial::conv_transpose2d_forward>)->Name("conv_transpose2d/serial");

template <auto Dft>
void BM_dft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t count = 32;
  auto re = noise(count * n * n, 12);
  const std::vector<std::complex<double>> source(re.begin(), re.end());
  std::vector<std::complex<double>> planes(source.size());
  for (auto _ : state) {
    // Fresh input each pass; the unnormalized transform would otherwise overflow.
    std::copy(source.begin(), source.end(), planes.begin());
    Dft(planes, count, n, n, false);
    benchmark::DoNotOptimize(planes.data());
  }
}
BENCHMARK(BM_dft2<k::dft2>)->Name("dft2/parallel")->Arg(16)->Arg(32);
BENCHMARK(BM_dft2<k::serial::dft2>)->Name("dft2/serial")->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
