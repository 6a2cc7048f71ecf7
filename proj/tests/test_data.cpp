#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "stp/data.hpp"
#include "stp/objectives.hpp"
#include "stp/tensor_io.hpp"
#include "test_util.hpp"

using namespace stp;
using stp::testing::max_abs_diff;

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::span<const double> frame(const Tensor& seq, std::size_t t) {
  const std::size_t plane = seq.dim(2) * seq.dim(3);
  return seq.data().subspan(t * plane, plane);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stp_test_data_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Blobs, NoBlobsGivesZeros) {
  auto batch = gen_bouncing_blobs(3, 4, 5, 32, 32, 0, 11);
  EXPECT_EQ(batch.inputs.shape(), (Shape{3, 4, 1, 32, 32}));
  EXPECT_EQ(batch.targets.shape(), (Shape{3, 5, 1, 32, 32}));
  EXPECT_EQ(stp::testing::max_abs(batch.inputs.data()), 0.0);
  EXPECT_EQ(stp::testing::max_abs(batch.targets.data()), 0.0);
}

TEST(Blobs, StaticBlobRepeatsAndMovingBlobAdvancesOneColumn) {
  Blob still{20.0, 12.0, 0.0, 0.0, 2.0, 1.0};
  auto first = render_blobs({still}, 32, 32);
  advance_blob(still, 32, 32);
  EXPECT_EQ(max_abs_diff(first, render_blobs({still}, 32, 32)), 0.0);

  Blob moving{16.0, 16.0, 1.0, 0.0, 2.0, 1.0};
  for (std::size_t t = 0; t < 5; ++t) {
    auto img = render_blobs({moving}, 32, 32);
    EXPECT_EQ(argmax(img), 16 * 32 + 16 + t) << "frame " << t;
    EXPECT_DOUBLE_EQ(img[argmax(img)], 1.0);
    advance_blob(moving, 32, 32);
  }
}

TEST(Blobs, ReflectsOffWalls) {
  Blob b{30.0, 1.0, 2.5, -3.0, 2.0, 1.0};
  advance_blob(b, 32, 32);
  EXPECT_DOUBLE_EQ(b.x, 62.0 - 32.5);
  EXPECT_DOUBLE_EQ(b.vx, -2.5);
  EXPECT_DOUBLE_EQ(b.y, 2.0);
  EXPECT_DOUBLE_EQ(b.vy, 3.0);
}

TEST(Blobs, DeterministicPerIndexAndClamped) {
  auto a = gen_bouncing_blobs(4, 3, 3, 32, 32, 3, 99);
  auto b = gen_bouncing_blobs(4, 3, 3, 32, 32, 3, 99);
  EXPECT_EQ(max_abs_diff(a.inputs.data(), b.inputs.data()), 0.0);
  EXPECT_EQ(max_abs_diff(a.targets.data(), b.targets.data()), 0.0);
  auto c = gen_bouncing_blobs(4, 3, 3, 32, 32, 3, 100);
  EXPECT_GT(max_abs_diff(a.inputs.data(), c.inputs.data()), 0.0);

  GeneratorSpec spec;
  spec.t_in = 3;
  spec.t_out = 3;
  spec.blobs.height = spec.blobs.width = 32;
  spec.blobs.n_blobs = 3;
  auto tail = generate_batch(spec, 99, 2, 2);
  const std::size_t per = 3 * 32 * 32;
  EXPECT_EQ(max_abs_diff(tail.inputs.data(), a.inputs.data().subspan(2 * per, 2 * per)), 0.0);
  for (double v : a.inputs.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  EXPECT_THROW(gen_bouncing_blobs(1, 1, 1, 8, 8, 1, 0), std::invalid_argument);
}

TEST(AdvectionDiffusion, FrozenWithoutTransport) {
  AdvectionOptions o;
  o.vx = o.vy = o.nu = 0.0;
  auto seq = advection_diffusion_sequence(o, 6, 3);
  for (std::size_t t = 1; t < 6; ++t) EXPECT_EQ(max_abs_diff(frame(seq, 0), frame(seq, t)), 0.0);
}

TEST(AdvectionDiffusion, MeanConservedAndVarianceNonIncreasing) {
  AdvectionOptions o;
  std::vector<double> init(o.height * o.width);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(0.0, 2.0);
  for (auto& v : init) v = d(rng);
  auto seq = advection_diffusion_sequence(o, 20, 0, init);
  const double m0 = mean_of(frame(seq, 0));
  double prev = variance_of(frame(seq, 0));
  for (std::size_t t = 1; t < 20; ++t) {
    EXPECT_NEAR(mean_of(frame(seq, t)), m0, 1e-12);
    const double var = variance_of(frame(seq, t));
    EXPECT_LE(var, prev + 1e-14) << "frame " << t;
    prev = var;
  }
}

// A single Fourier mode under pure advection only picks up the central
// difference dispersion error, which shrinks as (2πk/n)³.
TEST(AdvectionDiffusion, ModeAdvectionMatchesExactShift) {
  auto run = [](std::size_t n) {
    AdvectionOptions o;
    o.height = o.width = n;
    o.vx = 1.0;
    o.vy = 0.0;
    o.nu = 0.0;
    o.substeps = 8;
    std::vector<double> init(n * n);
    const double k = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) init[i * n + j] = std::sin(k * static_cast<double>(j));
    const std::size_t frames = 5;
    auto seq = advection_diffusion_sequence(o, frames, 0, init);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double exact = std::sin(k * (static_cast<double>(j) - static_cast<double>(frames - 1)));
        err = std::max(err, std::abs(frame(seq, frames - 1)[i * n + j] - exact));
      }
    return err;
  };
  const double coarse = run(16), fine = run(32);
  EXPECT_LT(coarse, 0.05);
  EXPECT_GT(coarse / fine, 6.0);
  EXPECT_LT(coarse / fine, 10.0);
}

TEST(AdvectionDiffusion, UnstableSettingsAreRejected) {
  AdvectionOptions o;
  o.vx = 3.0;
  o.vy = 2.0;
  o.substeps = 4;
  EXPECT_THROW(o.check_stability(), std::invalid_argument);
  EXPECT_THROW(advection_diffusion_sequence(o, 2, 0), std::invalid_argument);
  o.substeps = 5;
  EXPECT_NO_THROW(o.check_stability());
  o.nu = 1.0;
  EXPECT_THROW(o.check_stability(), std::invalid_argument);
}

TEST(NavierStokes, ZeroFieldStaysZeroWithoutForcing) {
  NavierStokesOptions o;
  o.forcing = 0.0;
  NavierStokesSolver solver(o, std::vector<double>(o.n * o.n, 0.0));
  solver.advance(20);
  EXPECT_EQ(stp::testing::max_abs(solver.vorticity()), 0.0);
  EXPECT_NEAR(solver.time(), 20 * o.dt, 1e-12);
}

TEST(NavierStokes, SingleModeDecaysAtTheViscousRate) {
  for (std::size_t n : {32u, 64u}) {
    NavierStokesOptions o;
    o.n = n;
    o.nu = 1e-2;
    o.forcing = 0.0;
    std::vector<double> w(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w[i * n + j] = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
    NavierStokesSolver solver(o, w);
    solver.advance(100);
    const double expect = std::exp(-o.nu * 4.0 * std::numbers::pi * std::numbers::pi * solver.time());
    const double got = solver.vorticity()[0];
    EXPECT_NEAR(got, expect, 0.01 * expect) << "n = " << n;
  }
}

TEST(NavierStokes, ForcedFlowKeepsZeroMean) {
  NavierStokesOptions o;
  NavierStokesSolver solver(o, random_vorticity(o.n, 5));
  EXPECT_NEAR(mean_of(solver.vorticity()), 0.0, 1e-12);
  solver.advance(200);
  EXPECT_NEAR(mean_of(solver.vorticity()), 0.0, 1e-10);
  EXPECT_GT(variance_of(solver.vorticity()), 0.0);
}

TEST(NavierStokes, BlowUpIsReported) {
  NavierStokesOptions o;
  o.dt = 5.0;
  o.blowup = 1e3;
  NavierStokesSolver solver(o, random_vorticity(o.n, 6));
  try {
    solver.advance(50);
    FAIL() << "expected a blow-up";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(NavierStokes, RandomFieldIsNormalized) {
  auto w = random_vorticity(32, 7);
  EXPECT_NEAR(mean_of(w), 0.0, 1e-12);
  EXPECT_NEAR(variance_of(w), 1.0, 1e-12);
}

TEST(Persistence, StaticAndMovingScenes) {
  auto still = gen_bouncing_blobs(2, 4, 6, 32, 32, 0, 1);
  EXPECT_EQ(mse_metric(persistence_baseline(still.inputs, 6), still.targets), 0.0);

  BlobOptions o;
  o.height = o.width = 32;
  o.n_blobs = 0;
  std::vector<double> seq;
  Blob b{6.0, 16.0, 1.5, 0.0, 2.0, 1.0};
  for (std::size_t t = 0; t < 8; ++t) {
    auto img = render_blobs({b}, 32, 32);
    seq.insert(seq.end(), img.begin(), img.end());
    advance_blob(b, 32, 32);
  }
  const std::size_t plane = 32 * 32;
  Tensor inputs = Tensor::from({1, 3, 1, 32, 32}, {seq.begin(), seq.begin() + 3 * plane});
  Tensor targets = Tensor::from({1, 5, 1, 32, 32}, {seq.begin() + 3 * plane, seq.end()});
  Tensor pred = persistence_baseline(inputs, 5);
  EXPECT_EQ(pred.shape(), (Shape{1, 5, 1, 32, 32}));
  double prev = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    auto p = pred.data().subspan(t * plane, plane), q = targets.data().subspan(t * plane, plane);
    double err = 0.0;
    for (std::size_t i = 0; i < plane; ++i) err += (p[i] - q[i]) * (p[i] - q[i]);
    EXPECT_GT(err, prev) << "lead " << t + 1;
    prev = err;
  }
  EXPECT_THROW(persistence_baseline(Tensor::zeros({1, 32, 32}), 2), ShapeError);
}

TEST(TensorFile, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(8);
  Tensor t = stp::testing::random_tensor({3, 4, 5}, rng);
  t.mutable_data()[7] = -0.0;
  t.mutable_data()[9] = 1e-310;
  auto dir = scratch_dir("roundtrip");
  write_tensor_file(dir / "t.stpt", t);
  Tensor back = read_tensor_file(dir / "t.stpt");
  ASSERT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), t.numel() * sizeof(double)), 0);
  EXPECT_EQ(std::filesystem::file_size(dir / "t.stpt"), tensor_record_size(t.shape()));
}

TEST(TensorFile, ScalarFileIsTwentyBytes) {
  auto dir = scratch_dir("scalar");
  write_tensor_file(dir / "s.stpt", Tensor::scalar(2.5));
  EXPECT_EQ(std::filesystem::file_size(dir / "s.stpt"), 20u);
  EXPECT_EQ(read_tensor_file(dir / "s.stpt").item(), 2.5);
}

TEST(TensorFile, CorruptionIsRejectedWithOffsets) {
  std::ostringstream out;
  write_tensor(out, Tensor::ones({2, 3}));
  const std::string good = out.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  try {
    read_tensor(in1);
    FAIL() << "bad magic accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  std::istringstream in2(good.substr(0, good.size() - 5));
  try {
    read_tensor(in2);
    FAIL() << "truncation accepted";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 12u);
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }

  auto dir = scratch_dir("trailing");
  {
    std::ofstream f(dir / "x.stpt", std::ios::binary);
    f << good << "junk";
  }
  EXPECT_THROW(read_tensor_file(dir / "x.stpt"), FormatError);
}

TEST(Dataset, WriteReadAndMetadata) {
  auto dir = scratch_dir("dataset");
  auto train = gen_bouncing_blobs(2, 3, 2, 16, 16, 1, 5);
  auto val = gen_bouncing_blobs(1, 3, 2, 16, 16, 1, 6);
  write_dataset(dir, "train", train);
  write_dataset(dir, "val", val);
  auto back = read_dataset(dir, "train");
  EXPECT_EQ(max_abs_diff(back.inputs.data(), train.inputs.data()), 0.0);
  EXPECT_EQ(max_abs_diff(back.targets.data(), train.targets.data()), 0.0);
  EXPECT_EQ(back.metadata.at("generator"), "blobs");
  EXPECT_EQ(back.metadata.at("train.count"), "2");
  EXPECT_EQ(back.metadata.at("val.count"), "1");
  EXPECT_EQ(parse_generator(back.metadata.at("generator")), Generator::blobs);
  EXPECT_THROW(parse_generator("smoke"), std::invalid_argument);
}
