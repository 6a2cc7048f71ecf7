#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "stp/config.hpp"
#include "stp/harness.hpp"
#include "stp/optim.hpp"
#include "stp/ops.hpp"
#include "stp/physics.hpp"
#include "test_util.hpp"

using namespace stp;
using stp::testing::max_abs_diff;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.data.height = cfg.data.width = 16;
  cfg.data.t_in = 3;
  cfg.data.t_out = 2;
  cfg.data.train_sequences = 4;
  cfg.data.eval_sequences = 3;
  cfg.model.patch_size = 2;
  cfg.model.embed_dim = 8;
  cfg.model.window_size = 4;
  cfg.optim.steps = 3;
  cfg.seed = 42;
  cfg.output_dir = "";
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stp_test_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(RunConfig, ParsesCommentsDottedKeysAndOverrides) {
  auto cfg = parse_config(
      "# experiment\n"
      "model.patch_size = 8   # coarse\n"
      "\n"
      "loss.h1=0\n"
      "data.generator = navier_stokes\n"
      "model.upsampler = bilinear\n"
      "data_free = true\n");
  EXPECT_EQ(cfg.model.patch_size, 8u);
  EXPECT_EQ(cfg.loss.h1, 0.0);
  EXPECT_EQ(cfg.loss.moment, 1.0);
  EXPECT_EQ(cfg.data.generator, Generator::navier_stokes);
  EXPECT_EQ(cfg.model.upsampler, Upsampler::bilinear);
  EXPECT_TRUE(cfg.data_free);
  apply_override(cfg, "optim.steps=5");
  EXPECT_EQ(cfg.optim.steps, 5u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValuesWithLocation) {
  try {
    parse_config("seed = 1\nmodel.patchsize = 4\n", "exp.cfg");
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("exp.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("model.patchsize"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_config("optim.steps = ten\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("optim.steps = 10x\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("just words\n"), std::invalid_argument);
  RunConfig cfg;
  EXPECT_THROW(apply_override(cfg, "model.rk_mode=fancy"), std::invalid_argument);
  EXPECT_THROW(apply_override(cfg, "no_equals"), std::invalid_argument);
}

TEST(RunConfig, BareKeysResolveToTheirSection) {
  RunConfig cfg;
  apply_override(cfg, "steps=5");
  apply_override(cfg, "viscosity = 0.002");
  EXPECT_EQ(cfg.optim.steps, 5u);
  EXPECT_EQ(cfg.data.viscosity, 0.002);
  EXPECT_EQ(get_config_value(cfg, "patch_size"), "4");
  EXPECT_THROW(apply_override(cfg, "step=5"), std::invalid_argument);
  EXPECT_THROW(apply_override(cfg, "optim.patch_size=5"), std::invalid_argument);
}

TEST(RunConfig, FormatRoundTripsEveryKey) {
  RunConfig cfg;
  cfg.optim.learning_rate = 3.0e-4;
  cfg.loss.h1 = 0.1;
  cfg.data.viscosity = 1.0 / 3.0;
  cfg.model.rk_mode = RkMode::conventional;
  cfg.output_dir = "runs/a b";
  const std::string text = format_config(cfg);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.data.viscosity, 1.0 / 3.0);
  for (const auto& key : config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

TEST(RunConfig, ValidationCatchesInconsistentGeometry) {
  RunConfig cfg;
  cfg.data.height = 30;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.data.generator = Generator::navier_stokes;
  cfg.data.width = 32;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.data.generator = Generator::advection_diffusion;
  cfg.data.height = cfg.data.width = 32;
  cfg.data.vx = 10.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Adam, FirstStepAndClipping) {
  Tensor w = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  NamedTensors params{{"w", w}};
  Adam adam(params, {0.1});
  auto loss = sum(square(w));
  loss.backward();
  EXPECT_NEAR(global_grad_norm(params), std::sqrt(4.0 + 16.0 + 1.0), 1e-12);
  adam.step();
  // Bias-corrected first step moves every coordinate by lr · g / (|g| + ε).
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(clip_scale(10.0, 0.0), 1.0);
  EXPECT_EQ(clip_scale(0.5, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(clip_scale(4.0, 1.0), 0.25);
}

TEST(Train, ZeroLearningRateLeavesParametersBitUnchanged) {
  auto cfg = tiny_config();
  cfg.optim.learning_rate = 0.0;
  auto trained = train(cfg);
  auto fresh = init_model(cfg.model_config(), cfg.seed);
  auto a = trained.params.named_parameters(), b = fresh.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(a[i].second.data().data(), b[i].second.data().data(), a[i].second.numel() * 8), 0)
        << a[i].first;
  }
  EXPECT_EQ(trained.history.size(), 3u);
}

TEST(Train, SameSeedGivesIdenticalLogsAndCheckpoints) {
  auto cfg = tiny_config();
  cfg.optim.steps = 5;
  cfg.output_dir = scratch("det_a").string();
  train_to_directory(cfg);
  auto first = cfg.output_dir;
  cfg.output_dir = scratch("det_b").string();
  train_to_directory(cfg);
  const std::string log = slurp(std::filesystem::path(first) / "metrics.log");
  EXPECT_EQ(log, slurp(std::filesystem::path(cfg.output_dir) / "metrics.log"));
  EXPECT_EQ(slurp(std::filesystem::path(first) / "model.ckpt"),
            slurp(std::filesystem::path(cfg.output_dir) / "model.ckpt"));
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);
  EXPECT_EQ(log.rfind("step=1 total=", 0), 0u);
  EXPECT_NE(log.find("step=5 total="), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(first) / "config.txt"));
  EXPECT_TRUE(std::filesystem::exists(manifest_path(std::filesystem::path(first) / "model.ckpt")));
}

TEST(Train, NonFiniteLossAbortsWithStepAndBreakdown) {
  auto cfg = tiny_config();
  auto dir = scratch("nan");
  auto batch = gen_bouncing_blobs(2, 3, 2, 16, 16, 1, 3);
  const std::size_t per = batch.targets.numel() / 2;
  for (std::size_t s = 0; s < 2; ++s) batch.targets.mutable_data()[s * per + 5] = std::numeric_limits<double>::quiet_NaN();
  write_dataset(dir, "train", batch);
  cfg.data.dir = dir.string();
  try {
    train(cfg);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("mse="), std::string::npos) << msg;
  }
}

TEST(Train, DataFreeMomentTrainingConverges) {
  RunConfig cfg;
  cfg.data_free = true;
  cfg.loss.h1 = 0.0;
  cfg.optim.learning_rate = 1e-2;
  cfg.optim.steps = 2000;
  cfg.output_dir = "";
  std::size_t reached = 0;
  auto result = train(cfg, nullptr, [&](std::size_t step, const LossBreakdown& p) {
    if (!reached && p.moment < 1e-6) reached = step;
  });
  EXPECT_GT(reached, 0u);
  EXPECT_LT(moment_loss(result.params.bank).item(), 1e-6);
}

TEST(Evaluate, SelfTargetsAndStaticPersistenceArePerfect) {
  auto cfg = tiny_config();
  auto params = init_model(cfg.model_config(), 1);
  auto split = evaluation_split(cfg);
  Tensor own = forecast(params, cfg.model_config(), split.inputs, 2);
  auto self = evaluate_predictions(own, own, true, 1.0);
  EXPECT_EQ(self.aggregate.mse, 0.0);
  EXPECT_NEAR(self.aggregate.ssim, 1.0, 1e-12);

  auto still = gen_bouncing_blobs(2, 3, 4, 16, 16, 0, 1);
  auto cmp = evaluate(params, cfg, still);
  EXPECT_EQ(cmp.persistence.aggregate.mse, 0.0);
  EXPECT_EQ(cmp.persistence.aggregate.mae, 0.0);
  EXPECT_NEAR(cmp.persistence.aggregate.ssim, 1.0, 1e-12);
  EXPECT_EQ(cmp.model.per_lead.size(), 4u);
}

TEST(Evaluate, AggregateMseIsTheMeanOfPerLead) {
  auto cfg = tiny_config();
  cfg.data.t_out = 4;
  auto params = init_model(cfg.model_config(), 2);
  auto cmp = evaluate(params, cfg, evaluation_split(cfg));
  double mean_mse = 0.0;
  for (const auto& m : cmp.model.per_lead) mean_mse += m.mse / 4.0;
  EXPECT_NEAR(cmp.model.aggregate.mse, mean_mse, 1e-12);
  const std::string kv = format_key_values(cmp);
  EXPECT_NE(kv.find("lead=1 mse="), std::string::npos);
  EXPECT_NE(kv.find("lead=all mse="), std::string::npos);
  EXPECT_NE(kv.find("persistence_mse="), std::string::npos);
  EXPECT_NE(format_table(cmp).find("persist_mse"), std::string::npos);
}

TEST(Evaluate, NavierStokesReportsNmse) {
  auto cfg = tiny_config();
  cfg.data.generator = Generator::navier_stokes;
  cfg.data.eval_sequences = 2;
  auto params = init_model(cfg.model_config(), 3);
  auto cmp = evaluate(params, cfg, evaluation_split(cfg));
  EXPECT_TRUE(cmp.model.has_nmse);
  EXPECT_GT(cmp.persistence.aggregate.nmse, 0.0);
  EXPECT_NE(format_key_values(cmp).find(" nmse="), std::string::npos);
}

TEST(Evaluate, CheckpointRoundTripKeepsMetrics) {
  auto cfg = tiny_config();
  cfg.output_dir = scratch("roundtrip").string();
  auto trained = train_to_directory(cfg);
  auto split = evaluation_split(cfg);
  auto before = evaluate(trained.params, cfg, split);
  auto loaded = load_checkpoint(std::filesystem::path(cfg.output_dir) / "model.ckpt", cfg.model_config());
  auto after = evaluate(loaded, cfg, split);
  EXPECT_EQ(format_key_values(before), format_key_values(after));
  EXPECT_LE(std::abs(before.model.aggregate.mse - after.model.aggregate.mse), 1e-15);

  auto wrong = cfg.model_config();
  wrong.embed_dim = 4;
  try {
    load_checkpoint(std::filesystem::path(cfg.output_dir) / "model.ckpt", wrong);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("patch."), std::string::npos) << e.what();
  }
}
