#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stp/checks.hpp"
#include "stp/config.hpp"
#include "stp/data.hpp"
#include "stp/harness.hpp"
#include "stp/network.hpp"

namespace fs = std::filesystem;
using namespace stp;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override one key, e.g. --set optim.steps=5")->allow_extra_args(false);
  }

  // Without --config, a run directory's saved config.txt is reused when present.
  RunConfig load(bool reuse_run_config = false) const {
    RunConfig cfg;
    if (!path.empty()) {
      cfg = load_config(path);
    } else if (reuse_run_config) {
      RunConfig probe;
      for (const auto& o : overrides) apply_override(probe, o);
      const fs::path saved = fs::path(probe.output_dir) / "config.txt";
      if (fs::exists(saved)) {
        std::cerr << "using " << saved.string() << "\n";
        cfg = load_config(saved);
      }
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
  }
};

int run_checks(const std::vector<int>& ids) {
  checks::Options options;
  options.progress = &std::cout;
  options.scratch = fs::temp_directory_path() / "stp_verify";
  int failed = 0;
  for (const auto& c : checks::criteria()) {
    if (std::find(ids.begin(), ids.end(), c.id) == ids.end()) continue;
    auto outcome = checks::run(c, options);
    std::cout << checks::format_outcome(c, outcome) << std::flush;
    if (!outcome.passed) ++failed;
  }
  fs::remove_all(options.scratch);
  std::cout << (failed ? "verify: FAIL\n" : "verify: PASS\n");
  return failed ? 1 : 0;
}

int gen_data(const RunConfig& cfg, std::string out) {
  if (out.empty()) out = cfg.data.dir.empty() ? (fs::path(cfg.output_dir) / "data").string() : cfg.data.dir;
  const auto spec = cfg.data.generator_spec();
  const auto start = std::chrono::steady_clock::now();
  auto train = generate_batch(spec, cfg.seed, 0, cfg.data.train_sequences);
  write_dataset(out, "train", train);
  auto eval = generate_batch(spec, cfg.seed, cfg.data.train_sequences, cfg.data.eval_sequences);
  write_dataset(out, "eval", eval);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "wrote " << cfg.data.train_sequences << " train and " << cfg.data.eval_sequences << " eval "
            << to_string(cfg.data.generator) << " sequences to " << out << " (" << secs << " s)\n";
  return 0;
}

int train_cmd(const RunConfig& cfg, std::size_t every) {
  if (cfg.output_dir.empty()) throw std::invalid_argument("train needs output_dir");
  auto result = train_to_directory(cfg, [&](std::size_t step, const LossBreakdown& p) {
    if (every && (step % every == 0 || step == cfg.optim.steps)) {
      std::printf("step %zu total %.6g mse %.6g h1 %.6g moment %.6g\n", step, p.total, p.mse, p.h1, p.moment);
      std::fflush(stdout);
    }
  });
  const fs::path dir = cfg.output_dir;
  std::cout << "trained " << cfg.optim.steps << " steps in " << result.seconds << " s\n"
            << "checkpoint " << (dir / "model.ckpt").string() << "\nmetrics " << (dir / "metrics.log").string()
            << "\n";
  return 0;
}

int eval_cmd(const RunConfig& cfg, std::string checkpoint, bool persistence, const std::string& format) {
  if (checkpoint.empty()) checkpoint = (fs::path(cfg.output_dir) / "model.ckpt").string();
  auto params = load_checkpoint(checkpoint, cfg.model_config());
  auto cmp = evaluate(params, cfg, evaluation_split(cfg));
  if (format != "kv") std::cout << format_table(cmp, persistence);
  if (format == "both") std::cout << '\n';
  if (format != "table") std::cout << format_key_values(cmp, persistence);
  return 0;
}

int ablate_cmd(const RunConfig& cfg) {
  auto result = ablate(cfg, [](const AblationRow& row) {
    std::printf("%-28s mse %.6g mae %.6g ssim %.4f (%.1f s)\n", row.variant.c_str(), row.report.aggregate.mse,
                row.report.aggregate.mae, row.report.aggregate.ssim, row.seconds);
    std::fflush(stdout);
  });
  const std::string table = format_ablation(result);
  std::cout << '\n' << table;
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    std::ofstream(fs::path(cfg.output_dir) / "ablation.txt") << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal forecasting toolkit: synthetic data, training, evaluation and checks."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  ConfigArgs args;

  auto* gen = app.add_subcommand("gen-data", "generate train/eval splits as tensor files");
  std::string out_dir;
  gen->add_option("--out", out_dir, "target directory (default data.dir, else <output_dir>/data)");
  args.attach(gen);

  auto* tr = app.add_subcommand("train", "train a model; writes config.txt, metrics.log and model.ckpt");
  std::size_t every = 100;
  tr->add_option("--print-every", every, "progress line interval in steps (0 silences)");
  args.attach(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the eval split");
  std::string checkpoint, format = "both";
  bool persistence = false;
  ev->add_option("--checkpoint", checkpoint, "default <output_dir>/model.ckpt");
  ev->add_flag("--persistence", persistence, "report the persistence baseline beside the model");
  ev->add_option("--format", format, "table, kv or both")->check(CLI::IsMember({"table", "kv", "both"}));
  args.attach(ev);

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every differentiable operation");

  auto* ver = app.add_subcommand("verify", "run the oracle and invariant checks");
  bool all = false;
  std::string only;
  ver->add_flag("--all", all, "include the model-training criteria (about half an hour)");
  ver->add_option("--only", only, "criterion ids, e.g. 1,3-5");

  auto* abl = app.add_subcommand("ablate", "patch size x upsampler x H1 sweep");
  args.attach(abl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) return gen_data(args.load(), out_dir);
    if (*tr) return train_cmd(args.load(), every);
    if (*ev) return eval_cmd(args.load(true), checkpoint, persistence, format);
    if (*abl) return ablate_cmd(args.load());
    if (*gc) return run_checks({2});
    if (*ver) {
      std::vector<int> ids;
      if (!only.empty()) {
        ids = checks::parse_selection(only);
      } else {
        for (const auto& c : checks::criteria()) {
          if (all || !c.trains_models) ids.push_back(c.id);
        }
      }
      return run_checks(ids);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
