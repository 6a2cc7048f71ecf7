#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stp/data.hpp"
#include "stp/network.hpp"
#include "stp/objectives.hpp"

namespace stp {

struct OptimConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 3000;
  std::size_t batch_size = 1;
  double clip_norm = 1.0;  // global gradient norm; 0 disables clipping
};

struct DataConfig {
  Generator generator = Generator::blobs;
  std::size_t t_in = 10, t_out = 10;
  std::size_t height = 64, width = 64;
  std::size_t train_sequences = 2000;
  std::size_t eval_sequences = 32;
  std::string dir;  // read splits from here instead of generating

  std::size_t n_blobs = 2;
  double vx = 0.6, vy = 0.3, diffusivity = 0.3;
  std::size_t substeps = 4;
  double viscosity = 1e-3, forcing = 0.1, solver_dt = 5e-2, frame_interval = 1.0;

  GeneratorSpec generator_spec() const;
};

struct RunConfig {
  ModelConfig model;  // height, width and channels follow the data section
  OptimConfig optim;
  LossWeights loss;
  DataConfig data;
  bool data_free = false;  // train the derivative bank on moment_loss alone
  std::uint64_t seed = 0;
  std::string output_dir = "run";

  /// Model config with the frame geometry taken from the data section.
  ModelConfig model_config() const;
  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
};

/// Every accepted key, in the order format_config writes them.
std::vector<std::string> config_keys();

/// Sets one dotted key from its text form. A bare key such as `steps` stands
/// for the one dotted key ending in it. Unknown or ambiguous keys and
/// unparsable values throw std::invalid_argument naming the key.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
/// `origin` prefixes error messages (typically the file name).
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Applies a `key=value` override.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Full config as parseable text; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

}  // namespace stp
