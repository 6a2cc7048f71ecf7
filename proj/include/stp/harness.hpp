#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "stp/config.hpp"
#include "stp/data.hpp"
#include "stp/network.hpp"

namespace stp {

/// Training sequences, held in memory or generated per index on demand.
class SequenceSource {
 public:
  static SequenceSource in_memory(SequenceBatch batch);
  static SequenceSource generated(const GeneratorSpec& spec, std::uint64_t seed, std::size_t first,
                                  std::size_t count);

  std::size_t size() const { return count_; }
  /// Stacks the selected sequences into one batch.
  SequenceBatch gather(const std::vector<std::size_t>& indices) const;

 private:
  SequenceBatch batch_;
  GeneratorSpec spec_;
  std::uint64_t seed_ = 0;
  std::size_t first_ = 0, count_ = 0;
  bool lazy_ = false;
};

/// Train split from data.dir when set, else sequences 0 .. N-1 of the
/// configured generator. Small sets are generated up front.
SequenceSource training_source(const RunConfig& cfg);

/// Eval split from data.dir when set, else the next data.eval_sequences
/// indices after the training ones, so the two never overlap.
SequenceBatch evaluation_split(const RunConfig& cfg);

struct TrainResult {
  ModelParams params;
  std::vector<LossBreakdown> history;
  double seconds = 0.0;
};

using TrainObserver = std::function<void(std::size_t step, const LossBreakdown&)>;

/// Adam on total_loss over the full forecast horizon, one line per step to
/// `log` (`step= total= mse= h1= moment=`). Throws NumericError naming the
/// step and the loss breakdown when the loss turns non-finite.
TrainResult train(const RunConfig& cfg, std::ostream* log = nullptr, const TrainObserver& observer = {});

/// train() plus output_dir/{config.txt, metrics.log, model.ckpt}.
TrainResult train_to_directory(const RunConfig& cfg, const TrainObserver& observer = {});

/// Autoregressive forecast without gradient tracking, `chunk` sequences at a time.
Tensor forecast(const ModelParams& params, const ModelConfig& cfg, const Tensor& inputs, std::size_t horizon,
                std::size_t chunk = 8);

struct FrameMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double ssim = 0.0;
  double nmse = 0.0;  // only meaningful when EvalReport::has_nmse
};

struct EvalReport {
  std::vector<FrameMetrics> per_lead;
  FrameMetrics aggregate;  // mse/mae over all frames; ssim/nmse averaged over leads
  bool has_nmse = false;
  double data_range = 1.0;  // SSIM dynamic range
};

/// Per-lead metrics of [b, T, C, H, W] predictions.
EvalReport evaluate_predictions(const Tensor& pred, const Tensor& targets, bool with_nmse, double data_range);

/// SSIM range for a generator: 1 for blobs, else the target spread.
double ssim_data_range(Generator generator, const Tensor& targets);

struct Comparison {
  EvalReport model;
  EvalReport persistence;
};

Comparison evaluate(const ModelParams& params, const RunConfig& cfg, const SequenceBatch& split);

/// Human-readable table; persistence columns sit beside the model's.
std::string format_table(const Comparison& c, bool with_persistence = true);
/// `lead=k mse=... persistence_mse=...` lines plus a `lead=all` line.
std::string format_key_values(const Comparison& c, bool with_persistence = true);

struct AblationRow {
  std::string variant;
  std::size_t patch_size = 0;
  Upsampler upsampler = Upsampler::transposed_conv;
  double h1_weight = 0.0;
  EvalReport report;
  double seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<std::size_t> ranking;  // row indices by aggregate MSE, best first
  bool strict_ordering = false;      // no two variants tie on aggregate MSE
  EvalReport persistence;
};

/// Trains every combination of patch size {2,4,8}, upsampler and
/// λ_H ∈ {0, configured} from `base` and evaluates each on the same split.
AblationResult ablate(const RunConfig& base, const std::function<void(const AblationRow&)>& progress = {});
std::string format_ablation(const AblationResult& result);

}  // namespace stp
