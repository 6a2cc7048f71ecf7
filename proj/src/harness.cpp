#include "stp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "stp/objectives.hpp"
#include "stp/ops.hpp"
#include "stp/optim.hpp"

namespace stp {

namespace {

// Datasets above this size are generated per step instead of up front.
constexpr std::size_t kCacheBytes = std::size_t{512} << 20;

// Turns gradient tracking off for every parameter and back on at scope exit.
class NoGrad {
 public:
  explicit NoGrad(const ModelParams& params) : params_(params.named_parameters()) {
    for (auto& [name, t] : params_) {
      flags_.push_back(t.requires_grad());
      t.set_requires_grad(false);
    }
  }
  ~NoGrad() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].second.set_requires_grad(flags_[i]);
  }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  NamedTensors params_;
  std::vector<bool> flags_;
};

Tensor take_sequences(const Tensor& t, std::size_t first, std::size_t count) {
  Shape shape = t.shape();
  const std::size_t per = t.numel() / shape[0];
  shape[0] = count;
  auto d = t.data().subspan(first * per, count * per);
  return Tensor::from(shape, {d.begin(), d.end()});
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

SequenceSource SequenceSource::in_memory(SequenceBatch batch) {
  SequenceSource s;
  s.count_ = batch.inputs.dim(0);
  s.batch_ = std::move(batch);
  return s;
}

SequenceSource SequenceSource::generated(const GeneratorSpec& spec, std::uint64_t seed, std::size_t first,
                                         std::size_t count) {
  SequenceSource s;
  s.spec_ = spec;
  s.seed_ = seed;
  s.first_ = first;
  s.count_ = count;
  s.lazy_ = true;
  return s;
}

SequenceBatch SequenceSource::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("SequenceSource::gather: no indices");
  std::vector<Tensor> inputs, targets;
  for (std::size_t i : indices) {
    if (i >= count_) throw std::out_of_range("sequence index " + std::to_string(i) + " out of range");
    if (lazy_) {
      auto one = generate_batch(spec_, seed_, first_ + i, 1);
      inputs.push_back(one.inputs);
      targets.push_back(one.targets);
    } else {
      inputs.push_back(take_sequences(batch_.inputs, i, 1));
      targets.push_back(take_sequences(batch_.targets, i, 1));
    }
  }
  if (inputs.size() == 1) return {inputs[0], targets[0], {}};
  return {concat(inputs, 0), concat(targets, 0), {}};
}

SequenceSource training_source(const RunConfig& cfg) {
  if (!cfg.data.dir.empty()) return SequenceSource::in_memory(read_dataset(cfg.data.dir, "train"));
  const auto spec = cfg.data.generator_spec();
  const std::size_t n = cfg.data.train_sequences;
  const std::size_t bytes = n * (spec.t_in + spec.t_out) * spec.height() * spec.width() * sizeof(double);
  if (bytes <= kCacheBytes) return SequenceSource::in_memory(generate_batch(spec, cfg.seed, 0, n));
  return SequenceSource::generated(spec, cfg.seed, 0, n);
}

SequenceBatch evaluation_split(const RunConfig& cfg) {
  if (!cfg.data.dir.empty()) return read_dataset(cfg.data.dir, "eval");
  if (cfg.data.eval_sequences == 0) throw std::invalid_argument("data.eval_sequences must be positive");
  return generate_batch(cfg.data.generator_spec(), cfg.seed, cfg.data.train_sequences, cfg.data.eval_sequences);
}

TrainResult train(const RunConfig& cfg, std::ostream* log, const TrainObserver& observer) {
  cfg.validate();
  const ModelConfig model_cfg = cfg.model_config();
  TrainResult result;
  result.params = init_model(model_cfg, cfg.seed);
  NamedTensors trainable;
  if (cfg.data_free) {
    trainable.emplace_back("bank.filters", result.params.bank.filters);
  } else {
    trainable = result.params.named_parameters();
  }
  for (auto& [name, t] : trainable) t.set_requires_grad(true);
  Adam adam(trainable, {cfg.optim.learning_rate});

  std::optional<SequenceSource> source;
  if (!cfg.data_free) source = training_source(cfg);
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  auto next_indices = [&] {
    std::vector<std::size_t> picked;
    while (picked.size() < cfg.optim.batch_size) {
      if (cursor == order.size()) {
        order.resize(source->size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(sequence_seed(cfg.seed ^ 0x5eedULL, epoch++));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      picked.push_back(order[cursor++]);
    }
    return picked;
  };

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t step = 1; step <= cfg.optim.steps; ++step) {
    for (auto& [name, t] : trainable) t.zero_grad();
    Tensor objective;
    LossBreakdown parts;
    if (cfg.data_free) {
      objective = moment_loss(result.params.bank) * cfg.loss.moment;
      parts.moment = objective.item() / (cfg.loss.moment > 0.0 ? cfg.loss.moment : 1.0);
      parts.total = objective.item();
    } else {
      auto batch = source->gather(next_indices());
      Tensor pred = rollout(batch.inputs, cfg.data.t_out, result.params, model_cfg);
      try {
        auto loss = total_loss(pred, batch.targets, result.params.bank, cfg.loss);
        objective = loss.value;
        parts = loss.parts;
      } catch (const NumericError&) {
        // The spectral term refuses non-finite fields; report what is still computable.
        parts.mse = mse_metric(pred, batch.targets);
        parts.moment = moment_loss(result.params.bank).item();
        parts.h1 = parts.total = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (!std::isfinite(parts.total)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": total=" << parts.total << " mse=" << parts.mse
          << " h1=" << parts.h1 << " moment=" << parts.moment;
      throw NumericError(msg.str());
    }
    objective.backward();
    adam.step(clip_scale(global_grad_norm(trainable), cfg.optim.clip_norm));
    result.history.push_back(parts);
    if (log) {
      char line[256];
      std::snprintf(line, sizeof line, "step=%zu total=%.17g mse=%.17g h1=%.17g moment=%.17g\n", step, parts.total,
                    parts.mse, parts.h1, parts.moment);
      *log << line;
    }
    if (observer) observer(step, parts);
  }
  for (auto& [name, t] : trainable) {
    t.zero_grad();
    t.set_requires_grad(false);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainResult train_to_directory(const RunConfig& cfg, const TrainObserver& observer) {
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt", std::ios::trunc);
    out << format_config(cfg);
  }
  std::ofstream log(dir / "metrics.log", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (dir / "metrics.log").string());
  TrainResult result = train(cfg, &log, observer);
  log.flush();
  save_checkpoint(dir / "model.ckpt", result.params);
  return result;
}

Tensor forecast(const ModelParams& params, const ModelConfig& cfg, const Tensor& inputs, std::size_t horizon,
                std::size_t chunk) {
  NoGrad guard(params);
  const std::size_t b = inputs.dim(0);
  if (chunk == 0) chunk = b;
  std::vector<Tensor> parts;
  for (std::size_t first = 0; first < b; first += chunk) {
    const std::size_t n = std::min(chunk, b - first);
    parts.push_back(rollout(take_sequences(inputs.detach(), first, n), horizon, params, cfg));
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

double ssim_data_range(Generator generator, const Tensor& targets) {
  if (generator == Generator::blobs) return 1.0;
  auto d = targets.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  return *hi > *lo ? *hi - *lo : 1.0;
}

EvalReport evaluate_predictions(const Tensor& pred, const Tensor& targets, bool with_nmse, double data_range) {
  if (pred.shape() != targets.shape() || pred.rank() != 5) {
    throw ShapeError("evaluate_predictions", pred.shape(), targets.shape());
  }
  const std::size_t b = pred.dim(0), leads = pred.dim(1);
  const Shape frame{pred.dim(2), pred.dim(3), pred.dim(4)};
  const std::size_t fsize = shape_numel(frame);
  EvalReport report;
  report.has_nmse = with_nmse;
  report.data_range = data_range;
  const SsimOptions ssim_opts{data_range};
  for (std::size_t t = 0; t < leads; ++t) {
    std::vector<double> p(b * fsize), q(b * fsize);
    for (std::size_t s = 0; s < b; ++s) {
      auto src_p = pred.data().subspan((s * leads + t) * fsize, fsize);
      auto src_q = targets.data().subspan((s * leads + t) * fsize, fsize);
      std::copy(src_p.begin(), src_p.end(), p.begin() + static_cast<std::ptrdiff_t>(s * fsize));
      std::copy(src_q.begin(), src_q.end(), q.begin() + static_cast<std::ptrdiff_t>(s * fsize));
    }
    Shape lead_shape{b, frame[0], frame[1], frame[2]};
    Tensor pt = Tensor::from(lead_shape, std::move(p)), qt = Tensor::from(lead_shape, std::move(q));
    FrameMetrics m;
    m.mse = mse_metric(pt, qt);
    m.mae = mae_metric(pt, qt);
    m.ssim = ssim_frames(pt, qt, ssim_opts);
    if (with_nmse) m.nmse = nmse(pt, qt);
    report.per_lead.push_back(m);
  }
  report.aggregate.mse = mse_metric(pred, targets);
  report.aggregate.mae = mae_metric(pred, targets);
  for (const auto& m : report.per_lead) {
    report.aggregate.ssim += m.ssim / static_cast<double>(leads);
    report.aggregate.nmse += m.nmse / static_cast<double>(leads);
  }
  return report;
}

Comparison evaluate(const ModelParams& params, const RunConfig& cfg, const SequenceBatch& split) {
  const ModelConfig model_cfg = cfg.model_config();
  const std::size_t horizon = split.targets.dim(1);
  const bool with_nmse = cfg.data.generator == Generator::navier_stokes;
  const double range = ssim_data_range(cfg.data.generator, split.targets);
  Tensor pred = forecast(params, model_cfg, split.inputs, horizon);
  Tensor base = persistence_baseline(split.inputs, horizon);
  return {evaluate_predictions(pred, split.targets, with_nmse, range),
          evaluate_predictions(base, split.targets, with_nmse, range)};
}

std::string format_table(const Comparison& c, bool with_persistence) {
  std::ostringstream out;
  const bool n = c.model.has_nmse;
  auto cell = [&](const std::string& text, int width) { out << std::setw(width) << text; };
  cell("lead", 6);
  for (const char* name : {"mse", "mae", "ssim"}) cell(name, 13);
  if (n) cell("nmse", 13);
  if (with_persistence) {
    out << "  |";
    for (const char* name : {"persist_mse", "persist_mae", "persist_ssim"}) cell(name, 13);
    if (n) cell("persist_nmse", 13);
  }
  out << '\n';
  auto row = [&](const std::string& label, const FrameMetrics& m, const FrameMetrics& p) {
    cell(label, 6);
    for (double v : {m.mse, m.mae, m.ssim}) cell(format_metric(v), 13);
    if (n) cell(format_metric(m.nmse), 13);
    if (with_persistence) {
      out << "  |";
      for (double v : {p.mse, p.mae, p.ssim}) cell(format_metric(v), 13);
      if (n) cell(format_metric(p.nmse), 13);
    }
    out << '\n';
  };
  for (std::size_t t = 0; t < c.model.per_lead.size(); ++t) {
    row(std::to_string(t + 1), c.model.per_lead[t], c.persistence.per_lead[t]);
  }
  row("all", c.model.aggregate, c.persistence.aggregate);
  return out.str();
}

std::string format_key_values(const Comparison& c, bool with_persistence) {
  std::ostringstream out;
  out.precision(17);
  auto line = [&](const std::string& lead, const FrameMetrics& m, const FrameMetrics& p) {
    out << "lead=" << lead << " mse=" << m.mse << " mae=" << m.mae << " ssim=" << m.ssim;
    if (c.model.has_nmse) out << " nmse=" << m.nmse;
    if (with_persistence) {
      out << " persistence_mse=" << p.mse << " persistence_mae=" << p.mae << " persistence_ssim=" << p.ssim;
      if (c.model.has_nmse) out << " persistence_nmse=" << p.nmse;
    }
    out << '\n';
  };
  for (std::size_t t = 0; t < c.model.per_lead.size(); ++t) {
    line(std::to_string(t + 1), c.model.per_lead[t], c.persistence.per_lead[t]);
  }
  line("all", c.model.aggregate, c.persistence.aggregate);
  return out.str();
}

AblationResult ablate(const RunConfig& base, const std::function<void(const AblationRow&)>& progress) {
  const double h1_on = base.loss.h1 > 0.0 ? base.loss.h1 : LossWeights{}.h1;
  SequenceBatch split = evaluation_split(base);
  AblationResult result;
  for (std::size_t p : {2u, 4u, 8u}) {
    for (Upsampler up : {Upsampler::transposed_conv, Upsampler::bilinear}) {
      for (double h1 : {h1_on, 0.0}) {
        RunConfig cfg = base;
        cfg.model.patch_size = p;
        cfg.model.upsampler = up;
        cfg.loss.h1 = h1;
        AblationRow row;
        row.variant = "p" + std::to_string(p) + "_" + to_string(up) + (h1 > 0.0 ? "_h1" : "_no_h1");
        row.patch_size = p;
        row.upsampler = up;
        row.h1_weight = h1;
        TrainResult trained;
        if (base.output_dir.empty()) {
          trained = train(cfg);
        } else {
          cfg.output_dir = (std::filesystem::path(base.output_dir) / row.variant).string();
          trained = train_to_directory(cfg);
        }
        auto cmp = evaluate(trained.params, cfg, split);
        row.report = cmp.model;
        row.seconds = trained.seconds;
        if (result.rows.empty()) result.persistence = cmp.persistence;
        result.rows.push_back(row);
        if (progress) progress(result.rows.back());
      }
    }
  }
  result.ranking.resize(result.rows.size());
  std::iota(result.ranking.begin(), result.ranking.end(), std::size_t{0});
  std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](std::size_t a, std::size_t b) {
    return result.rows[a].report.aggregate.mse < result.rows[b].report.aggregate.mse;
  });
  result.strict_ordering = true;
  for (std::size_t i = 1; i < result.ranking.size(); ++i) {
    if (!(result.rows[result.ranking[i - 1]].report.aggregate.mse <
          result.rows[result.ranking[i]].report.aggregate.mse)) {
      result.strict_ordering = false;
    }
  }
  return result;
}

std::string format_ablation(const AblationResult& r) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-4s %-28s %5s %-15s %6s %12s %12s %9s %9s\n", "rank", "variant", "patch",
                "upsampler", "h1", "mse", "mae", "ssim", "seconds");
  out << line;
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const auto& row = r.rows[r.ranking[k]];
    std::snprintf(line, sizeof line, "%-4zu %-28s %5zu %-15s %6.3g %12.6g %12.6g %9.4f %9.1f\n", k + 1,
                  row.variant.c_str(), row.patch_size, to_string(row.upsampler).c_str(), row.h1_weight,
                  row.report.aggregate.mse, row.report.aggregate.mae, row.report.aggregate.ssim, row.seconds);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-4s %-28s %5s %-15s %6s %12.6g %12.6g %9.4f\n", "-", "persistence", "-", "-",
                "-", r.persistence.aggregate.mse, r.persistence.aggregate.mae, r.persistence.aggregate.ssim);
  out << line;
  out << "ordering=" << (r.strict_ordering ? "strict" : "ties") << '\n';
  out.precision(17);
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const auto& row = r.rows[r.ranking[k]];
    out << "variant=" << row.variant << " rank=" << k + 1 << " patch_size=" << row.patch_size
        << " upsampler=" << to_string(row.upsampler) << " h1=" << row.h1_weight
        << " mse=" << row.report.aggregate.mse << " mae=" << row.report.aggregate.mae
        << " ssim=" << row.report.aggregate.ssim << '\n';
  }
  return out.str();
}

}  // namespace stp
