#include "stp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stp {

namespace {

constexpr double kNoiseUlps = 64.0;

double evaluate(const std::function<Tensor()>& objective) {
  const double v = objective().item();
  if (!std::isfinite(v)) throw NumericError("check_gradient: objective is not finite");
  return v;
}

}  // namespace

GradientReport check_gradient(const std::function<Tensor()>& objective,
                              const std::vector<std::pair<std::string, Tensor>>& params,
                              double step, double tolerance) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be positive");
  for (const auto& [name, p] : params) {
    if (!p.requires_grad()) throw std::invalid_argument("check_gradient: " + name + " does not track gradients");
    Tensor handle = p;
    handle.zero_grad();
  }
  Tensor loss = objective();
  if (!std::isfinite(loss.item())) throw NumericError("check_gradient: objective is not finite");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  double scale = 1.0;
  for (const auto& [name, p] : params) {
    analytic.push_back(p.grad());
    for (double g : analytic.back()) scale = std::max(scale, std::abs(g));
  }
  const double floor = 1e-6 * scale;

  GradientReport report;
  report.tolerance = tolerance;
  std::size_t flat = 0;
  double worst_raw = -1.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(objective);
      values[i] = saved - step;
      const double down = evaluate(objective);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][i];
      // Rounding in up - down bounds how well `numeric` can be known at all.
      const double noise = kNoiseUlps * std::numeric_limits<double>::epsilon() *
                           (std::abs(up) + std::abs(down)) / (2.0 * step);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double raw = std::abs(a - numeric) / denom;
      const double disc = std::max(0.0, std::abs(a - numeric) - noise) / denom;
      report.max_raw_relative = std::max(report.max_raw_relative, raw);
      if (disc > report.max_discrepancy || (disc == report.max_discrepancy && raw >= worst_raw)) {
        worst_raw = raw;
        report.max_discrepancy = disc;
        report.worst_index = flat;
        report.worst_param = params[pi].first;
      }
      ++report.elements;
    }
  }
  report.passed = report.max_discrepancy <= tolerance;
  return report;
}

GradientReport check_gradient(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step,
                              double tolerance) {
  if (!x.requires_grad()) x.set_requires_grad(true);
  return check_gradient([&] { return f(x); }, {{"x", x}}, step, tolerance);
}

}  // namespace stp
