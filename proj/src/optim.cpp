#include "stp/optim.hpp"

#include <cmath>

namespace stp {

double global_grad_norm(const NamedTensors& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_scale(double norm, double max_norm) {
  if (max_norm <= 0.0 || !(norm > max_norm)) return 1.0;
  return max_norm / norm;
}

Adam::Adam(NamedTensors params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step(double grad_scale) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].second;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * grad_scale;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      w[j] -= options_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.epsilon);
    }
  }
}

}  // namespace stp
