#include "stp/integrator.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "stp/ops.hpp"

namespace stp {

namespace {

void require_finite(const Tensor& t, const char* stage) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string("integrator: ") + stage + " diverged");
  }
}

// [b,1,H,W] -> [b,c,H,W] by repeating the single channel.
Tensor tile_channels(const Tensor& g, std::size_t channels) {
  const std::size_t b = g.dim(0), hw = g.dim(2) * g.dim(3);
  auto index = std::make_shared<std::vector<std::size_t>>(b * channels * hw);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < hw; ++p) (*index)[(bi * channels + c) * hw + p] = bi * hw + p;
  return gather(g, {b, channels, g.dim(2), g.dim(3)}, index);
}

}  // namespace

GateParams GateParams::zeros(std::size_t channels, bool scalar) {
  const std::size_t out = scalar ? 1 : channels;
  return {Tensor::zeros({out, 2 * channels, 1, 1}, true), Tensor::zeros({out}, true), scalar};
}

std::vector<std::pair<std::string, Tensor>> GateParams::parameters(const std::string& prefix) const {
  return {{prefix + "weight", weight}, {prefix + "bias", bias}};
}

Tensor rk2_step(const Tensor& h, const DerivativeBank& F) {
  Tensor h1 = derivative_bank_apply(F, h);
  require_finite(h1, "stage 1");
  Tensor h2 = derivative_bank_apply(F, h + h1);
  require_finite(h2, "stage 2");
  return h + (h1 + h2) * 0.5;
}

AdaptiveStep adaptive_rk2_step(const Tensor& h_hat, const DerivativeBank& F, const GateParams& gate) {
  const std::size_t c = h_hat.dim(1);
  if (gate.weight.dim(1) != 2 * c) {
    throw ShapeError("adaptive_rk2_step gate", gate.weight.shape(), h_hat.shape());
  }
  Tensor h1 = derivative_bank_apply(F, h_hat);
  require_finite(h1, "stage 1");
  Tensor h2 = derivative_bank_apply(F, h_hat + h1);
  require_finite(h2, "stage 2");
  Tensor g = sigmoid(conv2d(concat({h1, h2}, 1), gate.weight, gate.bias, Padding::valid));
  if (gate.scalar) g = tile_channels(g, c);
  return {h_hat + g * h1 + one_minus(g) * h2, g};
}

std::vector<double> gradient_norm_probe(std::size_t depth, RkMode mode, std::uint64_t seed,
                                        const ProbeOptions& options) {
  if (depth == 0) throw std::invalid_argument("gradient_norm_probe: depth must be at least 1");
  const std::size_t c = options.channels, k = options.order;
  std::mt19937_64 rng(seed);
  std::mt19937_64 gate_rng(seed ^ 0x9e3779b97f4a7c15ULL);

  // Fan-in scaled Gaussian initialization for every probe parameter.
  auto gaussian = [](std::mt19937_64& r, const Shape& shape, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(r);
    return Tensor::from(shape, std::move(v), true);
  };

  std::vector<DerivativeBank> banks;
  std::vector<GateParams> gates;
  for (std::size_t l = 0; l < depth; ++l) {
    DerivativeBank bank;
    bank.order = k;
    bank.channels = c;
    bank.filters = gaussian(rng, {k * k, k, k}, 1.0 / static_cast<double>(k));
    bank.combiner = gaussian(rng, {c, c * k * k, 1, 1}, 1.0 / std::sqrt(static_cast<double>(c * k * k)));
    banks.push_back(std::move(bank));
    GateParams gate;
    gate.weight = gaussian(gate_rng, {c, 2 * c, 1, 1}, 1.0 / std::sqrt(static_cast<double>(2 * c)));
    gate.bias = Tensor::zeros({c}, true);
    gates.push_back(std::move(gate));
  }
  Tensor x = gaussian(rng, {1, c, options.height, options.width}, 1.0);
  x.set_requires_grad(false);

  Tensor h = x;
  for (std::size_t l = 0; l < depth; ++l) {
    h = mode == RkMode::conventional ? rk2_step(h, banks[l]) : adaptive_rk2_step(h, banks[l], gates[l]).state;
  }
  Tensor loss = sum(square(h)) * 0.5;
  loss.backward();

  std::vector<double> norms;
  norms.reserve(depth);
  for (const auto& bank : banks) {
    double acc = 0.0;
    for (const auto& [name, p] : bank.parameters("")) {
      for (double g : p.grad()) acc += g * g;
    }
    norms.push_back(std::sqrt(acc));
  }
  return norms;
}

}  // namespace stp
