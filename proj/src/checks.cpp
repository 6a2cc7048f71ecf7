#include "stp/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <iterator>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "stp/config.hpp"
#include "stp/gradcheck.hpp"
#include "stp/harness.hpp"
#include "stp/integrator.hpp"
#include "stp/network.hpp"
#include "stp/objectives.hpp"
#include "stp/ops.hpp"
#include "stp/physics.hpp"
#include "stp/spectral.hpp"

namespace stp::checks {

namespace {

std::string fmt(const char* format, auto... args) {
  std::string out(static_cast<std::size_t>(std::snprintf(nullptr, 0, format, args...)), '\0');
  std::snprintf(out.data(), out.size() + 1, format, args...);
  return out;
}

Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
               bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

void randomize(const Tensor& t, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.impl()->data) v = dist(rng);
}

// Direct double sum, the definition the FFT must reproduce.
std::vector<std::complex<double>> direct_dft(std::span<const double> f, std::size_t h, std::size_t w) {
  std::vector<std::complex<double>> out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t x = 0; x < h; ++x)
        for (std::size_t y = 0; y < w; ++y) {
          const double phase = -2.0 * std::numbers::pi *
                               (static_cast<double>(u * x % h) / static_cast<double>(h) +
                                static_cast<double>(v * y % w) / static_cast<double>(w));
          acc += f[x * w + y] * std::polar(1.0, phase);
        }
      out[u * w + v] = acc;
    }
  return out;
}

Outcome fft_oracle(const Options&) {
  Outcome o;
  std::mt19937_64 rng(1);
  double worst = 0.0, worst_parseval = 0.0;
  for (std::size_t h = 1; h <= 12; ++h)
    for (std::size_t w = 1; w <= 12; ++w) {
      Tensor f = uniform({h, w}, rng);
      auto z = fft2(f);
      auto ref = direct_dft(f.data(), h, w);
      double spatial = 0.0, spectral = 0.0;
      for (std::size_t i = 0; i < h * w; ++i) {
        worst = std::max({worst, std::abs(z.re[i] - ref[i].real()), std::abs(z.im[i] - ref[i].imag())});
        spatial += f[i] * f[i];
        spectral += z.re[i] * z.re[i] + z.im[i] * z.im[i];
      }
      spectral /= static_cast<double>(h * w);
      worst_parseval = std::max(worst_parseval, std::abs(spectral - spatial) / spatial);
    }
  o.passed = worst <= 1e-10 && worst_parseval <= 1e-9;
  o.summary = fmt("144 grids, max |fft2 - direct| = %.3g, max Parseval rel err = %.3g", worst, worst_parseval);
  return o;
}

struct GradCase {
  std::string name;
  double tolerance;
  std::function<GradientReport(double tolerance)> run;
};

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  for (auto [kind, label] : {std::pair{BinaryKind::add, "add"}, {BinaryKind::sub, "sub"},
                             {BinaryKind::mul, "mul"}, {BinaryKind::div, "div"}}) {
    cases.push_back({std::string("elementwise.") + label, 1e-4, [kind](double tol) {
                       std::mt19937_64 rng(10);
                       Tensor a = uniform({3, 4}, rng, 0.5, 1.5, true), b = uniform({3, 4}, rng, 0.5, 1.5, true);
                       Tensor w = uniform({3, 4}, rng);
                       return check_gradient([&] { return sum(mul(elementwise(a, b, kind), w)); },
                                             {{"a", a}, {"b", b}}, 1e-6, tol);
                     }});
  }
  for (auto [kind, label] : {std::pair{UnaryKind::sigmoid, "sigmoid"}, {UnaryKind::tanh, "tanh"},
                             {UnaryKind::relu, "relu"}, {UnaryKind::neg, "neg"},
                             {UnaryKind::square, "square"}, {UnaryKind::exp, "exp"}}) {
    cases.push_back({std::string("elementwise.") + label, 1e-4, [kind](double tol) {
                       std::mt19937_64 rng(11);
                       // Keep relu inputs away from its kink.
                       Tensor a = uniform({3, 4}, rng, 0.2, 1.0, true);
                       auto d = a.mutable_data();
                       for (std::size_t i = 0; i < d.size(); i += 2) d[i] = -d[i];
                       Tensor w = uniform({3, 4}, rng);
                       return check_gradient([&] { return sum(mul(unary(a, kind), w)); }, {{"a", a}}, 1e-6, tol);
                     }});
  }
  cases.push_back({"conv2d", 1e-4, [](double tol) {
                     std::mt19937_64 rng(12);
                     Tensor x = uniform({2, 2, 6, 6}, rng, -1, 1, true), k = uniform({3, 2, 3, 3}, rng, -1, 1, true);
                     Tensor b = uniform({3}, rng, -1, 1, true), w1 = uniform({2, 3, 6, 6}, rng),
                            w2 = uniform({2, 3, 2, 2}, rng);
                     return check_gradient(
                         [&] {
                           return sum(mul(conv2d(x, k, b, Padding::same), w1)) +
                                  sum(mul(conv2d(x, k, b, Padding::valid, 2), w2));
                         },
                         {{"input", x}, {"kernel", k}, {"bias", b}}, 1e-6, tol);
                   }});
  cases.push_back({"fourier_block", 1e-4, [](double tol) {
                     std::mt19937_64 rng(13);
                     Tensor u = uniform({2, 2, 4, 6}, rng, -1, 1, true);
                     SpectralKernel k{uniform({2, 4, 6}, rng, -1, 1, true), uniform({2, 4, 6}, rng, -1, 1, true)};
                     Tensor w = uniform({2, 2, 4, 6}, rng);
                     return check_gradient([&] { return sum(mul(fourier_block(u, k), w)); },
                                           {{"u", u}, {"kernel.re", k.re}, {"kernel.im", k.im}}, 1e-6, tol);
                   }});
  cases.push_back({"moment_loss", 1e-6, [](double tol) {
                     std::mt19937_64 rng(14);
                     auto bank = DerivativeBank::create(1, 3, rng, 0.5);
                     return check_gradient([&] { return moment_loss(bank); }, bank.parameters("bank."), 1e-5, tol);
                   }});
  cases.push_back({"h1_loss", 1e-6, [](double tol) {
                     std::mt19937_64 rng(15);
                     Tensor p = uniform({1, 2, 4, 6}, rng, -1, 1, true), t = uniform({1, 2, 4, 6}, rng);
                     return check_gradient([&] { return h1_loss(p, t); }, {{"pred", p}}, 1e-5, tol);
                   }});
  cases.push_back({"lstm_cell", 1e-4, [](double tol) {
                     std::mt19937_64 rng(16);
                     const std::size_t c = 3;
                     LstmParams p{uniform({4 * c, 2 * c, 1, 1}, rng, -1, 1, true), uniform({4 * c}, rng, -1, 1, true)};
                     ModelState s{uniform({2, c, 3, 3}, rng, -1, 1, true), uniform({2, c, 3, 3}, rng, -1, 1, true)};
                     Tensor u = uniform({2, c, 3, 3}, rng, -1, 1, true);
                     Tensor w1 = uniform({2, c, 3, 3}, rng), w2 = uniform({2, c, 3, 3}, rng);
                     return check_gradient(
                         [&] {
                           auto out = lstm_cell(u, s, p);
                           return sum(mul(out.hidden, w1)) + sum(mul(out.cell, w2));
                         },
                         {{"weight", p.weight}, {"bias", p.bias}, {"u", u}, {"hidden", s.hidden}, {"cell", s.cell}},
                         1e-6, tol);
                   }});
  cases.push_back({"window_attention_block", 1e-4, [](double tol) {
                     ModelConfig cfg;
                     cfg.height = cfg.width = 8;
                     cfg.patch_size = 2;
                     cfg.embed_dim = 8;
                     cfg.window_size = 2;
                     auto params = init_model(cfg, 17);
                     std::mt19937_64 rng(17);
                     GradientReport worst;
                     std::size_t elements = 0;
                     double raw = 0.0;
                     for (const auto& block : params.blocks) {
                       Tensor u = uniform({1, 8, 4, 4}, rng, -1, 1, true), w = uniform({1, 8, 4, 4}, rng);
                       auto named = block.parameters("");
                       named.emplace_back("u", u);
                       auto r = check_gradient([&] { return sum(mul(window_attention_block(u, block, 2).output, w)); },
                                               named, 1e-6, tol);
                       elements += r.elements;
                       raw = std::max(raw, r.max_raw_relative);
                       if (worst.elements == 0 || !r.passed || r.max_discrepancy > worst.max_discrepancy) worst = r;
                     }
                     worst.elements = elements;
                     worst.max_raw_relative = raw;
                     return worst;
                   }});
  cases.push_back({"adaptive_rk2_step", 1e-4, [](double tol) {
                     std::mt19937_64 rng(18);
                     auto bank = DerivativeBank::create(2, 3, rng, 0.3);
                     randomize(bank.combiner, rng, 0.2);
                     auto gate = GateParams::zeros(2);
                     randomize(gate.weight, rng, 0.5);
                     randomize(gate.bias, rng, 0.5);
                     Tensor h = uniform({1, 2, 5, 5}, rng, -1, 1, true), w = uniform({1, 2, 5, 5}, rng);
                     auto named = bank.parameters("bank.");
                     for (auto& p : gate.parameters("gate.")) named.push_back(p);
                     named.emplace_back("h_hat", h);
                     return check_gradient([&] { return sum(mul(adaptive_rk2_step(h, bank, gate).state, w)); }, named,
                                           1e-6, tol);
                   }});
  for (auto mode : {RkMode::adaptive, RkMode::conventional}) {
    cases.push_back({"model_step." + to_string(mode), 1e-4, [mode](double tol) {
                       ModelConfig cfg;
                       cfg.height = cfg.width = 8;
                       cfg.patch_size = 2;
                       cfg.embed_dim = 8;
                       cfg.window_size = 2;
                       cfg.rk_mode = mode;
                       auto params = init_model(cfg, 19);
                       // Move the zero-initialized groups off zero so every path carries gradient.
                       std::mt19937_64 rng(19);
                       randomize(params.bank.combiner, rng, 0.05);
                       randomize(params.bank.filters, rng, 0.3);
                       randomize(params.gate.weight, rng, 0.3);
                       randomize(params.gate.bias, rng, 0.3);
                       randomize(params.lstm.bias, rng, 0.3);
                       for (auto& k : params.fourier) randomize(k.re, rng, 0.3), randomize(k.im, rng, 0.3);
                       ModelState state{uniform({1, 8, 4, 4}, rng), uniform({1, 8, 4, 4}, rng)};
                       Tensor x = uniform({1, 1, 8, 8}, rng), target = uniform({1, 1, 8, 8}, rng);
                       return check_gradient(
                           [&] { return mean(square(model_step(x, state, params, cfg).prediction - target)); },
                           params.named_parameters(), 1e-6, tol);
                     }});
  }
  return cases;
}

Outcome gradient_suite(const Options&) {
  Outcome o;
  o.passed = true;
  std::size_t failed = 0, elements = 0;
  auto cases = gradient_cases();
  for (const auto& c : cases) {
    auto r = c.run(c.tolerance);
    elements += r.elements;
    o.detail.push_back(fmt("%-26s %-4s tol %.0e  discrepancy %.3g  raw rel err %.3g at %s[%zu]  (%zu elements)",
                           c.name.c_str(), r.passed ? "ok" : "FAIL", c.tolerance, r.max_discrepancy,
                           r.max_raw_relative, r.worst_param.c_str(), r.worst_index, r.elements));
    if (!r.passed) ++failed, o.passed = false;
  }
  o.summary = fmt("%zu operations, %zu checked elements, %zu failed", cases.size(), elements, failed);
  return o;
}

// (u-c)^a (v-c)^b / (a! b!) sampled on an n×n grid centred on the middle pixel.
Tensor monomial_field(std::size_t n, std::size_t a, std::size_t b) {
  const double fact[] = {1, 1, 2, 6, 24};
  const double c = static_cast<double>(n - 1) / 2.0;
  std::vector<double> v(n * n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t w = 0; w < n; ++w)
      v[u * n + w] = std::pow(u - c, a) * std::pow(w - c, b) / (fact[a] * fact[b]);
  return Tensor::from({1, 1, n, n}, std::move(v));
}

Outcome moment_criterion(const Options& opt) {
  Outcome o;
  const std::size_t k = 3;
  double round_trip = 0.0;
  auto exact = solve_exact_stencils(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      auto m = moment_of(exact[i * k + j]).entries;
      auto t = target_moment(k, i, j).entries;
      for (std::size_t e = 0; e < m.numel(); ++e) round_trip = std::max(round_trip, std::abs(m[e] - t[e]));
    }

  RunConfig cfg;
  cfg.data_free = true;
  cfg.loss.h1 = 0.0;
  cfg.model.derivative_order = k;
  cfg.optim.learning_rate = 1e-2;
  cfg.optim.steps = 2000;
  cfg.output_dir = "";
  std::size_t reached = 0;
  double initial = 0.0;
  auto trained = train(cfg, nullptr, [&](std::size_t step, const LossBreakdown& p) {
    if (step == 1) initial = p.moment;
    if (!reached && p.moment < 1e-6) reached = step;
  });
  const double final_loss = moment_loss(trained.params.bank).item();
  if (opt.progress) *opt.progress << "  moment loss " << initial << " -> " << final_loss << "\n";

  // Every trained filter applied to every low-order monomial: the centre
  // response must be 1 for its own derivative and 0 otherwise.
  double response = 0.0;
  const std::size_t n = 7;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      Tensor filter = reshape(slice(trained.params.bank.filters.detach(), 0, i * k + j, 1), {1, 1, k, k});
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; a + b < 3; ++b) {
          Tensor out = conv2d(monomial_field(n, a, b), filter, Tensor(), Padding::same);
          const double expect = (i == a && j == b) ? 1.0 : 0.0;
          response = std::max(response, std::abs(out[(n / 2) * n + n / 2] - expect));
        }
    }

  o.passed = round_trip <= 1e-12 && reached > 0 && final_loss < 1e-6 && response < 1e-3;
  o.summary = fmt("stencil round trip %.3g; moment loss %.3g -> %.3g, below 1e-6 at step %zu; max monomial "
                  "response error %.3g",
                  round_trip, initial, final_loss, reached, response);
  return o;
}

// F(h) = λ h through the centre tap of the identity filter.
DerivativeBank scalar_bank(double lambda) {
  std::mt19937_64 rng(0);
  auto bank = DerivativeBank::create(1, 3, rng);
  auto f = bank.filters.mutable_data();
  std::fill(f.begin(), f.end(), 0.0);
  f[4] = 1.0;
  bank.combiner.mutable_data()[0] = lambda;
  return bank;
}

Outcome integrator_order(const Options&) {
  Outcome o;
  std::vector<double> logn, logerr;
  std::string errors;
  for (std::size_t n : {4u, 8u, 16u, 32u}) {
    auto bank = scalar_bank(-1.0 / static_cast<double>(n));
    Tensor h = Tensor::ones({1, 1, 3, 3});
    for (std::size_t s = 0; s < n; ++s) h = rk2_step(h, bank);
    const double err = std::abs(h[4] - std::exp(-1.0));
    errors += fmt(" n=%zu:%.3g", n, err);
    logn.push_back(std::log(static_cast<double>(n)));
    logerr.push_back(std::log(err));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 4; ++i) mx += logn[i] / 4, my += logerr[i] / 4;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 4; ++i) num += (logn[i] - mx) * (logerr[i] - my), den += (logn[i] - mx) * (logn[i] - mx);
  const double order = -num / den;
  o.passed = std::abs(order - 2.0) <= 0.2;
  o.summary = fmt("fitted order %.4f; errors%s", order, errors.c_str());
  return o;
}

Outcome reduction_identity(const Options&) {
  Outcome o;
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto bank = DerivativeBank::create(2, 3, rng, 0.3);
    randomize(bank.combiner, rng, 0.2);
    Tensor h = uniform({1, 2, 6, 6}, rng);
    auto adaptive = adaptive_rk2_step(h, bank, GateParams::zeros(2)).state;
    auto plain = rk2_step(h, bank);
    for (std::size_t i = 0; i < h.numel(); ++i) worst = std::max(worst, std::abs(adaptive[i] - plain[i]));
  }
  o.passed = worst <= 1e-15;
  o.summary = fmt("20 random inputs, max |adaptive - rk2| = %.3g", worst);
  return o;
}

Outcome gradient_propagation(const Options&) {
  Outcome o;
  std::size_t wins = 0;
  const std::size_t trials = 20, depth = 24;
  for (std::size_t seed = 0; seed < trials; ++seed) {
    const double conv = gradient_norm_probe(depth, RkMode::conventional, seed).front();
    const double adap = gradient_norm_probe(depth, RkMode::adaptive, seed).front();
    if (adap >= conv) ++wins;
    o.detail.push_back(fmt("seed %2zu  layer-0 grad norm conventional %.6e  adaptive %.6e  ratio %.4f", seed, conv,
                           adap, adap / conv));
  }
  o.passed = wins * 10 >= trials * 7;
  o.summary = fmt("adaptive >= conventional on %zu/%zu trials at depth %zu (need 14)", wins, trials, depth);
  return o;
}

Outcome h1_emphasis(const Options&) {
  Outcome o;
  const std::size_t n = 8;
  const double amp = 0.5;
  Tensor zero = Tensor::zeros({1, 1, n, n});
  Tensor dc = Tensor::full({1, 1, n, n}, amp);
  Tensor axis = Tensor::zeros({1, 1, n, n}), corner = Tensor::zeros({1, 1, n, n});
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) {
      axis.mutable_data()[x * n + y] = amp * std::cos(std::numbers::pi * x);
      corner.mutable_data()[x * n + y] = amp * std::cos(std::numbers::pi * (x + y));
    }
  const double base = h1_loss(dc, zero).item();
  const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
  double worst = 0.0;
  std::string parts;
  for (auto [field, xi2, label] : {std::tuple{axis, 0.25, "(1/2,0)"}, {corner, 0.5, "(1/2,1/2)"}}) {
    const double ratio = h1_loss(field, zero).item() / base;
    const double expect = 1.0 + four_pi2 * xi2;
    const double rel = std::abs(ratio - expect) / expect;
    worst = std::max(worst, rel);
    parts += fmt(" xi=%s ratio %.12f expected %.12f;", label, ratio, expect);
  }
  o.passed = worst <= 1e-9;
  o.summary = fmt("max rel err %.3g;%s", worst, parts.c_str());
  return o;
}

TrainObserver progress_printer(const Options& opt, const std::string& tag, std::size_t every) {
  if (!opt.progress) return {};
  auto start = std::chrono::steady_clock::now();
  return [&opt, tag, every, start](std::size_t step, const LossBreakdown& p) {
    if (step % every != 0) return;
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    *opt.progress << fmt("  [%s] step %zu total %.4g mse %.4g h1 %.4g moment %.3g (%.0fs)\n", tag.c_str(), step,
                         p.total, p.mse, p.h1, p.moment, t);
    opt.progress->flush();
  };
}

void report_leads(Outcome& o, const Comparison& c, bool with_nmse) {
  for (std::size_t l = 0; l < c.model.per_lead.size(); ++l) {
    const auto& m = c.model.per_lead[l];
    const auto& p = c.persistence.per_lead[l];
    std::string line = fmt("lead %2zu  mse %.6g (persistence %.6g)  ssim %.4f (%.4f)", l + 1, m.mse, p.mse, m.ssim,
                           p.ssim);
    if (with_nmse) line += fmt("  nmse %.6g (%.6g)", m.nmse, p.nmse);
    o.detail.push_back(line);
  }
}

Outcome end_to_end(const Options& opt) {
  Outcome o;
  RunConfig cfg;  // 64x64 blobs, 10 in / 10 out, 2000 sequences, p=4, c=32, 2 TB, 2 FB, 3000 steps
  cfg.output_dir = "";
  auto trained = train(cfg, nullptr, progress_printer(opt, "blobs", 250));
  auto split = evaluation_split(cfg);
  auto c = evaluate(trained.params, cfg, split);
  double zeros = 0.0;
  for (double v : split.targets.data()) zeros += v * v;
  zeros /= static_cast<double>(split.targets.numel());
  const double ratio = c.model.aggregate.mse / c.persistence.aggregate.mse;
  report_leads(o, c, false);
  o.detail.push_back(fmt("all-zeros forecast mse %.6g (%.3f x persistence)", zeros, zeros / c.persistence.aggregate.mse));
  o.passed = ratio <= 0.7;
  o.summary = fmt("model mse %.6g, persistence %.6g, ratio %.4f (need <= 0.7); training %.0fs",
                  c.model.aggregate.mse, c.persistence.aggregate.mse, ratio, trained.seconds);
  return o;
}

RunConfig advection_config() {
  RunConfig cfg;
  cfg.data.generator = Generator::advection_diffusion;
  cfg.data.height = cfg.data.width = 32;
  cfg.data.train_sequences = 500;
  cfg.optim.steps = 1500;
  cfg.output_dir = "";
  return cfg;
}

RunConfig navier_stokes_config() {
  RunConfig cfg;
  cfg.data.generator = Generator::navier_stokes;
  cfg.data.height = cfg.data.width = 32;
  cfg.data.train_sequences = 100;
  cfg.optim.steps = 1500;
  cfg.output_dir = "";
  return cfg;
}

Outcome physics_data(const Options& opt) {
  Outcome o;
  auto adv_cfg = advection_config();
  auto adv = train(adv_cfg, nullptr, progress_printer(opt, "advection", 250));
  auto adv_cmp = evaluate(adv.params, adv_cfg, evaluation_split(adv_cfg));
  const double m5 = adv_cmp.model.per_lead[4].mse, p5 = adv_cmp.persistence.per_lead[4].mse;
  o.detail.push_back("advection-diffusion 32x32:");
  report_leads(o, adv_cmp, false);

  auto ns_cfg = navier_stokes_config();
  auto ns = train(ns_cfg, nullptr, progress_printer(opt, "navier-stokes", 250));
  auto ns_cmp = evaluate(ns.params, ns_cfg, evaluation_split(ns_cfg));
  o.detail.push_back("navier-stokes 32x32:");
  report_leads(o, ns_cmp, true);
  const double mn = ns_cmp.model.aggregate.nmse, pn = ns_cmp.persistence.aggregate.nmse;

  const bool adv_ok = 2.0 * m5 <= p5, ns_ok = mn < pn;
  o.passed = adv_ok && ns_ok;
  o.summary = fmt("advection lead-5 mse %.4g vs persistence %.4g (%.2fx, need >= 2, %.0fs); navier-stokes nmse %.4g "
                  "vs %.4g (%.0fs)",
                  m5, p5, p5 / m5, adv.seconds, mn, pn, ns.seconds);
  return o;
}

RunConfig ablation_config() {
  RunConfig cfg;
  cfg.data.height = cfg.data.width = 32;
  cfg.data.train_sequences = 200;
  cfg.data.eval_sequences = 16;
  cfg.optim.steps = 150;
  cfg.output_dir = "";
  return cfg;
}

Outcome ablation(const Options& opt) {
  Outcome o;
  auto result = ablate(ablation_config(), [&](const AblationRow& row) {
    if (opt.progress) {
      *opt.progress << fmt("  [ablate] %s mse %.6g (%.0fs)\n", row.variant.c_str(), row.report.aggregate.mse,
                           row.seconds);
      opt.progress->flush();
    }
  });
  std::istringstream table(format_ablation(result));
  for (std::string line; std::getline(table, line);) o.detail.push_back(line);
  bool finite = true;
  for (const auto& row : result.rows) finite = finite && std::isfinite(row.report.aggregate.mse);
  o.passed = result.rows.size() == 12 && finite;
  o.summary = fmt("%zu/12 variants, ordering %s, best %s", result.rows.size(),
                  result.strict_ordering ? "strict" : "has ties",
                  result.rows.empty() ? "-" : result.rows[result.ranking.front()].variant.c_str());
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double report_distance(const EvalReport& a, const EvalReport& b) {
  auto gap = [](const FrameMetrics& x, const FrameMetrics& y) {
    return std::max({std::abs(x.mse - y.mse), std::abs(x.mae - y.mae), std::abs(x.ssim - y.ssim),
                     std::abs(x.nmse - y.nmse)});
  };
  double d = gap(a.aggregate, b.aggregate);
  for (std::size_t l = 0; l < a.per_lead.size(); ++l) d = std::max(d, gap(a.per_lead[l], b.per_lead[l]));
  return d;
}

Outcome determinism(const Options& opt) {
  Outcome o;
  RunConfig cfg;
  cfg.data.height = cfg.data.width = 16;
  cfg.data.t_in = 4;
  cfg.data.t_out = 3;
  cfg.data.train_sequences = 6;
  cfg.data.eval_sequences = 3;
  cfg.model.patch_size = 2;
  cfg.model.embed_dim = 8;
  cfg.optim.steps = 8;
  cfg.seed = 7;
  const auto root = opt.scratch.empty() ? std::filesystem::temp_directory_path() / "stp_checks" : opt.scratch;
  std::filesystem::remove_all(root / "determinism");
  std::string logs[2], ckpts[2];
  for (int run = 0; run < 2; ++run) {
    cfg.output_dir = (root / "determinism" / ("run" + std::to_string(run))).string();
    train_to_directory(cfg);
    logs[run] = slurp(std::filesystem::path(cfg.output_dir) / "metrics.log");
    ckpts[run] = slurp(std::filesystem::path(cfg.output_dir) / "model.ckpt");
  }
  const bool logs_same = !logs[0].empty() && logs[0] == logs[1];
  const bool ckpt_same = !ckpts[0].empty() && ckpts[0] == ckpts[1];

  auto split = evaluation_split(cfg);
  auto params = init_model(cfg.model_config(), cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  for (auto& [name, t] : params.named_parameters()) randomize(t, rng, 0.1);
  const auto path = root / "determinism" / "roundtrip.ckpt";
  save_checkpoint(path, params);
  auto before = evaluate(params, cfg, split).model;
  auto after = evaluate(load_checkpoint(path, cfg.model_config()), cfg, split).model;
  const double gap = report_distance(before, after);
  std::filesystem::remove_all(root / "determinism");

  o.passed = logs_same && ckpt_same && gap <= 1e-15;
  o.summary = fmt("metrics logs %s (%zu bytes), checkpoints %s, round-trip metric gap %.3g",
                  logs_same ? "identical" : "DIFFER", logs[0].size(), ckpt_same ? "identical" : "DIFFER", gap);
  return o;
}

}  // namespace

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list = {
      {1, "fft oracle", false, 10.0, fft_oracle},
      {2, "gradient suite", false, 300.0, gradient_suite},
      {3, "moments and stencils", false, 60.0, moment_criterion},
      {4, "integrator order", false, 1.0, integrator_order},
      {5, "reduction identity", false, 0.0, reduction_identity},
      {6, "gradient propagation", false, 0.0, gradient_propagation},
      {7, "h1 emphasis", false, 0.0, h1_emphasis},
      {8, "end-to-end learning", true, 1800.0, end_to_end},
      {9, "physics-data learning", true, 3600.0, physics_data},
      {10, "ablation machinery", true, 0.0, ablation},
      {11, "determinism and persistence", false, 0.0, determinism},
  };
  return list;
}

Outcome run(const Criterion& criterion, const Options& options) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = criterion.run(options);
  } catch (const std::exception& e) {
    o.passed = false;
    o.summary = std::string("error: ") + e.what();
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (criterion.budget_seconds > 0.0 && o.seconds > criterion.budget_seconds) {
    o.passed = false;
    o.summary += fmt("; over the %.0fs budget", criterion.budget_seconds);
  }
  return o;
}

std::vector<int> parse_selection(const std::string& text) {
  std::vector<int> ids;
  std::istringstream in(text);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      std::size_t used = 0;
      const auto dash = part.find('-');
      int lo = std::stoi(part.substr(0, dash), &used);
      int hi = dash == std::string::npos ? lo : std::stoi(part.substr(dash + 1));
      if (lo < 1 || hi > static_cast<int>(criteria().size()) || lo > hi) throw std::out_of_range(part);
      for (int id = lo; id <= hi; ++id) ids.push_back(id);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("bad criterion selection '" + part + "'");
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::string format_outcome(const Criterion& criterion, const Outcome& outcome) {
  std::string out = fmt("criterion %d: %s %s (%s, %.1fs)\n", criterion.id, outcome.passed ? "PASS" : "FAIL",
                        criterion.name.c_str(), outcome.summary.c_str(), outcome.seconds);
  for (const auto& line : outcome.detail) out += "    " + line + "\n";
  return out;
}

}  // namespace stp::checks
