#include "stp/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "stp/ops.hpp"
#include "stp/tensor_io.hpp"

namespace stp {

std::string to_string(Upsampler u) {
  return u == Upsampler::transposed_conv ? "transposed_conv" : "bilinear";
}

Upsampler parse_upsampler(const std::string& name) {
  if (name == "transposed_conv") return Upsampler::transposed_conv;
  if (name == "bilinear") return Upsampler::bilinear;
  throw std::invalid_argument("unknown upsampler '" + name + "' (expected transposed_conv or bilinear)");
}

std::string to_string(FourierInit f) { return f == FourierInit::zero ? "zero" : "identity"; }

FourierInit parse_fourier_init(const std::string& name) {
  if (name == "zero") return FourierInit::zero;
  if (name == "identity") return FourierInit::identity;
  throw std::invalid_argument("unknown fourier init '" + name + "' (expected zero or identity)");
}

std::string to_string(RkMode m) { return m == RkMode::adaptive ? "adaptive" : "conventional"; }

RkMode parse_rk_mode(const std::string& name) {
  if (name == "adaptive") return RkMode::adaptive;
  if (name == "conventional") return RkMode::conventional;
  throw std::invalid_argument("unknown rk mode '" + name + "' (expected adaptive or conventional)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (patch_size == 0 || height % patch_size || width % patch_size) {
    fail("frame " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by patch size " +
         std::to_string(patch_size));
  }
  if (channels == 0 || embed_dim == 0 || mlp_ratio == 0) fail("channels, embed_dim and mlp_ratio must be positive");
  if (window_size == 0 || grid_height() % window_size || grid_width() % window_size) {
    fail("token grid " + std::to_string(grid_height()) + "x" + std::to_string(grid_width()) +
         " not divisible by window size " + std::to_string(window_size));
  }
  if (derivative_order % 2 == 0) fail("derivative order must be odd");
  if (grid_height() < derivative_order || grid_width() < derivative_order) {
    fail("token grid smaller than the derivative stencil");
  }
}

std::vector<std::pair<std::string, Tensor>> AttentionParams::parameters(const std::string& prefix) const {
  return {{prefix + "norm1.gamma", norm1_gamma}, {prefix + "norm1.beta", norm1_beta},
          {prefix + "wq", wq},                   {prefix + "bq", bq},
          {prefix + "wk", wk},                   {prefix + "bk", bk},
          {prefix + "wv", wv},                   {prefix + "bv", bv},
          {prefix + "wo", wo},                   {prefix + "bo", bo},
          {prefix + "norm2.gamma", norm2_gamma}, {prefix + "norm2.beta", norm2_beta},
          {prefix + "mlp.w1", mlp_w1},           {prefix + "mlp.b1", mlp_b1},
          {prefix + "mlp.w2", mlp_w2},           {prefix + "mlp.b2", mlp_b2}};
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out{{"patch.weight", patch_weight}, {"patch.bias", patch_bias}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (auto& p : blocks[i].parameters("block" + std::to_string(i) + ".")) out.push_back(std::move(p));
  }
  out.emplace_back("lstm.weight", lstm.weight);
  out.emplace_back("lstm.bias", lstm.bias);
  for (std::size_t i = 0; i < fourier.size(); ++i) {
    out.emplace_back("fourier" + std::to_string(i) + ".re", fourier[i].re);
    out.emplace_back("fourier" + std::to_string(i) + ".im", fourier[i].im);
  }
  for (auto& p : bank.parameters("bank.")) out.push_back(std::move(p));
  for (auto& p : gate.parameters("gate.")) out.push_back(std::move(p));
  out.emplace_back("decoder.weight", decoder_weight);
  out.emplace_back("decoder.bias", decoder_bias);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const std::size_t C = cfg.channels, c = cfg.embed_dim, p = cfg.patch_size, r = cfg.mlp_ratio * c;
  const std::size_t k2 = cfg.derivative_order * cfg.derivative_order;
  const std::size_t gate_out = cfg.scalar_gate ? 1 : c;
  const std::size_t block = 4 * c + 4 * (c * c + c) + (c * r + r) + (r * c + c);
  const std::size_t decoder = cfg.upsampler == Upsampler::transposed_conv ? c * C * p * p + C : C * c + C;
  return (c * C * p * p + c) + cfg.transformer_blocks * block + (8 * c * c + 4 * c) +
         cfg.fourier_blocks * 2 * c * cfg.grid_height() * cfg.grid_width() + (k2 * k2 + c * c * k2) +
         (gate_out * 2 * c + gate_out) + decoder;
}

namespace {

Tensor gaussian(std::mt19937_64& rng, const Shape& shape, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from(shape, std::move(v), true);
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t C = cfg.channels, c = cfg.embed_dim, p = cfg.patch_size, r = cfg.mlp_ratio * c;
  std::mt19937_64 rng(seed);
  ModelParams m;
  m.patch_weight = gaussian(rng, {c, C, p, p}, inv_sqrt(C * p * p));
  m.patch_bias = Tensor::zeros({c}, true);
  for (std::size_t i = 0; i < cfg.transformer_blocks; ++i) {
    AttentionParams b;
    b.norm1_gamma = Tensor::ones({c}, true);
    b.norm1_beta = Tensor::zeros({c}, true);
    b.wq = gaussian(rng, {c, c}, inv_sqrt(c));
    b.wk = gaussian(rng, {c, c}, inv_sqrt(c));
    b.wv = gaussian(rng, {c, c}, inv_sqrt(c));
    b.wo = gaussian(rng, {c, c}, inv_sqrt(c));
    b.bq = Tensor::zeros({c}, true);
    b.bk = Tensor::zeros({c}, true);
    b.bv = Tensor::zeros({c}, true);
    b.bo = Tensor::zeros({c}, true);
    b.norm2_gamma = Tensor::ones({c}, true);
    b.norm2_beta = Tensor::zeros({c}, true);
    b.mlp_w1 = gaussian(rng, {c, r}, inv_sqrt(c));
    b.mlp_b1 = Tensor::zeros({r}, true);
    b.mlp_w2 = gaussian(rng, {r, c}, inv_sqrt(r));
    b.mlp_b2 = Tensor::zeros({c}, true);
    b.shifted = i % 2 == 1;
    m.blocks.push_back(std::move(b));
  }
  m.lstm.weight = gaussian(rng, {4 * c, 2 * c, 1, 1}, inv_sqrt(2 * c));
  m.lstm.bias = Tensor::zeros({4 * c}, true);
  for (std::size_t i = 0; i < cfg.fourier_blocks; ++i) {
    auto kernel = SpectralKernel::identity(c, cfg.grid_height(), cfg.grid_width());
    if (cfg.fourier_init == FourierInit::zero) std::fill(kernel.re.mutable_data().begin(), kernel.re.mutable_data().end(), 0.0);
    m.fourier.push_back(std::move(kernel));
  }
  m.bank = DerivativeBank::create(c, cfg.derivative_order, rng);
  m.gate = GateParams::zeros(c, cfg.scalar_gate);
  if (cfg.upsampler == Upsampler::transposed_conv) {
    m.decoder_weight = gaussian(rng, {c, C, p, p}, inv_sqrt(c));
  } else {
    m.decoder_weight = gaussian(rng, {C, c, 1, 1}, inv_sqrt(c));
  }
  m.decoder_bias = Tensor::zeros({C}, true);
  return m;
}

ModelState ModelState::zeros(const ModelConfig& cfg, std::size_t batch) {
  const Shape s{batch, cfg.embed_dim, cfg.grid_height(), cfg.grid_width()};
  return {Tensor::zeros(s), Tensor::zeros(s)};
}

Tensor patch_embed(const Tensor& frame, const ModelParams& params, const ModelConfig& cfg) {
  if (frame.rank() != 4 || frame.dim(1) != cfg.channels || frame.dim(2) != cfg.height ||
      frame.dim(3) != cfg.width) {
    throw ShapeError("patch_embed", frame.shape(), {0, cfg.channels, cfg.height, cfg.width});
  }
  return conv2d(frame, params.patch_weight, params.patch_bias, Padding::valid, cfg.patch_size);
}

namespace {

struct WindowIndex {
  std::shared_ptr<std::vector<std::size_t>> to_tokens;  // [b·h·w, c] rows grouped by window
  std::shared_ptr<std::vector<std::size_t>> to_grid;    // inverse permutation
};

// Row t of the token matrix is pixel ((wy·ws + r + s) mod h, (wx·ws + q + s) mod w)
// of its batch entry, where s is the cyclic shift.
WindowIndex window_index(std::size_t b, std::size_t c, std::size_t h, std::size_t w, std::size_t ws,
                         std::size_t shift) {
  WindowIndex idx{std::make_shared<std::vector<std::size_t>>(b * c * h * w),
                  std::make_shared<std::vector<std::size_t>>(b * c * h * w)};
  std::size_t row = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t wy = 0; wy < h / ws; ++wy)
      for (std::size_t wx = 0; wx < w / ws; ++wx)
        for (std::size_t r = 0; r < ws; ++r)
          for (std::size_t q = 0; q < ws; ++q, ++row) {
            const std::size_t y = (wy * ws + r + shift) % h, x = (wx * ws + q + shift) % w;
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t grid = ((bi * c + ch) * h + y) * w + x;
              (*idx.to_tokens)[row * c + ch] = grid;
              (*idx.to_grid)[grid] = row * c + ch;
            }
          }
  return idx;
}

}  // namespace

AttentionOutput window_attention_block(const Tensor& u, const AttentionParams& params, std::size_t window_size) {
  if (u.rank() != 4) throw ShapeError("window_attention_block", u.shape(), {0, 0, 0, 0});
  const std::size_t b = u.dim(0), c = u.dim(1), h = u.dim(2), w = u.dim(3), ws = window_size;
  if (ws == 0 || h % ws || w % ws) {
    throw std::invalid_argument("window_attention_block: grid " + std::to_string(h) + "x" + std::to_string(w) +
                                " not divisible by window " + std::to_string(ws));
  }
  const std::size_t tokens = ws * ws, windows = b * (h / ws) * (w / ws), rows = b * h * w;
  const auto idx = window_index(b, c, h, w, ws, params.shifted ? ws / 2 : 0);

  Tensor x = gather(u, {rows, c}, idx.to_tokens);
  Tensor n1 = layer_norm(x, params.norm1_gamma, params.norm1_beta);
  Tensor q = reshape(linear(n1, params.wq, params.bq), {windows, tokens, c});
  Tensor k = reshape(linear(n1, params.wk, params.bk), {windows, tokens, c});
  Tensor v = reshape(linear(n1, params.wv, params.bv), {windows, tokens, c});
  Tensor attn = softmax(bmm(q, k, true) * (1.0 / std::sqrt(static_cast<double>(c))));
  Tensor ctx = reshape(bmm(attn, v), {rows, c});
  Tensor x1 = x + linear(ctx, params.wo, params.bo);
  Tensor n2 = layer_norm(x1, params.norm2_gamma, params.norm2_beta);
  Tensor x2 = x1 + linear(relu(linear(n2, params.mlp_w1, params.mlp_b1)), params.mlp_w2, params.mlp_b2);
  return {gather(x2, u.shape(), idx.to_grid), attn};
}

LstmOutput lstm_cell(const Tensor& u, const ModelState& state, const LstmParams& params) {
  if (u.shape() != state.hidden.shape()) throw ShapeError("lstm_cell hidden", u.shape(), state.hidden.shape());
  if (u.shape() != state.cell.shape()) throw ShapeError("lstm_cell cell", u.shape(), state.cell.shape());
  const std::size_t c = u.dim(1);
  Tensor z = conv2d(concat({u, state.hidden}, 1), params.weight, params.bias, Padding::valid);
  Tensor i = sigmoid(slice(z, 1, 0, c));
  Tensor f = sigmoid(slice(z, 1, c, c));
  Tensor o = sigmoid(slice(z, 1, 2 * c, c));
  Tensor g = tanh(slice(z, 1, 3 * c, c));
  Tensor cell = f * state.cell + i * g;
  return {o * tanh(cell), cell};
}

Tensor correction_gate(const Tensor& u_tl, const Tensor& hidden) {
  return hidden + sigmoid(u_tl) * (u_tl - hidden);
}

CorrectionOutput correction_module(const Tensor& u, const ModelState& state, const ModelParams& params,
                                   const ModelConfig& cfg) {
  Tensor v = u;
  for (const auto& block : params.blocks) v = window_attention_block(v, block, cfg.window_size).output;
  auto [u_tl, cell] = lstm_cell(v, state, params.lstm);
  return {correction_gate(u_tl, state.hidden), u_tl, cell};
}

Tensor decode(const Tensor& hidden, const ModelParams& params, const ModelConfig& cfg) {
  switch (cfg.upsampler) {
    case Upsampler::transposed_conv:
      return conv_transpose2d(hidden, params.decoder_weight, params.decoder_bias, cfg.patch_size);
    case Upsampler::bilinear:
      return conv2d(upsample_bilinear(hidden, cfg.patch_size), params.decoder_weight, params.decoder_bias,
                    Padding::valid);
  }
  throw std::invalid_argument("decode: unknown upsampler");
}

StepOutput model_step(const Tensor& frame, const ModelState& state, const ModelParams& params,
                      const ModelConfig& cfg) {
  Tensor u = patch_embed(frame, params, cfg);
  auto cm = correction_module(u, state, params, cfg);
  Tensor u_f = stack_fourier_blocks(cm.u_cm, params.fourier, params.fourier.size());
  Tensor h_hat = u_f + cm.u_cm;

  StepOutput out;
  out.h_hat = h_hat;
  Tensor h_t;
  if (cfg.rk_mode == RkMode::adaptive) {
    auto step = adaptive_rk2_step(h_hat, params.bank, params.gate);
    h_t = step.state;
    out.gate = step.gate;
    auto g = step.gate.data();
    double total = 0.0, lo = g[0], hi = g[0];
    for (double v : g) {
      total += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    out.diagnostics.gate_mean = total / static_cast<double>(g.size());
    out.diagnostics.gate_min = lo;
    out.diagnostics.gate_max = hi;
  } else {
    h_t = rk2_step(h_hat, params.bank);
  }
  out.diagnostics.moment_loss = moment_loss(params.bank).item();
  out.prediction = decode(h_t, params, cfg);
  out.state = {h_t, cm.cell};
  return out;
}

Tensor rollout(const Tensor& inputs, std::size_t horizon, const ModelParams& params, const ModelConfig& cfg) {
  if (horizon == 0) throw std::invalid_argument("rollout: horizon must be at least 1");
  if (inputs.rank() != 5 || inputs.dim(1) == 0) {
    throw ShapeError("rollout inputs", inputs.shape(), {0, 0, cfg.channels, cfg.height, cfg.width});
  }
  const std::size_t b = inputs.dim(0), t_in = inputs.dim(1);
  const Shape frame_shape{b, cfg.channels, cfg.height, cfg.width};
  const Shape lead_shape{b, 1, cfg.channels, cfg.height, cfg.width};
  ModelState state = ModelState::zeros(cfg, b);
  Tensor prediction;
  for (std::size_t t = 0; t < t_in; ++t) {
    auto out = model_step(reshape(slice(inputs, 1, t, 1), frame_shape), state, params, cfg);
    state = out.state;
    prediction = out.prediction;
  }
  std::vector<Tensor> leads{reshape(prediction, lead_shape)};
  for (std::size_t lead = 1; lead < horizon; ++lead) {
    auto out = model_step(prediction, state, params, cfg);
    state = out.state;
    prediction = out.prediction;
    leads.push_back(reshape(prediction, lead_shape));
  }
  return leads.size() == 1 ? leads[0] : concat(leads, 1);
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".manifest";
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream data(path, std::ios::binary | std::ios::trunc);
  std::ofstream manifest(manifest_path(path), std::ios::trunc);
  if (!data || !manifest) throw std::runtime_error("cannot write checkpoint " + path.string());
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params.named_parameters()) {
    manifest << name << ' ' << shape_str(t.shape()) << ' ' << offset << '\n';
    write_tensor(data, t);
    offset += tensor_record_size(t.shape());
  }
  if (!data || !manifest) throw std::runtime_error("checkpoint write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  ModelParams params = init_model(cfg, 0);
  std::ifstream data(path, std::ios::binary);
  std::ifstream manifest(manifest_path(path));
  if (!data) throw std::runtime_error("cannot open checkpoint " + path.string());
  if (!manifest) throw std::runtime_error("cannot open checkpoint manifest " + manifest_path(path).string());

  auto expected = params.named_parameters();
  std::string line;
  std::size_t i = 0;
  std::uint64_t offset = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, shape;
    std::uint64_t listed = 0;
    if (!(fields >> name >> shape >> listed)) throw std::runtime_error("malformed manifest line: " + line);
    if (i >= expected.size()) throw std::runtime_error("checkpoint has unexpected tensor '" + name + "'");
    auto& [want_name, target] = expected[i];
    if (name != want_name) {
      throw std::runtime_error("checkpoint tensor '" + name + "' where '" + want_name + "' was expected");
    }
    if (listed != offset) throw FormatError("manifest offset mismatch for '" + name + "'", offset);
    Tensor loaded = read_tensor(data, offset);
    if (loaded.shape() != target.shape()) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(loaded.shape()) +
                       " but the config needs " + shape_str(target.shape()));
    }
    std::copy(loaded.data().begin(), loaded.data().end(), target.mutable_data().begin());
    offset += tensor_record_size(loaded.shape());
    ++i;
  }
  if (i != expected.size()) {
    throw std::runtime_error("checkpoint is missing tensor '" + expected[i].first + "'");
  }
  return params;
}

}  // namespace stp
