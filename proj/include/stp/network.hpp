#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stp/integrator.hpp"
#include "stp/physics.hpp"
#include "stp/spectral.hpp"
#include "stp/tensor.hpp"

namespace stp {

enum class Upsampler { transposed_conv, bilinear };

/// Initial Fourier kernel. With residual blocks, `zero` makes every block an
/// exact identity; `identity` (R = 1) doubles the signal per block, which
/// compounds through the recurrent state and diverges during rollout.
enum class FourierInit { zero, identity };

std::string to_string(Upsampler u);
Upsampler parse_upsampler(const std::string& name);
std::string to_string(FourierInit f);
FourierInit parse_fourier_init(const std::string& name);
std::string to_string(RkMode m);
RkMode parse_rk_mode(const std::string& name);

struct ModelConfig {
  std::size_t channels = 1;  // C
  std::size_t height = 64;   // H
  std::size_t width = 64;    // W
  std::size_t patch_size = 4;
  std::size_t embed_dim = 32;  // c
  std::size_t transformer_blocks = 2;
  std::size_t fourier_blocks = 2;
  std::size_t window_size = 4;
  std::size_t mlp_ratio = 2;
  std::size_t derivative_order = 3;
  RkMode rk_mode = RkMode::adaptive;
  bool scalar_gate = false;
  Upsampler upsampler = Upsampler::transposed_conv;
  FourierInit fourier_init = FourierInit::zero;

  std::size_t grid_height() const { return height / patch_size; }
  std::size_t grid_width() const { return width / patch_size; }

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

struct AttentionParams {
  Tensor norm1_gamma, norm1_beta;  // [c]
  Tensor wq, bq, wk, bk, wv, bv;   // [c,c], [c]
  Tensor wo, bo;                   // [c,c], [c]
  Tensor norm2_gamma, norm2_beta;  // [c]
  Tensor mlp_w1, mlp_b1;           // [c,rc], [rc]
  Tensor mlp_w2, mlp_b2;           // [rc,c], [c]
  bool shifted = false;

  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

struct LstmParams {
  Tensor weight;  // [4c, 2c, 1, 1]; output blocks i, f, o, g
  Tensor bias;    // [4c]
};

struct ModelParams {
  Tensor patch_weight, patch_bias;  // [c,C,p,p], [c]
  std::vector<AttentionParams> blocks;
  LstmParams lstm;
  std::vector<SpectralKernel> fourier;
  DerivativeBank bank;
  GateParams gate;
  Tensor decoder_weight, decoder_bias;  // [c,C,p,p] or [C,c,1,1]; [C]

  /// Fixed order; names are stable across runs and used by checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
};

/// Draws every trainable tensor from `seed`.
ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Closed-form trainable parameter count for `cfg`.
std::size_t expected_parameter_count(const ModelConfig& cfg);

struct ModelState {
  Tensor hidden;  // H_{t-1}, [b,c,h',w']
  Tensor cell;    // LSTM cell, [b,c,h',w']

  static ModelState zeros(const ModelConfig& cfg, std::size_t batch);
};

Tensor patch_embed(const Tensor& frame, const ModelParams& params, const ModelConfig& cfg);

struct AttentionOutput {
  Tensor output;   // [b,c,h',w']
  Tensor weights;  // [b·windows, T, T], T = window_size²
};

/// Pre-norm single-head window attention plus a ReLU MLP, both residual.
AttentionOutput window_attention_block(const Tensor& u, const AttentionParams& params,
                                       std::size_t window_size);

struct LstmOutput {
  Tensor hidden;  // u_TL
  Tensor cell;
};

LstmOutput lstm_cell(const Tensor& u, const ModelState& state, const LstmParams& params);

struct CorrectionOutput {
  Tensor u_cm;
  Tensor u_tl;
  Tensor cell;
};

/// H + σ(u_TL)⊙(u_TL − H).
Tensor correction_gate(const Tensor& u_tl, const Tensor& hidden);

/// Transformer stack, then the LSTM, then correction_gate.
CorrectionOutput correction_module(const Tensor& u, const ModelState& state, const ModelParams& params,
                                   const ModelConfig& cfg);

Tensor decode(const Tensor& hidden, const ModelParams& params, const ModelConfig& cfg);

struct StepDiagnostics {
  double gate_mean = 0.5;
  double gate_min = 0.5;
  double gate_max = 0.5;
  double moment_loss = 0.0;
};

struct StepOutput {
  Tensor prediction;  // [b,C,H,W]
  ModelState state;
  Tensor h_hat;  // u_F + u_CM, the integrator input
  Tensor gate;   // undefined in conventional mode
  StepDiagnostics diagnostics;
};

StepOutput model_step(const Tensor& frame, const ModelState& state, const ModelParams& params,
                      const ModelConfig& cfg);

/// inputs [b,T_in,C,H,W] -> predictions [b,horizon,C,H,W]. Every input frame
/// advances the state; the prediction after the last input is lead 1 and
/// later leads feed predictions back.
Tensor rollout(const Tensor& inputs, std::size_t horizon, const ModelParams& params, const ModelConfig& cfg);

/// Concatenated tensor records in `path` plus `path.manifest` listing
/// `name shape offset` per tensor.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);

/// Loads into freshly initialized parameters for `cfg`. Throws naming the
/// first tensor whose name or shape disagrees.
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace stp
