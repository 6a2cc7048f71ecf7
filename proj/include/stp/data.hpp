#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stp/tensor.hpp"

namespace stp {

using Metadata = std::map<std::string, std::string>;

struct SequenceBatch {
  Tensor inputs;   // [b, T_in, C, H, W]
  Tensor targets;  // [b, T_out, C, H, W]
  Metadata metadata;
};

/// splitmix64 finalizer; per-sequence seeds are splitmix(seed ^ splitmix(index)).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t sequence_seed(std::uint64_t seed, std::uint64_t index);

// ---- bouncing blobs ----

/// Isotropic Gaussian blob; x is the column and y the row, in pixels.
struct Blob {
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  double sigma = 2.0;
  double amplitude = 1.0;
};

/// Moves one frame ahead with specular reflection off the walls at 0 and
/// extent − 1.
void advance_blob(Blob& blob, std::size_t height, std::size_t width);

/// Clamped sum of blob intensities, row-major [H, W].
std::vector<double> render_blobs(const std::vector<Blob>& blobs, std::size_t height, std::size_t width);

struct BlobOptions {
  std::size_t height = 64, width = 64;
  std::size_t n_blobs = 2;
  double sigma_min = 1.5, sigma_max = 3.0;
  double speed_min = 1.0, speed_max = 2.5;  // pixels per frame
};

/// Frames [T, 1, H, W] for one sequence.
Tensor blob_sequence(const BlobOptions& options, std::size_t frames, std::uint64_t seed);

// ---- advection-diffusion ----

struct AdvectionOptions {
  std::size_t height = 32, width = 32;
  double vx = 0.6, vy = 0.3;  // pixels per unit time, along columns and rows
  double nu = 0.3;            // pixels² per unit time
  std::size_t substeps = 4;   // per frame; frame spacing is one time unit
  double cutoff = 3.0;        // low-pass width of the initial field in cycles per domain

  /// Throws std::invalid_argument when the explicit scheme is unstable.
  void check_stability() const;
};

/// One SSP-RK3 substep of ∂u/∂t = −v·∇u + νΔu with periodic central
/// differences. `u` is [H, W] row-major.
void advection_diffusion_step(std::vector<double>& u, const AdvectionOptions& options, double dt);

/// Frames [T, 1, H, W] starting from `initial` (or a random smooth field when empty).
Tensor advection_diffusion_sequence(const AdvectionOptions& options, std::size_t frames, std::uint64_t seed,
                                    std::vector<double> initial = {});

// ---- Navier-Stokes vorticity on the unit torus ----

struct NavierStokesOptions {
  std::size_t n = 32;
  double nu = 1e-3;
  double forcing = 0.1;  // amplitude of sin(2π(x+y)) + cos(2π(x+y))
  double dt = 5e-2;
  double frame_interval = 1.0;
  double blowup = 1e6;
};

/// Pseudo-spectral vorticity solver with 2/3 dealiasing and integrating-factor
/// RK4 stepping.
/// Grid point (i, j) sits at x = i/n, y = j/n.
class NavierStokesSolver {
 public:
  NavierStokesSolver(const NavierStokesOptions& options, const std::vector<double>& vorticity);

  /// Advances by `steps` RK4 steps; throws NumericError naming the step when
  /// |ω| exceeds the blow-up threshold.
  void advance(std::size_t steps);
  std::vector<double> vorticity() const;
  double time() const { return time_; }

 private:
  using Spectrum = std::vector<std::complex<double>>;
  // Dealiased −u·∇ω plus forcing; viscosity is handled by the integrating factor.
  Spectrum rhs(const Spectrum& w_hat) const;

  NavierStokesOptions options_;
  Spectrum w_hat_;
  Spectrum forcing_hat_;
  std::vector<double> kx_, ky_, k2_;  // angular wavenumbers 2πk
  std::vector<bool> keep_;           // 2/3-rule mask
  double time_ = 0.0;
  std::size_t steps_ = 0;
};

/// Gaussian random field with spectrum ∝ (4π²|k|² + 49)^(−5/2), zero mean,
/// unit standard deviation.
std::vector<double> random_vorticity(std::size_t n, std::uint64_t seed);

Tensor navier_stokes_sequence(const NavierStokesOptions& options, std::size_t frames, std::uint64_t seed);

// ---- batches ----

enum class Generator { blobs, advection_diffusion, navier_stokes };
std::string to_string(Generator g);
Generator parse_generator(const std::string& name);

struct GeneratorSpec {
  Generator kind = Generator::blobs;
  std::size_t t_in = 10, t_out = 10;
  BlobOptions blobs;
  AdvectionOptions advection;
  NavierStokesOptions navier_stokes;

  std::size_t height() const;
  std::size_t width() const;
  Metadata metadata() const;
};

/// Frames [T_in + T_out, 1, H, W] of sequence `index` under `seed`.
Tensor generate_sequence(const GeneratorSpec& spec, std::uint64_t seed, std::size_t index);

/// Sequences first_index .. first_index + count − 1, generated in parallel.
SequenceBatch generate_batch(const GeneratorSpec& spec, std::uint64_t seed, std::size_t first_index,
                             std::size_t count);

SequenceBatch gen_bouncing_blobs(std::size_t n_seq, std::size_t t_in, std::size_t t_out, std::size_t height,
                                 std::size_t width, std::size_t n_blobs, std::uint64_t seed);
SequenceBatch gen_advection_diffusion(std::size_t n_seq, std::size_t t_in, std::size_t t_out,
                                      const AdvectionOptions& options, std::uint64_t seed);
SequenceBatch gen_navier_stokes(std::size_t n_seq, std::size_t t_in, std::size_t t_out,
                                const NavierStokesOptions& options, std::uint64_t seed);

/// Repeats the last input frame `t_out` times: [b, t_out, C, H, W].
Tensor persistence_baseline(const Tensor& inputs, std::size_t t_out);

/// Writes `{split}_inputs.stpt`, `{split}_targets.stpt` and merges the
/// batch metadata into `metadata.txt` (key=value lines).
void write_dataset(const std::filesystem::path& dir, const std::string& split, const SequenceBatch& batch);
SequenceBatch read_dataset(const std::filesystem::path& dir, const std::string& split);

Metadata read_metadata(const std::filesystem::path& file);
void write_metadata(const std::filesystem::path& file, const Metadata& metadata);

}  // namespace stp
