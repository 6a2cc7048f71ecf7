#include "stp/data.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <random>

#include "stp/spectral.hpp"
#include "stp/tensor_io.hpp"

namespace stp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sequence_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

// ---- bouncing blobs ----

namespace {

void reflect(double& pos, double& vel, double extent) {
  const double hi = extent - 1.0;
  // A fast blob may cross a wall and bounce back in one frame; loop until inside.
  while (pos < 0.0 || pos > hi) {
    if (pos < 0.0) pos = -pos;
    if (pos > hi) pos = 2.0 * hi - pos;
    vel = -vel;
  }
}

}  // namespace

void advance_blob(Blob& blob, std::size_t height, std::size_t width) {
  blob.x += blob.vx;
  blob.y += blob.vy;
  reflect(blob.x, blob.vx, static_cast<double>(width));
  reflect(blob.y, blob.vy, static_cast<double>(height));
}

std::vector<double> render_blobs(const std::vector<Blob>& blobs, std::size_t height, std::size_t width) {
  std::vector<double> frame(height * width, 0.0);
  for (const auto& b : blobs) {
    const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
    for (std::size_t r = 0; r < height; ++r) {
      const double dy = static_cast<double>(r) - b.y;
      for (std::size_t c = 0; c < width; ++c) {
        const double dx = static_cast<double>(c) - b.x;
        frame[r * width + c] += b.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  for (auto& v : frame) v = std::clamp(v, 0.0, 1.0);
  return frame;
}

Tensor blob_sequence(const BlobOptions& o, std::size_t frames, std::uint64_t seed) {
  if (o.height < 16 || o.width < 16) throw std::invalid_argument("bouncing blobs need frames of at least 16x16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Blob> blobs(o.n_blobs);
  for (auto& b : blobs) {
    b.sigma = o.sigma_min + (o.sigma_max - o.sigma_min) * unit(rng);
    b.x = b.sigma + (static_cast<double>(o.width) - 1.0 - 2.0 * b.sigma) * unit(rng);
    b.y = b.sigma + (static_cast<double>(o.height) - 1.0 - 2.0 * b.sigma) * unit(rng);
    const double speed = o.speed_min + (o.speed_max - o.speed_min) * unit(rng);
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    b.vx = speed * std::cos(angle);
    b.vy = speed * std::sin(angle);
  }
  const std::size_t plane = o.height * o.width;
  std::vector<double> out(frames * plane);
  for (std::size_t t = 0; t < frames; ++t) {
    auto frame = render_blobs(blobs, o.height, o.width);
    std::copy(frame.begin(), frame.end(), out.begin() + static_cast<std::ptrdiff_t>(t * plane));
    for (auto& b : blobs) advance_blob(b, o.height, o.width);
  }
  return Tensor::from({frames, 1, o.height, o.width}, std::move(out));
}

// ---- advection-diffusion ----

void AdvectionOptions::check_stability() const {
  if (substeps == 0) throw std::invalid_argument("advection-diffusion: substeps must be positive");
  const double dt = 1.0 / static_cast<double>(substeps);
  const double courant = (std::abs(vx) + std::abs(vy)) * dt;
  const double diffusion = nu * dt * 2.0;
  if (nu < 0.0) throw std::invalid_argument("advection-diffusion: nu must be non-negative");
  if (courant > 1.0) {
    throw std::invalid_argument("advection-diffusion: CFL number " + std::to_string(courant) +
                                " exceeds 1; raise substeps");
  }
  if (diffusion > 0.25) {
    throw std::invalid_argument("advection-diffusion: diffusion number " + std::to_string(diffusion) +
                                " exceeds 0.25; raise substeps");
  }
}

namespace {

void advection_rhs(const std::vector<double>& u, const AdvectionOptions& o, std::vector<double>& out) {
  const std::size_t h = o.height, w = o.width;
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t up = (i + h - 1) % h, down = (i + 1) % h;
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t left = (j + w - 1) % w, right = (j + 1) % w;
      const double c = u[i * w + j];
      const double dx = 0.5 * (u[i * w + right] - u[i * w + left]);
      const double dy = 0.5 * (u[down * w + j] - u[up * w + j]);
      const double lap = u[up * w + j] + u[down * w + j] + u[i * w + left] + u[i * w + right] - 4.0 * c;
      out[i * w + j] = -o.vx * dx - o.vy * dy + o.nu * lap;
    }
  }
}

std::vector<double> smooth_field(std::size_t h, std::size_t w, double cutoff, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::complex<double>> z(h * w);
  for (auto& v : z) v = normal(rng);
  spectral::fft2_inplace(z, h, w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const double fu = static_cast<double>(spectral::signed_frequency(u, h));
      const double fv = static_cast<double>(spectral::signed_frequency(v, w));
      z[u * w + v] *= std::exp(-(fu * fu + fv * fv) / (2.0 * cutoff * cutoff));
    }
  spectral::ifft2_inplace(z, h, w);
  std::vector<double> out(h * w);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) mean += (out[i] = z[i].real()) / static_cast<double>(out.size());
  for (double v : out) var += (v - mean) * (v - mean) / static_cast<double>(out.size());
  const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (auto& v : out) v = (v - mean) * scale;
  return out;
}

}  // namespace

void advection_diffusion_step(std::vector<double>& u, const AdvectionOptions& o, double dt) {
  // SSP-RK3 written as increments on u, so a zero right-hand side leaves u bit-identical.
  const std::size_t n = u.size();
  std::vector<double> k1(n), k2(n), k3(n), stage(n);
  advection_rhs(u, o, k1);
  for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + dt * k1[i];
  advection_rhs(stage, o, k2);
  for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.25 * dt * (k1[i] + k2[i]);
  advection_rhs(stage, o, k3);
  for (std::size_t i = 0; i < n; ++i) u[i] += dt / 6.0 * (k1[i] + k2[i] + 4.0 * k3[i]);
}

Tensor advection_diffusion_sequence(const AdvectionOptions& o, std::size_t frames, std::uint64_t seed,
                                    std::vector<double> initial) {
  o.check_stability();
  const std::size_t plane = o.height * o.width;
  std::vector<double> u = initial.empty() ? smooth_field(o.height, o.width, o.cutoff, seed) : std::move(initial);
  if (u.size() != plane) throw std::invalid_argument("advection-diffusion: initial field has the wrong size");
  const double dt = 1.0 / static_cast<double>(o.substeps);
  std::vector<double> out(frames * plane);
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy(u.begin(), u.end(), out.begin() + static_cast<std::ptrdiff_t>(t * plane));
    for (std::size_t s = 0; s < o.substeps; ++s) advection_diffusion_step(u, o, dt);
  }
  return Tensor::from({frames, 1, o.height, o.width}, std::move(out));
}

// ---- Navier-Stokes ----

NavierStokesSolver::NavierStokesSolver(const NavierStokesOptions& options, const std::vector<double>& vorticity)
    : options_(options) {
  const std::size_t n = options.n;
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("navier-stokes: grid size must be a power of two");
  if (!(options.nu > 0.0)) throw std::invalid_argument("navier-stokes: viscosity must be positive");
  if (vorticity.size() != n * n) throw std::invalid_argument("navier-stokes: initial vorticity has the wrong size");
  const double two_pi = 2.0 * std::numbers::pi;
  kx_.resize(n * n);
  ky_.resize(n * n);
  k2_.resize(n * n);
  keep_.resize(n * n);
  std::vector<std::complex<double>> f(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const long fi = spectral::signed_frequency(i, n), fj = spectral::signed_frequency(j, n);
      const std::size_t at = i * n + j;
      kx_[at] = two_pi * static_cast<double>(fi);
      ky_[at] = two_pi * static_cast<double>(fj);
      k2_[at] = kx_[at] * kx_[at] + ky_[at] * ky_[at];
      keep_[at] = 3 * static_cast<std::size_t>(std::labs(fi)) < n && 3 * static_cast<std::size_t>(std::labs(fj)) < n;
      const double phase = two_pi * (static_cast<double>(i) + static_cast<double>(j)) / static_cast<double>(n);
      f[at] = options.forcing * (std::sin(phase) + std::cos(phase));
    }
  spectral::fft2_inplace(f, n, n);
  forcing_hat_ = std::move(f);
  w_hat_.assign(vorticity.begin(), vorticity.end());
  spectral::fft2_inplace(w_hat_, n, n);
}

NavierStokesSolver::Spectrum NavierStokesSolver::rhs(const Spectrum& w_hat) const {
  const std::size_t n = options_.n, nn = n * n;
  const std::complex<double> i_unit(0.0, 1.0);
  Spectrum u(nn), v(nn), wx(nn), wy(nn);
  for (std::size_t k = 0; k < nn; ++k) {
    const auto w = keep_[k] ? w_hat[k] : 0.0;
    const auto psi = k2_[k] > 0.0 ? w / k2_[k] : 0.0;
    u[k] = i_unit * ky_[k] * psi;   // ∂ψ/∂y
    v[k] = -i_unit * kx_[k] * psi;  // −∂ψ/∂x
    wx[k] = i_unit * kx_[k] * w;
    wy[k] = i_unit * ky_[k] * w;
  }
  for (auto* s : {&u, &v, &wx, &wy}) spectral::ifft2_inplace(*s, n, n);
  Spectrum advect(nn);
  for (std::size_t k = 0; k < nn; ++k) advect[k] = u[k].real() * wx[k].real() + v[k].real() * wy[k].real();
  spectral::fft2_inplace(advect, n, n);
  for (std::size_t k = 0; k < nn; ++k) advect[k] = (keep_[k] ? -advect[k] : 0.0) + forcing_hat_[k];
  return advect;
}

// Integrating-factor RK4: viscosity is integrated exactly, so the step size
// is limited only by advection.
void NavierStokesSolver::advance(std::size_t steps) {
  const double dt = options_.dt;
  const std::size_t nn = w_hat_.size();
  std::vector<double> half(nn), full(nn);
  for (std::size_t k = 0; k < nn; ++k) {
    half[k] = std::exp(-0.5 * options_.nu * k2_[k] * dt);
    full[k] = half[k] * half[k];
  }
  Spectrum stage(nn);
  for (std::size_t s = 0; s < steps; ++s) {
    auto a = rhs(w_hat_);
    for (std::size_t k = 0; k < nn; ++k) stage[k] = half[k] * (w_hat_[k] + 0.5 * dt * a[k]);
    auto b = rhs(stage);
    for (std::size_t k = 0; k < nn; ++k) stage[k] = half[k] * w_hat_[k] + 0.5 * dt * b[k];
    auto c = rhs(stage);
    for (std::size_t k = 0; k < nn; ++k) stage[k] = full[k] * w_hat_[k] + dt * half[k] * c[k];
    auto d = rhs(stage);
    for (std::size_t k = 0; k < nn; ++k) {
      w_hat_[k] = full[k] * w_hat_[k] + dt / 6.0 * (full[k] * a[k] + 2.0 * half[k] * (b[k] + c[k]) + d[k]);
    }
    ++steps_;
    time_ += dt;
    for (double w : vorticity()) {
      if (!(std::abs(w) <= options_.blowup)) {
        throw NumericError("navier-stokes: vorticity blew up at step " + std::to_string(steps_) + " (t = " +
                           std::to_string(time_) + ")");
      }
    }
  }
}

std::vector<double> NavierStokesSolver::vorticity() const {
  Spectrum z = w_hat_;
  spectral::ifft2_inplace(z, options_.n, options_.n);
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k].real();
  return out;
}

std::vector<double> random_vorticity(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::complex<double>> z(n * n);
  for (auto& v : z) v = normal(rng);
  spectral::fft2_inplace(z, n, n);
  const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double fi = static_cast<double>(spectral::signed_frequency(i, n));
      const double fj = static_cast<double>(spectral::signed_frequency(j, n));
      z[i * n + j] *= (i == 0 && j == 0) ? 0.0 : std::pow(four_pi2 * (fi * fi + fj * fj) + 49.0, -1.25);
    }
  spectral::ifft2_inplace(z, n, n);
  std::vector<double> out(n * n);
  double var = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) var += (out[k] = z[k].real()) * out[k];
  const double scale = 1.0 / std::sqrt(var / static_cast<double>(out.size()));
  for (auto& v : out) v *= scale;
  return out;
}

Tensor navier_stokes_sequence(const NavierStokesOptions& o, std::size_t frames, std::uint64_t seed) {
  NavierStokesSolver solver(o, random_vorticity(o.n, seed));
  const auto per_frame = static_cast<std::size_t>(std::llround(o.frame_interval / o.dt));
  const std::size_t plane = o.n * o.n;
  std::vector<double> out(frames * plane);
  for (std::size_t t = 0; t < frames; ++t) {
    if (t > 0) solver.advance(per_frame);
    auto w = solver.vorticity();
    std::copy(w.begin(), w.end(), out.begin() + static_cast<std::ptrdiff_t>(t * plane));
  }
  return Tensor::from({frames, 1, o.n, o.n}, std::move(out));
}

// ---- batches ----

std::string to_string(Generator g) {
  switch (g) {
    case Generator::blobs: return "blobs";
    case Generator::advection_diffusion: return "advection_diffusion";
    case Generator::navier_stokes: return "navier_stokes";
  }
  return "unknown";
}

Generator parse_generator(const std::string& name) {
  if (name == "blobs") return Generator::blobs;
  if (name == "advection_diffusion") return Generator::advection_diffusion;
  if (name == "navier_stokes") return Generator::navier_stokes;
  throw std::invalid_argument("unknown generator '" + name +
                              "' (expected blobs, advection_diffusion or navier_stokes)");
}

std::size_t GeneratorSpec::height() const {
  switch (kind) {
    case Generator::blobs: return blobs.height;
    case Generator::advection_diffusion: return advection.height;
    case Generator::navier_stokes: return navier_stokes.n;
  }
  return 0;
}

std::size_t GeneratorSpec::width() const {
  switch (kind) {
    case Generator::blobs: return blobs.width;
    case Generator::advection_diffusion: return advection.width;
    case Generator::navier_stokes: return navier_stokes.n;
  }
  return 0;
}

Metadata GeneratorSpec::metadata() const {
  Metadata m{{"generator", to_string(kind)},
             {"t_in", std::to_string(t_in)},
             {"t_out", std::to_string(t_out)},
             {"height", std::to_string(height())},
             {"width", std::to_string(width())}};
  switch (kind) {
    case Generator::blobs:
      m["n_blobs"] = std::to_string(blobs.n_blobs);
      break;
    case Generator::advection_diffusion:
      m["vx"] = std::to_string(advection.vx);
      m["vy"] = std::to_string(advection.vy);
      m["nu"] = std::to_string(advection.nu);
      m["substeps"] = std::to_string(advection.substeps);
      break;
    case Generator::navier_stokes:
      m["nu"] = std::to_string(navier_stokes.nu);
      m["dt"] = std::to_string(navier_stokes.dt);
      m["frame_interval"] = std::to_string(navier_stokes.frame_interval);
      break;
  }
  return m;
}

Tensor generate_sequence(const GeneratorSpec& spec, std::uint64_t seed, std::size_t index) {
  const std::size_t frames = spec.t_in + spec.t_out;
  const std::uint64_t s = sequence_seed(seed, index);
  switch (spec.kind) {
    case Generator::blobs: return blob_sequence(spec.blobs, frames, s);
    case Generator::advection_diffusion: return advection_diffusion_sequence(spec.advection, frames, s);
    case Generator::navier_stokes: return navier_stokes_sequence(spec.navier_stokes, frames, s);
  }
  throw std::invalid_argument("generate_sequence: unknown generator");
}

SequenceBatch generate_batch(const GeneratorSpec& spec, std::uint64_t seed, std::size_t first_index,
                             std::size_t count) {
  if (spec.t_in == 0 || spec.t_out == 0) throw std::invalid_argument("generate_batch: t_in and t_out must be positive");
  if (spec.kind == Generator::advection_diffusion) spec.advection.check_stability();
  const std::size_t h = spec.height(), w = spec.width(), plane = h * w;
  std::vector<double> inputs(count * spec.t_in * plane), targets(count * spec.t_out * plane);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t s = 0; s < count; ++s) {
    try {
      Tensor seq = generate_sequence(spec, seed, first_index + s);
      auto d = seq.data();
      std::copy(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(spec.t_in * plane),
                inputs.begin() + static_cast<std::ptrdiff_t>(s * spec.t_in * plane));
      std::copy(d.begin() + static_cast<std::ptrdiff_t>(spec.t_in * plane), d.end(),
                targets.begin() + static_cast<std::ptrdiff_t>(s * spec.t_out * plane));
    } catch (...) {
#pragma omp critical(stp_generate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  SequenceBatch batch{Tensor::from({count, spec.t_in, 1, h, w}, std::move(inputs)),
                      Tensor::from({count, spec.t_out, 1, h, w}, std::move(targets)), spec.metadata()};
  batch.metadata["seed"] = std::to_string(seed);
  batch.metadata["first_index"] = std::to_string(first_index);
  return batch;
}

SequenceBatch gen_bouncing_blobs(std::size_t n_seq, std::size_t t_in, std::size_t t_out, std::size_t height,
                                 std::size_t width, std::size_t n_blobs, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.kind = Generator::blobs;
  spec.t_in = t_in;
  spec.t_out = t_out;
  spec.blobs.height = height;
  spec.blobs.width = width;
  spec.blobs.n_blobs = n_blobs;
  return generate_batch(spec, seed, 0, n_seq);
}

SequenceBatch gen_advection_diffusion(std::size_t n_seq, std::size_t t_in, std::size_t t_out,
                                      const AdvectionOptions& options, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.kind = Generator::advection_diffusion;
  spec.t_in = t_in;
  spec.t_out = t_out;
  spec.advection = options;
  return generate_batch(spec, seed, 0, n_seq);
}

SequenceBatch gen_navier_stokes(std::size_t n_seq, std::size_t t_in, std::size_t t_out,
                                const NavierStokesOptions& options, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.kind = Generator::navier_stokes;
  spec.t_in = t_in;
  spec.t_out = t_out;
  spec.navier_stokes = options;
  return generate_batch(spec, seed, 0, n_seq);
}

Tensor persistence_baseline(const Tensor& inputs, std::size_t t_out) {
  if (inputs.rank() != 5 || inputs.dim(1) == 0) {
    throw ShapeError("persistence_baseline expects [b, T_in>=1, C, H, W], got " + shape_str(inputs.shape()));
  }
  const std::size_t b = inputs.dim(0), t_in = inputs.dim(1);
  const std::size_t frame = inputs.dim(2) * inputs.dim(3) * inputs.dim(4);
  std::vector<double> out(b * t_out * frame);
  auto src = inputs.data();
  for (std::size_t s = 0; s < b; ++s) {
    auto last = src.subspan((s * t_in + t_in - 1) * frame, frame);
    for (std::size_t t = 0; t < t_out; ++t) {
      std::copy(last.begin(), last.end(), out.begin() + static_cast<std::ptrdiff_t>((s * t_out + t) * frame));
    }
  }
  return Tensor::from({b, t_out, inputs.dim(2), inputs.dim(3), inputs.dim(4)}, std::move(out));
}

Metadata read_metadata(const std::filesystem::path& file) {
  Metadata m;
  std::ifstream in(file);
  if (!in) return m;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

void write_metadata(const std::filesystem::path& file, const Metadata& metadata) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const auto& [k, v] : metadata) out << k << '=' << v << '\n';
}

void write_dataset(const std::filesystem::path& dir, const std::string& split, const SequenceBatch& batch) {
  std::filesystem::create_directories(dir);
  write_tensor_file(dir / (split + "_inputs.stpt"), batch.inputs);
  write_tensor_file(dir / (split + "_targets.stpt"), batch.targets);
  auto meta = read_metadata(dir / "metadata.txt");
  for (const auto& [k, v] : batch.metadata) meta[k] = v;
  meta[split + ".count"] = std::to_string(batch.inputs.dim(0));
  write_metadata(dir / "metadata.txt", meta);
}

SequenceBatch read_dataset(const std::filesystem::path& dir, const std::string& split) {
  SequenceBatch batch{read_tensor_file(dir / (split + "_inputs.stpt")),
                      read_tensor_file(dir / (split + "_targets.stpt")), read_metadata(dir / "metadata.txt")};
  if (batch.inputs.rank() != 5 || batch.targets.rank() != 5 || batch.inputs.dim(0) != batch.targets.dim(0)) {
    throw ShapeError("dataset split '" + split + "'", batch.inputs.shape(), batch.targets.shape());
  }
  return batch;
}

}  // namespace stp
