#include "stp/objectives.hpp"

#include <cmath>
#include <numbers>

#include "stp/ops.hpp"
#include "stp/spectral.hpp"

namespace stp {

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

std::size_t frame_size(const Tensor& t) {
  if (t.rank() < 3) throw ShapeError("frame metrics need [..., C, H, W], got " + shape_str(t.shape()));
  return t.dim(t.rank() - 1) * t.dim(t.rank() - 2) * t.dim(t.rank() - 3);
}

template <typename F>
double pointwise_metric(const char* op, const Tensor& pred, const Tensor& target, Reduction reduction, F f) {
  require_same(op, pred, target);
  auto p = pred.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += f(p[i] - t[i]);
  if (reduction == Reduction::mean) return acc / static_cast<double>(p.size());
  return acc / static_cast<double>(p.size() / frame_size(pred));
}

}  // namespace

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same("mse_loss", pred, target);
  return mean(square(pred - target));
}

double mse_metric(const Tensor& pred, const Tensor& target, Reduction reduction) {
  return pointwise_metric("mse_metric", pred, target, reduction, [](double d) { return d * d; });
}

double mae_metric(const Tensor& pred, const Tensor& target, Reduction reduction) {
  return pointwise_metric("mae_metric", pred, target, reduction, [](double d) { return std::abs(d); });
}

std::vector<double> h1_weights(std::size_t h, std::size_t w) {
  std::vector<double> out(h * w);
  const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
  for (std::size_t u = 0; u < h; ++u) {
    const double xu = static_cast<double>(spectral::signed_frequency(u, h)) / static_cast<double>(h);
    for (std::size_t v = 0; v < w; ++v) {
      const double xv = static_cast<double>(spectral::signed_frequency(v, w)) / static_cast<double>(w);
      out[u * w + v] = 1.0 + four_pi2 * (xu * xu + xv * xv);
    }
  }
  return out;
}

Tensor h1_loss(const Tensor& pred, const Tensor& target) {
  require_same("h1_loss", pred, target);
  if (pred.rank() < 2) throw ShapeError("h1_loss needs at least two axes, got " + shape_str(pred.shape()));
  const std::size_t h = pred.dim(pred.rank() - 2), w = pred.dim(pred.rank() - 1);
  auto z = fft2(pred - target);
  const auto plane = h1_weights(h, w);
  std::vector<double> tiled(pred.numel());
  for (std::size_t i = 0; i < tiled.size(); ++i) tiled[i] = plane[i % plane.size()];
  Tensor weights = Tensor::from(pred.shape(), std::move(tiled));
  Tensor power = square(z.re) + square(z.im);
  return sum(mul(power, weights)) * (1.0 / static_cast<double>(pred.numel()));
}

void LossWeights::validate() const {
  if (!std::isfinite(h1) || h1 < 0.0) throw std::invalid_argument("loss weight h1 must be finite and >= 0");
  if (!std::isfinite(moment) || moment < 0.0) {
    throw std::invalid_argument("loss weight moment must be finite and >= 0");
  }
}

TotalLoss total_loss(const Tensor& pred, const Tensor& target, const DerivativeBank& bank, const LossWeights& w) {
  w.validate();
  Tensor mse = mse_loss(pred, target);
  Tensor h1 = w.h1 > 0.0 ? h1_loss(pred, target) : h1_loss(pred.detach(), target);
  Tensor moment = moment_loss(bank);
  Tensor total = mse;
  if (w.h1 > 0.0) total = total + h1 * w.h1;
  if (w.moment > 0.0) total = total + moment * w.moment;
  LossBreakdown parts{total.item(), mse.item(), h1.item(), moment.item()};
  return {total, parts};
}

namespace {

std::vector<double> gaussian_window(std::size_t n, double sigma) {
  std::vector<double> g(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    total += g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable valid-mode Gaussian filter of one h×w plane.
std::vector<double> blur(const double* src, std::size_t h, std::size_t w, const std::vector<double>& g) {
  const std::size_t n = g.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += g[k] * src[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& options) {
  require_same("ssim", pred, target);
  if (pred.rank() != 3) throw ShapeError("ssim expects [C,H,W], got " + shape_str(pred.shape()));
  const std::size_t channels = pred.dim(0), h = pred.dim(1), w = pred.dim(2), n = options.window;
  if (h < n || w < n) {
    throw std::invalid_argument("ssim: frame " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
  }
  const double c1 = std::pow(0.01 * options.data_range, 2), c2 = std::pow(0.03 * options.data_range, 2);
  const auto g = gaussian_window(n, options.sigma);
  const std::size_t plane = h * w;
  std::vector<double> xx(plane), yy(plane), xy(plane);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = pred.data().data() + c * plane;
    const double* y = target.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mx = blur(x, h, w, g), my = blur(y, h, w, g);
    auto sxx = blur(xx.data(), h, w, g), syy = blur(yy.data(), h, w, g), sxy = blur(xy.data(), h, w, g);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    count += mx.size();
  }
  return total / static_cast<double>(count);
}

double ssim_frames(const Tensor& pred, const Tensor& target, const SsimOptions& options) {
  require_same("ssim_frames", pred, target);
  const std::size_t r = pred.rank();
  if (r < 3) throw ShapeError("ssim_frames expects [..., C, H, W], got " + shape_str(pred.shape()));
  const Shape frame{pred.dim(r - 3), pred.dim(r - 2), pred.dim(r - 1)};
  const std::size_t size = shape_numel(frame), frames = pred.numel() / size;
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    auto p = pred.data().subspan(f * size, size), t = target.data().subspan(f * size, size);
    total += ssim(Tensor::from(frame, {p.begin(), p.end()}), Tensor::from(frame, {t.begin(), t.end()}), options);
  }
  return total / static_cast<double>(frames);
}

double nmse(const Tensor& pred, const Tensor& target) {
  require_same("nmse", pred, target);
  if (pred.rank() < 1 || pred.dim(0) == 0) throw ShapeError("nmse needs a leading batch axis");
  const std::size_t b = pred.dim(0), n = pred.numel() / b;
  double total = 0.0;
  for (std::size_t s = 0; s < b; ++s) {
    double err = 0.0, norm = 0.0;
    for (std::size_t i = s * n; i < (s + 1) * n; ++i) {
      const double d = pred[i] - target[i];
      err += d * d;
      norm += target[i] * target[i];
    }
    if (norm == 0.0) throw NumericError("nmse: target sample " + std::to_string(s) + " has zero norm");
    total += err / norm;
  }
  return total / static_cast<double>(b);
}

}  // namespace stp
