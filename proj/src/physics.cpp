#include "stp/physics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "stp/ops.hpp"

namespace stp {

namespace {

void require_odd(std::size_t k, const char* what) {
  if (k == 0 || k % 2 == 0) {
    throw std::invalid_argument(std::string(what) + ": order must be odd, got " + std::to_string(k));
  }
}

double factorial(std::size_t n) {
  double f = 1.0;
  for (std::size_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
  return f;
}

// Powers with 0^0 = 1.
double ipow(double base, std::size_t e) {
  double r = 1.0;
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

Tensor moment_operator(std::size_t k) {
  require_odd(k, "moment_operator");
  const double c = static_cast<double>(k - 1) / 2.0;
  const std::size_t n = k * k;
  std::vector<double> op(n * n);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      const double scale = 1.0 / (factorial(a) * factorial(b));
      for (std::size_t u = 0; u < k; ++u)
        for (std::size_t v = 0; v < k; ++v) {
          op[(a * k + b) * n + u * k + v] =
              scale * ipow(static_cast<double>(u) - c, a) * ipow(static_cast<double>(v) - c, b);
        }
    }
  return Tensor::from({n, n}, std::move(op));
}

MomentMatrix moment_of(const Tensor& filter) {
  if (filter.rank() != 2 || filter.dim(0) != filter.dim(1)) {
    throw ShapeError("moment_of: expected a square filter, got " + shape_str(filter.shape()));
  }
  const std::size_t k = filter.dim(0);
  require_odd(k, "moment_of");
  Tensor flat = reshape(filter, {k * k, 1});
  return {k, reshape(matmul(moment_operator(k), flat), {k, k})};
}

MomentMatrix target_moment(std::size_t k, std::size_t i, std::size_t j) {
  require_odd(k, "target_moment");
  if (i >= k || j >= k) {
    throw std::out_of_range("target_moment: (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside order " + std::to_string(k));
  }
  Tensor t = Tensor::zeros({k, k});
  t.mutable_data()[i * k + j] = 1.0;
  return {k, t};
}

DerivativeBank DerivativeBank::create(std::size_t channels, std::size_t k, std::mt19937_64& rng,
                                      double filter_std) {
  require_odd(k, "DerivativeBank");
  DerivativeBank bank;
  bank.order = k;
  bank.channels = channels;
  std::normal_distribution<double> noise(0.0, filter_std);
  std::vector<double> filters(k * k * k * k);
  for (auto& v : filters) v = noise(rng);
  bank.filters = Tensor::from({k * k, k, k}, std::move(filters), true);
  bank.combiner = Tensor::zeros({channels, channels * k * k, 1, 1}, true);
  return bank;
}

std::vector<std::pair<std::string, Tensor>> DerivativeBank::parameters(const std::string& prefix) const {
  return {{prefix + "filters", filters}, {prefix + "combiner", combiner}};
}

Tensor moment_loss(const DerivativeBank& bank) {
  const std::size_t k = bank.order;
  const std::size_t n = k * k;
  // Row f of the filter matrix is filter f flattened; its moments are row f
  // of filters·opᵀ, and the one-hot targets stack into the identity.
  Tensor flat = reshape(bank.filters, {n, n});
  Tensor op_t = Tensor::zeros({n, n});
  {
    Tensor op = moment_operator(k);
    auto src = op.data();
    auto dst = op_t.mutable_data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) dst[c * n + r] = src[r * n + c];
  }
  Tensor moments = matmul(flat, op_t);
  Tensor identity = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) identity.mutable_data()[i * n + i] = 1.0;
  return sum(square(moments - identity));
}

Tensor derivative_bank_apply(const DerivativeBank& bank, const Tensor& h) {
  if (h.rank() != 4 || h.dim(1) != bank.channels) {
    throw ShapeError("derivative_bank_apply: expected [b," + std::to_string(bank.channels) +
                     ",H,W], got " + shape_str(h.shape()));
  }
  if (h.dim(2) < bank.order || h.dim(3) < bank.order) {
    throw ShapeError("derivative_bank_apply: field " + shape_str(h.shape()) +
                     " smaller than kernel order " + std::to_string(bank.order));
  }
  return conv2d(depthwise_bank(h, bank.filters), bank.combiner, Tensor(), Padding::valid);
}

std::vector<Tensor> solve_exact_stencils(std::size_t k) {
  require_odd(k, "solve_exact_stencils");
  const std::size_t n = k * k;
  const Tensor op = moment_operator(k);
  // Gauss-Jordan on [op | I] with partial pivoting.
  std::vector<double> a(op.data().begin(), op.data().end());
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-14) {
      throw NumericError("solve_exact_stencils: singular moment system at column " + std::to_string(col));
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(a[pivot * n + c], a[col * n + c]);
        std::swap(inv[pivot * n + c], inv[col * n + c]);
      }
    }
    const double d = a[col * n + col];
    for (std::size_t c = 0; c < n; ++c) {
      a[col * n + c] /= d;
      inv[col * n + c] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        a[r * n + c] -= f * a[col * n + c];
        inv[r * n + c] -= f * inv[col * n + c];
      }
    }
  }
  // Filter for target e_t is column t of op⁻¹.
  std::vector<Tensor> stencils;
  stencils.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> w(n);
    for (std::size_t r = 0; r < n; ++r) w[r] = inv[r * n + t];
    stencils.push_back(Tensor::from({k, k}, std::move(w)));
  }
  return stencils;
}

}  // namespace stp
