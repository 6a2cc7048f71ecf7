#include "stp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "stp/kernels.hpp"

namespace stp {

using detail::grad_sink;
using detail::make_result;

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

std::vector<double> copy_data(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryKind kind) {
  if (b.numel() == 1 && a.numel() != 1 && b.rank() == 0) {
    // Tensor-vs-scalar-tensor: keep the gradient path into b.
    const double s = b.item();
    if (kind == BinaryKind::div && s == 0.0) throw NumericError("div: division by exact zero");
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    auto ad = a.data();
    for (std::size_t i = 0; i < n; ++i) {
      switch (kind) {
        case BinaryKind::add: out[i] = ad[i] + s; break;
        case BinaryKind::sub: out[i] = ad[i] - s; break;
        case BinaryKind::mul: out[i] = ad[i] * s; break;
        case BinaryKind::div: out[i] = ad[i] / s; break;
      }
    }
    return make_result(a.shape(), std::move(out), {a, b}, [a, b, kind, s](std::span<const double> g) {
      auto ga = grad_sink(a);
      auto gb = grad_sink(b);
      auto ad = a.data();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case BinaryKind::add:
            if (!ga.empty()) ga[i] += g[i];
            acc += g[i];
            break;
          case BinaryKind::sub:
            if (!ga.empty()) ga[i] += g[i];
            acc -= g[i];
            break;
          case BinaryKind::mul:
            if (!ga.empty()) ga[i] += g[i] * s;
            acc += g[i] * ad[i];
            break;
          case BinaryKind::div:
            if (!ga.empty()) ga[i] += g[i] / s;
            acc -= g[i] * ad[i] / (s * s);
            break;
        }
      }
      if (!gb.empty()) gb[0] += acc;
    });
  }
  require_same("elementwise", a, b);
  const std::size_t n = a.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  switch (kind) {
    case BinaryKind::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] + bd[i];
      break;
    case BinaryKind::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] - bd[i];
      break;
    case BinaryKind::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * bd[i];
      break;
    case BinaryKind::div:
      for (std::size_t i = 0; i < n; ++i) {
        if (bd[i] == 0.0) {
          throw NumericError("div: division by exact zero at flat index " + std::to_string(i));
        }
        out[i] = ad[i] / bd[i];
      }
      break;
  }
  return make_result(a.shape(), std::move(out), {a, b}, [a, b, kind](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    auto ad = a.data();
    auto bd = b.data();
    const std::size_t n = g.size();
    switch (kind) {
      case BinaryKind::add:
        for (std::size_t i = 0; i < n && !ga.empty(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < n && !gb.empty(); ++i) gb[i] += g[i];
        break;
      case BinaryKind::sub:
        for (std::size_t i = 0; i < n && !ga.empty(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < n && !gb.empty(); ++i) gb[i] -= g[i];
        break;
      case BinaryKind::mul:
        for (std::size_t i = 0; i < n && !ga.empty(); ++i) ga[i] += g[i] * bd[i];
        for (std::size_t i = 0; i < n && !gb.empty(); ++i) gb[i] += g[i] * ad[i];
        break;
      case BinaryKind::div:
        for (std::size_t i = 0; i < n && !ga.empty(); ++i) ga[i] += g[i] / bd[i];
        for (std::size_t i = 0; i < n && !gb.empty(); ++i) gb[i] -= g[i] * ad[i] / (bd[i] * bd[i]);
        break;
    }
  });
}

Tensor elementwise(const Tensor& a, double s, BinaryKind kind) {
  if (kind == BinaryKind::div && s == 0.0) throw NumericError("div: division by exact zero");
  const std::size_t n = a.numel();
  auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case BinaryKind::add: out[i] = ad[i] + s; break;
      case BinaryKind::sub: out[i] = ad[i] - s; break;
      case BinaryKind::mul: out[i] = ad[i] * s; break;
      case BinaryKind::div: out[i] = ad[i] / s; break;
    }
  }
  const double scale = kind == BinaryKind::mul ? s : kind == BinaryKind::div ? 1.0 / s : 1.0;
  return make_result(a.shape(), std::move(out), {a}, [a, scale](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * scale;
  });
}

Tensor unary(const Tensor& a, UnaryKind kind) {
  const std::size_t n = a.numel();
  auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[i];
    switch (kind) {
      case UnaryKind::sigmoid:
        // Split by sign so neither branch overflows.
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        break;
      case UnaryKind::tanh: out[i] = std::tanh(x); break;
      case UnaryKind::relu: out[i] = x > 0 ? x : 0.0; break;
      case UnaryKind::neg: out[i] = -x; break;
      case UnaryKind::square: out[i] = x * x; break;
      case UnaryKind::exp: out[i] = std::exp(x); break;
    }
  }
  std::vector<double> saved;
  if (kind == UnaryKind::sigmoid || kind == UnaryKind::tanh || kind == UnaryKind::exp) {
    saved = out;
  }
  return make_result(a.shape(), std::move(out), {a},
                     [a, kind, saved = std::move(saved)](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       auto ad = a.data();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         double d = 0.0;
                         switch (kind) {
                           case UnaryKind::sigmoid: d = saved[i] * (1.0 - saved[i]); break;
                           case UnaryKind::tanh: d = 1.0 - saved[i] * saved[i]; break;
                           case UnaryKind::relu: d = ad[i] > 0 ? 1.0 : 0.0; break;
                           case UnaryKind::neg: d = -1.0; break;
                           case UnaryKind::square: d = 2.0 * ad[i]; break;
                           case UnaryKind::exp: d = saved[i]; break;
                         }
                         ga[i] += g[i] * d;
                       }
                     });
}

Tensor one_minus(const Tensor& a) {
  auto out = copy_data(a);
  for (auto& v : out) v = 1.0 - v;
  return make_result(a.shape(), std::move(out), {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result({}, {acc}, {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result({}, {acc / n}, {a}, [a, n](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (auto& v : ga) v += g[0] / n;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, a.data(), b.data(), out, false);
  return make_result({m, n}, std::move(out), {a, b}, [a, b, m, n, k](std::span<const double> g) {
    if (auto ga = grad_sink(a); !ga.empty()) kernels::gemm(false, true, m, k, n, g, b.data(), ga, true);
    if (auto gb = grad_sink(b); !gb.empty()) kernels::gemm(true, false, k, n, m, a.data(), g, gb, true);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) throw ShapeError("bmm", a.shape(), b.shape());
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(false, transpose_b, m, n, k, a.data().subspan(i * m * k, m * k),
                  b.data().subspan(i * k * n, k * n), std::span(out).subspan(i * m * n, m * n),
                  false);
  }
  return make_result({batch, m, n}, std::move(out), {a, b},
                     [a, b, batch, m, n, k, transpose_b](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       auto gb = grad_sink(b);
                       for (std::size_t i = 0; i < batch; ++i) {
                         auto gi = g.subspan(i * m * n, m * n);
                         auto ai = a.data().subspan(i * m * k, m * k);
                         auto bi = b.data().subspan(i * k * n, k * n);
                         if (!ga.empty()) {
                           // dA = dC·op(B)ᵀ
                           kernels::gemm(false, !transpose_b, m, k, n, gi, bi,
                                         ga.subspan(i * m * k, m * k), true);
                         }
                         if (!gb.empty()) {
                           if (transpose_b) {
                             // B is [n,k]: dB = dCᵀ·A
                             kernels::gemm(true, false, n, k, m, gi, ai,
                                           gb.subspan(i * k * n, k * n), true);
                           } else {
                             kernels::gemm(true, false, k, n, m, ai, gi,
                                           gb.subspan(i * k * n, k * n), true);
                           }
                         }
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  if (x.dim(1) != weight.dim(0)) throw ShapeError("linear", x.shape(), weight.shape());
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear bias", bias.shape(), {out_dim});
  }
  std::vector<double> out(rows * out_dim);
  kernels::gemm(false, false, rows, out_dim, in, x.data(), weight.data(), out, false);
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] += bd[j];
  }
  return make_result({rows, out_dim}, std::move(out), {x, weight, bias},
                     [x, weight, bias, rows, in, out_dim](std::span<const double> g) {
                       if (auto gx = grad_sink(x); !gx.empty())
                         kernels::gemm(false, true, rows, in, out_dim, g, weight.data(), gx, true);
                       if (auto gw = grad_sink(weight); !gw.empty())
                         kernels::gemm(true, false, in, out_dim, rows, x.data(), g, gw, true);
                       if (auto gb = grad_sink(bias); !gb.empty()) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
                       }
                     });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
  return make_result(shape, copy_data(a), {a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor gather(const Tensor& a, const Shape& shape,
              std::shared_ptr<const std::vector<std::size_t>> index) {
  if (shape_numel(shape) != index->size()) {
    throw ShapeError("gather: index length " + std::to_string(index->size()) + " for shape " +
                     shape_str(shape));
  }
  auto ad = a.data();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= ad.size()) throw std::out_of_range("gather: index beyond " + shape_str(a.shape()));
    out[i] = ad[src];
  }
  return make_result(shape, std::move(out), {a}, [a, index](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[(*index)[i]] += g[i];
  });
}

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw ShapeError("concat: axis out of range for " + shape_str(shape));
  shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) throw ShapeError("concat", parts.front().shape(), p.shape());
    shape[axis] += probe[axis];
    probe[axis] = 0;
    Shape ref = parts.front().shape();
    ref[axis] = 0;
    if (probe != ref) throw ShapeError("concat", parts.front().shape(), p.shape());
  }
  const auto total = split_at(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto s = split_at(p.shape(), axis);
    auto pd = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pd.data() + o * s.extent * s.inner, s.extent * s.inner,
                  out.data() + (o * total.extent + offset) * total.inner);
    }
    offset += s.extent;
  }
  return make_result(shape, std::move(out), parts, [parts, axis, total](std::span<const double> g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const auto s = split_at(p.shape(), axis);
      if (auto gp = grad_sink(p); !gp.empty()) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = g.data() + (o * total.extent + offset) * total.inner;
          double* dst = gp.data() + o * s.extent * s.inner;
          for (std::size_t j = 0; j < s.extent * s.inner; ++j) dst[j] += src[j];
        }
      }
      offset += s.extent;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || start + length > a.dim(axis)) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") on axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = length;
  const auto src = split_at(a.shape(), axis);
  std::vector<double> out(shape_numel(shape));
  auto ad = a.data();
  for (std::size_t o = 0; o < src.outer; ++o) {
    std::copy_n(ad.data() + (o * src.extent + start) * src.inner, length * src.inner,
                out.data() + o * length * src.inner);
  }
  return make_result(shape, std::move(out), {a}, [a, src, start, length](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t o = 0; o < src.outer; ++o) {
      const double* from = g.data() + o * length * src.inner;
      double* to = ga.data() + (o * src.extent + start) * src.inner;
      for (std::size_t j = 0; j < length * src.inner; ++j) to[j] += from[j];
    }
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax on a scalar");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  std::vector<double> out(a.numel());
  auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = ad.data() + r * n;
    double* dst = out.data() + r * n;
    const double peak = *std::max_element(src, src + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += dst[j] = std::exp(src[j] - peak);
    for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
  }
  auto saved = out;
  return make_result(a.shape(), std::move(out), {a},
                     [a, n, rows, saved = std::move(saved)](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = saved.data() + r * n;
                         const double* gr = g.data() + r * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += gr[j] * y[j];
                         for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[j] * (gr[j] - dot);
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t rows = x.dim(0), c = x.dim(1);
  if (gamma.shape() != Shape{c}) throw ShapeError("layer_norm gamma", gamma.shape(), {c});
  if (beta.shape() != Shape{c}) throw ShapeError("layer_norm beta", beta.shape(), {c});
  std::vector<double> normed(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += src[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      normed[r * c + j] = (src[j] - mu) * inv_std[r];
      out[r * c + j] = normed[r * c + j] * gd[j] + bd[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, c, normed = std::move(normed),
       inv_std = std::move(inv_std)](std::span<const double> g) {
        auto gx = grad_sink(x);
        auto gg = grad_sink(gamma);
        auto gb = grad_sink(beta);
        auto gd = gamma.data();
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * c;
          const double* nr = normed.data() + r * c;
          if (!gg.empty())
            for (std::size_t j = 0; j < c; ++j) gg[j] += gr[j] * nr[j];
          if (!gb.empty())
            for (std::size_t j = 0; j < c; ++j) gb[j] += gr[j];
          if (gx.empty()) continue;
          double mean_d = 0.0, mean_dn = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double d = gr[j] * gd[j];
            mean_d += d;
            mean_dn += d * nr[j];
          }
          mean_d *= inv_c;
          mean_dn *= inv_c;
          for (std::size_t j = 0; j < c; ++j) {
            gx[r * c + j] += inv_std[r] * (gr[j] * gd[j] - mean_d - nr[j] * mean_dn);
          }
        }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding,
              std::size_t stride) {
  require_rank("conv2d input", input, 4);
  require_rank("conv2d kernel", kernel, 4);
  if (kernel.dim(1) != input.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d", input.shape(), kernel.shape());
  }
  const std::size_t k = kernel.dim(2);
  if (padding == Padding::same && k % 2 == 0) {
    throw ShapeError("conv2d: same padding needs an odd kernel, got " + shape_str(kernel.shape()));
  }
  if (padding == Padding::same && stride != 1) {
    throw ShapeError("conv2d: same padding is only defined for stride 1");
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  kernels::ConvGeometry geo{input.dim(0), input.dim(1), kernel.dim(0), input.dim(2),
                            input.dim(3), k, stride, padding == Padding::same ? k / 2 : 0};
  if (geo.height + 2 * geo.padding < k || geo.width + 2 * geo.padding < k) {
    throw ShapeError("conv2d: field smaller than kernel", input.shape(), kernel.shape());
  }
  if (bias.defined() && bias.shape() != Shape{geo.out_channels}) {
    throw ShapeError("conv2d bias", bias.shape(), {geo.out_channels});
  }
  Shape shape{geo.batch, geo.out_channels, geo.out_height(), geo.out_width()};
  std::vector<double> out(shape_numel(shape));
  kernels::conv2d_forward(geo, input.data(), kernel.data(),
                          bias.defined() ? bias.data() : std::span<const double>{}, out);
  return make_result(shape, std::move(out), {input, kernel, bias},
                     [input, kernel, bias, geo](std::span<const double> g) {
                       kernels::conv2d_backward(geo, input.data(), kernel.data(), g,
                                                grad_sink(input), grad_sink(kernel),
                                                grad_sink(bias));
                     });
}

Tensor depthwise_bank(const Tensor& input, const Tensor& stencils) {
  require_rank("depthwise_bank input", input, 4);
  require_rank("depthwise_bank stencils", stencils, 3);
  const std::size_t b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t m = stencils.dim(0), k = stencils.dim(1);
  if (stencils.dim(2) != k || k % 2 == 0) {
    throw ShapeError("depthwise_bank: stencils must be odd and square, got " +
                     shape_str(stencils.shape()));
  }
  if (h < k || w < k) throw ShapeError("depthwise_bank: field smaller than kernel", input.shape(), stencils.shape());
  Shape shape{b, c * m, h, w};
  std::vector<double> out(shape_numel(shape));
  kernels::depthwise_bank_forward(b, c, h, w, m, k, input.data(), stencils.data(), out);
  return make_result(shape, std::move(out), {input, stencils},
                     [input, stencils, b, c, h, w, m, k](std::span<const double> g) {
                       kernels::depthwise_bank_backward(b, c, h, w, m, k, input.data(),
                                                        stencils.data(), g, grad_sink(input),
                                                        grad_sink(stencils));
                     });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        std::size_t stride) {
  require_rank("conv_transpose2d input", input, 4);
  require_rank("conv_transpose2d kernel", kernel, 4);
  if (kernel.dim(0) != input.dim(1) || kernel.dim(2) != kernel.dim(3) || stride == 0) {
    throw ShapeError("conv_transpose2d", input.shape(), kernel.shape());
  }
  kernels::DeconvGeometry geo{input.dim(0), input.dim(1), kernel.dim(1), input.dim(2),
                              input.dim(3), kernel.dim(2), stride};
  if (bias.defined() && bias.shape() != Shape{geo.out_channels}) {
    throw ShapeError("conv_transpose2d bias", bias.shape(), {geo.out_channels});
  }
  Shape shape{geo.batch, geo.out_channels, geo.out_height(), geo.out_width()};
  std::vector<double> out(shape_numel(shape));
  kernels::conv_transpose2d_forward(geo, input.data(), kernel.data(),
                                    bias.defined() ? bias.data() : std::span<const double>{}, out);
  return make_result(shape, std::move(out), {input, kernel, bias},
                     [input, kernel, bias, geo](std::span<const double> g) {
                       kernels::conv_transpose2d_backward(geo, input.data(), kernel.data(), g,
                                                          grad_sink(input), grad_sink(kernel),
                                                          grad_sink(bias));
                     });
}

namespace {

struct Lerp {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<Lerp> lerp_table(std::size_t in, std::size_t factor) {
  std::vector<Lerp> table(in * factor);
  for (std::size_t o = 0; o < table.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto lo = static_cast<std::size_t>(src);
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    table[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return table;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& input, std::size_t factor) {
  require_rank("upsample_bilinear", input, 4);
  if (factor == 0) throw ShapeError("upsample_bilinear: factor must be positive");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  auto rows = lerp_table(h, factor);
  auto cols = lerp_table(w, factor);
  std::vector<double> out(planes * oh * ow);
  auto in = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const auto& ry = rows[y];
      for (std::size_t x = 0; x < ow; ++x) {
        const auto& cx = cols[x];
        const double top = src[ry.lo * w + cx.lo] * (1 - cx.w_hi) + src[ry.lo * w + cx.hi] * cx.w_hi;
        const double bot = src[ry.hi * w + cx.lo] * (1 - cx.w_hi) + src[ry.hi * w + cx.hi] * cx.w_hi;
        dst[y * ow + x] = top * (1 - ry.w_hi) + bot * ry.w_hi;
      }
    }
  }
  return make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                     [input, planes, h, w, oh, ow, rows = std::move(rows),
                      cols = std::move(cols)](std::span<const double> g) {
                       auto gi = grad_sink(input);
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* dst = gi.data() + p * h * w;
                         const double* src = g.data() + p * oh * ow;
                         for (std::size_t y = 0; y < oh; ++y) {
                           const auto& ry = rows[y];
                           for (std::size_t x = 0; x < ow; ++x) {
                             const auto& cx = cols[x];
                             const double v = src[y * ow + x];
                             dst[ry.lo * w + cx.lo] += v * (1 - ry.w_hi) * (1 - cx.w_hi);
                             dst[ry.lo * w + cx.hi] += v * (1 - ry.w_hi) * cx.w_hi;
                             dst[ry.hi * w + cx.lo] += v * ry.w_hi * (1 - cx.w_hi);
                             dst[ry.hi * w + cx.hi] += v * ry.w_hi * cx.w_hi;
                           }
                         }
                       }
                     });
}

namespace {

std::vector<double> packed_dft(std::span<const double> packed, std::size_t h, std::size_t w,
                               bool inverse) {
  const std::size_t half = packed.size() / 2;
  std::vector<std::complex<double>> planes(half);
  for (std::size_t i = 0; i < half; ++i) planes[i] = {packed[i], packed[half + i]};
  kernels::dft2(planes, half / (h * w), h, w, inverse);
  std::vector<double> out(packed.size());
  for (std::size_t i = 0; i < half; ++i) {
    out[i] = planes[i].real();
    out[half + i] = planes[i].imag();
  }
  return out;
}

}  // namespace

Tensor dft2(const Tensor& packed, bool inverse) {
  if (packed.rank() < 3 || packed.dim(0) != 2) {
    throw ShapeError("dft2: expected packed [2,...,h,w], got " + shape_str(packed.shape()));
  }
  const std::size_t h = packed.dim(packed.rank() - 2), w = packed.dim(packed.rank() - 1);
  for (double v : packed.data()) {
    if (!std::isfinite(v)) throw NumericError("dft2: non-finite input");
  }
  return make_result(packed.shape(), packed_dft(packed.data(), h, w, inverse), {packed},
                     [packed, h, w, inverse](std::span<const double> g) {
                       // Adjoint of the unnormalized transform is the opposite-sign
                       // unnormalized transform.
                       auto back = packed_dft(g, h, w, !inverse);
                       auto gp = grad_sink(packed);
                       for (std::size_t i = 0; i < back.size(); ++i) gp[i] += back[i];
                     });
}

}  // namespace stp
