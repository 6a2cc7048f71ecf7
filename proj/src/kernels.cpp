#include "stp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

namespace stp::kernels {

namespace {

void im2col(std::span<const double> image, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t out_h, std::size_t out_w, std::span<double> col) {
  const std::size_t plane = out_h * out_w;
#pragma omp parallel for schedule(static)
  for (std::size_t row = 0; row < channels * k * k; ++row) {
    const std::size_t c = row / (k * k);
    const std::size_t ky = (row / k) % k;
    const std::size_t kx = row % k;
    double* dst = col.data() + row * plane;
    const double* src = image.data() + c * height * width;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                static_cast<std::ptrdiff_t>(pad);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                  static_cast<std::ptrdiff_t>(pad);
        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(height) &&
                            ix < static_cast<std::ptrdiff_t>(width);
        dst[oy * out_w + ox] = inside ? src[iy * static_cast<std::ptrdiff_t>(width) + ix] : 0.0;
      }
    }
  }
}

// Scatter-add inverse of im2col. Parallel over channels: distinct channels
// never touch the same image element.
void col2im(std::span<const double> col, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t out_h, std::size_t out_w, std::span<double> image) {
  const std::size_t plane = out_h * out_w;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = image.data() + c * height * width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = col.data() + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            dst[iy * static_cast<std::ptrdiff_t>(width) + ix] += src[oy * out_w + ox];
          }
        }
      }
    }
  }
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Transforms one contiguous line of length n in place: radix-2 when n is a
// power of two, direct DFT otherwise.
class LineTransform {
 public:
  LineTransform(std::size_t n, bool inverse) : n_(n), pow2_(is_pow2(n)) {
    const double sign = inverse ? 1.0 : -1.0;
    twiddle_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      twiddle_[j] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(j) /
                                        static_cast<double>(n));
    }
    if (pow2_) {
      bitrev_.resize(n);
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < n) ++bits;
      for (std::size_t j = 0; j < n; ++j) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) r |= ((j >> b) & 1U) << (bits - 1 - b);
        bitrev_[j] = r;
      }
    }
  }

  void apply(std::complex<double>* line, std::vector<std::complex<double>>& scratch) const {
    if (n_ <= 1) return;
    if (pow2_) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (j < bitrev_[j]) std::swap(line[j], line[bitrev_[j]]);
      }
      for (std::size_t len = 2; len <= n_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n_ / len;
        for (std::size_t start = 0; start < n_; start += len) {
          for (std::size_t j = 0; j < half; ++j) {
            const auto t = twiddle_[j * step] * line[start + j + half];
            const auto u = line[start + j];
            line[start + j] = u + t;
            line[start + j + half] = u - t;
          }
        }
      }
      return;
    }
    scratch.assign(n_, {0.0, 0.0});
    for (std::size_t f = 0; f < n_; ++f) {
      std::complex<double> acc{0.0, 0.0};
      for (std::size_t j = 0; j < n_; ++j) acc += line[j] * twiddle_[(f * j) % n_];
      scratch[f] = acc;
    }
    std::copy(scratch.begin(), scratch.end(), line);
  }

 private:
  std::size_t n_;
  bool pow2_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> bitrev_;
};

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stored = Eigen::Map<const RowMajor>;
  const auto mi = static_cast<Eigen::Index>(m), ni = static_cast<Eigen::Index>(n),
             ki = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMajor> out(c.data(), mi, ni);
  if (!accumulate) out.setZero();
  // Transposition is expressed on the map, so Eigen picks the packed kernel.
  if (!trans_a && !trans_b) out.noalias() += Stored(a.data(), mi, ki) * Stored(b.data(), ki, ni);
  if (!trans_a && trans_b) out.noalias() += Stored(a.data(), mi, ki) * Stored(b.data(), ni, ki).transpose();
  if (trans_a && !trans_b) out.noalias() += Stored(a.data(), ki, mi).transpose() * Stored(b.data(), ki, ni);
  if (trans_a && trans_b) {
    out.noalias() += Stored(a.data(), ki, mi).transpose() * Stored(b.data(), ni, ki).transpose();
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t in_plane = g.in_channels * g.height * g.width;
  const std::size_t out_plane = g.out_channels * oh * ow;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.padding == 0;
  std::vector<double> col(pointwise ? 0 : rows * oh * ow);
  for (std::size_t b = 0; b < g.batch; ++b) {
    auto in_b = input.subspan(b * in_plane, in_plane);
    auto out_b = output.subspan(b * out_plane, out_plane);
    std::span<const double> cols = in_b;
    if (!pointwise) {
      im2col(in_b, g.in_channels, g.height, g.width, g.kernel, g.stride, g.padding, oh, ow, col);
      cols = col;
    }
    gemm(false, false, g.out_channels, oh * ow, rows, weight, cols, out_b, false);
    if (!bias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        double* dst = out_b.data() + o * oh * ow;
        for (std::size_t j = 0; j < oh * ow; ++j) dst[j] += bias[o];
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t in_plane = g.in_channels * g.height * g.width;
  const std::size_t out_plane = g.out_channels * oh * ow;
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.padding == 0;
  std::vector<double> col(pointwise ? 0 : rows * oh * ow);
  std::vector<double> dcol(pointwise || grad_input.empty() ? 0 : rows * oh * ow);
  for (std::size_t b = 0; b < g.batch; ++b) {
    auto in_b = input.subspan(b * in_plane, in_plane);
    auto go_b = grad_out.subspan(b * out_plane, out_plane);
    if (!grad_weight.empty()) {
      std::span<const double> cols = in_b;
      if (!pointwise) {
        im2col(in_b, g.in_channels, g.height, g.width, g.kernel, g.stride, g.padding, oh, ow,
               col);
        cols = col;
      }
      gemm(false, true, g.out_channels, rows, oh * ow, go_b, cols, grad_weight, true);
    }
    if (!grad_input.empty()) {
      auto gi_b = grad_input.subspan(b * in_plane, in_plane);
      if (pointwise) {
        gemm(true, false, rows, oh * ow, g.out_channels, weight, go_b, gi_b, true);
      } else {
        gemm(true, false, rows, oh * ow, g.out_channels, weight, go_b, dcol, false);
        col2im(dcol, g.in_channels, g.height, g.width, g.kernel, g.stride, g.padding, oh, ow,
               gi_b);
      }
    }
    if (!grad_bias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* src = go_b.data() + o * oh * ow;
        double acc = 0.0;
        for (std::size_t j = 0; j < oh * ow; ++j) acc += src[j];
        grad_bias[o] += acc;
      }
    }
  }
}

void depthwise_bank_forward(std::size_t batch, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t filters, std::size_t k,
                            std::span<const double> input, std::span<const double> stencils,
                            std::span<double> output) {
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(height), W = static_cast<std::ptrdiff_t>(width);
  const std::size_t plane = height * width;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    for (std::size_t f = 0; f < filters; ++f) {
      const double* src = input.data() + bc * plane;
      double* dst = output.data() + (bc * filters + f) * plane;
      const double* st = stencils.data() + f * k * k;
      std::fill(dst, dst + plane, 0.0);
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(k); ++ky) {
        const std::ptrdiff_t dy = ky - half;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(k); ++kx) {
          const double wv = st[ky * static_cast<std::ptrdiff_t>(k) + kx];
          if (wv == 0.0) continue;
          const std::ptrdiff_t dx = kx - half;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            double* drow = dst + y * W;
            const double* srow = src + (y + dy) * W + dx;
#pragma omp simd
            for (std::ptrdiff_t x = x0; x < x1; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

void depthwise_bank_backward(std::size_t batch, std::size_t channels, std::size_t height,
                             std::size_t width, std::size_t filters, std::size_t k,
                             std::span<const double> input, std::span<const double> stencils,
                             std::span<const double> grad_out, std::span<double> grad_input,
                             std::span<double> grad_stencils) {
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(height), W = static_cast<std::ptrdiff_t>(width);
  const std::size_t plane = height * width;
  const auto kk = static_cast<std::ptrdiff_t>(k);
  if (!grad_input.empty()) {
#pragma omp parallel for schedule(static)
    for (std::size_t bc = 0; bc < batch * channels; ++bc) {
      double* gin = grad_input.data() + bc * plane;
      for (std::size_t f = 0; f < filters; ++f) {
        const double* go = grad_out.data() + (bc * filters + f) * plane;
        const double* st = stencils.data() + f * k * k;
        for (std::ptrdiff_t ky = 0; ky < kk; ++ky) {
          const std::ptrdiff_t dy = ky - half;
          const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
          const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
          for (std::ptrdiff_t kx = 0; kx < kk; ++kx) {
            const double wv = st[ky * kk + kx];
            if (wv == 0.0) continue;
            const std::ptrdiff_t dx = kx - half;
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
            const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
            for (std::ptrdiff_t y = y0; y < y1; ++y) {
              const double* grow = go + y * W;
              double* irow = gin + (y + dy) * W + dx;
#pragma omp simd
              for (std::ptrdiff_t x = x0; x < x1; ++x) irow[x] += wv * grow[x];
            }
          }
        }
      }
    }
  }
  if (!grad_stencils.empty()) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t f = 0; f < filters; ++f) {
      for (std::size_t tap = 0; tap < k * k; ++tap) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(tap / k) - half;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(tap % k) - half;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
        double acc = 0.0;
        for (std::size_t bc = 0; bc < batch * channels; ++bc) {
          const double* src = input.data() + bc * plane;
          const double* go = grad_out.data() + (bc * filters + f) * plane;
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* grow = go + y * W;
            const double* srow = src + (y + dy) * W + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) acc += grow[x] * srow[x];
          }
        }
        grad_stencils[f * k * k + tap] += acc;
      }
    }
  }
}

void conv_transpose2d_forward(const DeconvGeometry& g, std::span<const double> input,
                              std::span<const double> weight, std::span<const double> bias,
                              std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t hw = g.height * g.width;
  const std::size_t rows = g.out_channels * g.kernel * g.kernel;
  const std::size_t in_plane = g.in_channels * hw;
  const std::size_t out_plane = g.out_channels * oh * ow;
  std::vector<double> col(rows * hw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    auto out_b = output.subspan(b * out_plane, out_plane);
    std::fill(out_b.begin(), out_b.end(), 0.0);
    gemm(true, false, rows, hw, g.in_channels, weight, input.subspan(b * in_plane, in_plane), col,
         false);
    col2im(col, g.out_channels, oh, ow, g.kernel, g.stride, 0, g.height, g.width, out_b);
    if (!bias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        double* dst = out_b.data() + o * oh * ow;
        for (std::size_t j = 0; j < oh * ow; ++j) dst[j] += bias[o];
      }
    }
  }
}

void conv_transpose2d_backward(const DeconvGeometry& g, std::span<const double> input,
                               std::span<const double> weight, std::span<const double> grad_out,
                               std::span<double> grad_input, std::span<double> grad_weight,
                               std::span<double> grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t hw = g.height * g.width;
  const std::size_t rows = g.out_channels * g.kernel * g.kernel;
  const std::size_t in_plane = g.in_channels * hw;
  const std::size_t out_plane = g.out_channels * oh * ow;
  std::vector<double> gcol(rows * hw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    auto go_b = grad_out.subspan(b * out_plane, out_plane);
    im2col(go_b, g.out_channels, oh, ow, g.kernel, g.stride, 0, g.height, g.width, gcol);
    if (!grad_input.empty()) {
      gemm(false, false, g.in_channels, hw, rows, weight, gcol,
           grad_input.subspan(b * in_plane, in_plane), true);
    }
    if (!grad_weight.empty()) {
      gemm(false, true, g.in_channels, rows, hw, input.subspan(b * in_plane, in_plane), gcol,
           grad_weight, true);
    }
    if (!grad_bias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* src = go_b.data() + o * oh * ow;
        double acc = 0.0;
        for (std::size_t j = 0; j < oh * ow; ++j) acc += src[j];
        grad_bias[o] += acc;
      }
    }
  }
}

void dft2(std::span<std::complex<double>> planes, std::size_t count, std::size_t h, std::size_t w,
          bool inverse) {
  const LineTransform rows(w, inverse);
  const LineTransform cols(h, inverse);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < count; ++p) {
    std::vector<std::complex<double>> scratch;
    std::vector<std::complex<double>> column(h);
    std::complex<double>* base = planes.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) rows.apply(base + y * w, scratch);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t y = 0; y < h; ++y) column[y] = base[y * w + x];
      cols.apply(column.data(), scratch);
      for (std::size_t y = 0; y < h; ++y) base[y * w + x] = column[y];
    }
  }
}

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

namespace {

// Input coordinate feeding output (oy, ox) through tap (ky, kx), or -1.
std::ptrdiff_t source_index(const ConvGeometry& g, std::size_t oy, std::size_t ox, std::size_t ky,
                            std::size_t kx) {
  const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                  static_cast<std::ptrdiff_t>(g.padding);
  const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                  static_cast<std::ptrdiff_t>(g.padding);
  if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
      ix >= static_cast<std::ptrdiff_t>(g.width)) {
    return -1;
  }
  return iy * static_cast<std::ptrdiff_t>(g.width) + ix;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t i = 0; i < g.in_channels; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto src = source_index(g, oy, ox, ky, kx);
                if (src < 0) continue;
                acc += input[(b * g.in_channels + i) * g.height * g.width +
                             static_cast<std::size_t>(src)] *
                       weight[((o * g.in_channels + i) * k + ky) * k + kx];
              }
          output[((b * g.out_channels + o) * oh + oy) * ow + ox] = acc;
        }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = grad_out[((b * g.out_channels + o) * oh + oy) * ow + ox];
          if (!grad_bias.empty()) grad_bias[o] += go;
          for (std::size_t i = 0; i < g.in_channels; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto src = source_index(g, oy, ox, ky, kx);
                if (src < 0) continue;
                const std::size_t in_idx =
                    (b * g.in_channels + i) * g.height * g.width + static_cast<std::size_t>(src);
                const std::size_t w_idx = ((o * g.in_channels + i) * k + ky) * k + kx;
                if (!grad_input.empty()) grad_input[in_idx] += go * weight[w_idx];
                if (!grad_weight.empty()) grad_weight[w_idx] += go * input[in_idx];
              }
        }
}

void depthwise_bank_forward(std::size_t batch, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t filters, std::size_t k,
                            std::span<const double> input, std::span<const double> stencils,
                            std::span<double> output) {
  const ConvGeometry g{1, 1, 1, height, width, k, 1, k / 2};
  for (std::size_t bc = 0; bc < batch * channels; ++bc)
    for (std::size_t f = 0; f < filters; ++f)
      serial::conv2d_forward(g, input.subspan(bc * height * width, height * width),
                     stencils.subspan(f * k * k, k * k), {},
                     output.subspan((bc * filters + f) * height * width, height * width));
}

void depthwise_bank_backward(std::size_t batch, std::size_t channels, std::size_t height,
                             std::size_t width, std::size_t filters, std::size_t k,
                             std::span<const double> input, std::span<const double> stencils,
                             std::span<const double> grad_out, std::span<double> grad_input,
                             std::span<double> grad_stencils) {
  const ConvGeometry g{1, 1, 1, height, width, k, 1, k / 2};
  const std::size_t plane = height * width;
  for (std::size_t bc = 0; bc < batch * channels; ++bc)
    for (std::size_t f = 0; f < filters; ++f)
      serial::conv2d_backward(g, input.subspan(bc * plane, plane), stencils.subspan(f * k * k, k * k),
                      grad_out.subspan((bc * filters + f) * plane, plane),
                      grad_input.empty() ? grad_input : grad_input.subspan(bc * plane, plane),
                      grad_stencils.empty() ? grad_stencils
                                            : grad_stencils.subspan(f * k * k, k * k),
                      {});
}

void conv_transpose2d_forward(const DeconvGeometry& g, std::span<const double> input,
                              std::span<const double> weight, std::span<const double> bias,
                              std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t j = 0; j < oh * ow; ++j)
        output[(b * g.out_channels + o) * oh * ow + j] = bias.empty() ? 0.0 : bias[o];
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t i = 0; i < g.in_channels; ++i)
      for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) {
          const double v = input[((b * g.in_channels + i) * g.height + y) * g.width + x];
          for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx)
                output[((b * g.out_channels + o) * oh + y * g.stride + ky) * ow + x * g.stride +
                       kx] += v * weight[((i * g.out_channels + o) * k + ky) * k + kx];
        }
}

void conv_transpose2d_backward(const DeconvGeometry& g, std::span<const double> input,
                               std::span<const double> weight, std::span<const double> grad_out,
                               std::span<double> grad_input, std::span<double> grad_weight,
                               std::span<double> grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  if (!grad_bias.empty()) {
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t o = 0; o < g.out_channels; ++o)
        for (std::size_t j = 0; j < oh * ow; ++j)
          grad_bias[o] += grad_out[(b * g.out_channels + o) * oh * ow + j];
  }
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t i = 0; i < g.in_channels; ++i)
      for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) {
          const std::size_t in_idx = ((b * g.in_channels + i) * g.height + y) * g.width + x;
          for (std::size_t o = 0; o < g.out_channels; ++o)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const double go = grad_out[((b * g.out_channels + o) * oh + y * g.stride + ky) *
                                               ow +
                                           x * g.stride + kx];
                const std::size_t w_idx = ((i * g.out_channels + o) * k + ky) * k + kx;
                if (!grad_input.empty()) grad_input[in_idx] += go * weight[w_idx];
                if (!grad_weight.empty()) grad_weight[w_idx] += go * input[in_idx];
              }
        }
}

void dft2(std::span<std::complex<double>> planes, std::size_t count, std::size_t h, std::size_t w,
          bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> out(h * w);
  for (std::size_t p = 0; p < count; ++p) {
    auto plane = planes.subspan(p * h * w, h * w);
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const double phase = sign * 2.0 * std::numbers::pi *
                                 (static_cast<double>((u * y) % h) / static_cast<double>(h) +
                                  static_cast<double>((v * x) % w) / static_cast<double>(w));
            acc += plane[y * w + x] * std::polar(1.0, phase);
          }
        out[u * w + v] = acc;
      }
    std::copy(out.begin(), out.end(), plane.begin());
  }
}

}  // namespace serial

}  // namespace stp::kernels
