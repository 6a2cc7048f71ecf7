#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "stp/tensor.hpp"

namespace stp {

enum class BinaryKind { add, sub, mul, div };
enum class UnaryKind { sigmoid, tanh, relu, neg, square, exp };
enum class Padding { same, valid };

// Elementwise arithmetic. Shapes must match exactly; the only broadcast is
// tensor-vs-scalar.
Tensor elementwise(const Tensor& a, const Tensor& b, BinaryKind kind);
Tensor elementwise(const Tensor& a, double b, BinaryKind kind);
Tensor unary(const Tensor& a, UnaryKind kind);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryKind::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryKind::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryKind::mul); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryKind::div); }
inline Tensor add(const Tensor& a, double b) { return elementwise(a, b, BinaryKind::add); }
inline Tensor mul(const Tensor& a, double b) { return elementwise(a, b, BinaryKind::mul); }
inline Tensor sigmoid(const Tensor& a) { return unary(a, UnaryKind::sigmoid); }
inline Tensor tanh(const Tensor& a) { return unary(a, UnaryKind::tanh); }
inline Tensor relu(const Tensor& a) { return unary(a, UnaryKind::relu); }
inline Tensor neg(const Tensor& a) { return unary(a, UnaryKind::neg); }
inline Tensor square(const Tensor& a) { return unary(a, UnaryKind::square); }
inline Tensor exp(const Tensor& a) { return unary(a, UnaryKind::exp); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// 1 - a, the complement used by gates.
Tensor one_minus(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// [m,k]·[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched [B,m,k]·[B,k,n], or [B,m,k]·[B,n,k]ᵀ when transpose_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
// x[N,in]·w[in,out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& a, const Shape& shape);
/// out[i] = a[index[i]] (flat indices); backward scatter-adds.
Tensor gather(const Tensor& a, const Shape& shape,
              std::shared_ptr<const std::vector<std::size_t>> index);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Stacks equally-shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

// Softmax over the last axis.
Tensor softmax(const Tensor& a);
// Per-row normalization of x[N,c] with affine gamma[c], beta[c].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Cross-correlation (no kernel flip) of input[b,ci,h,w] with kernel[co,ci,k,k].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding,
              std::size_t stride = 1);
/// Every stencil of stencils[m,k,k] applied to every channel of input[b,c,h,w]
/// with zero same-padding; output[b, c*m + f].
Tensor depthwise_bank(const Tensor& input, const Tensor& stencils);
/// input[b,ci,h,w], kernel[ci,co,k,k], no padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        std::size_t stride);
/// Bilinear upsampling by an integer factor with half-pixel centres
/// (align_corners = false) and edge clamping.
Tensor upsample_bilinear(const Tensor& input, std::size_t factor);

/// Complex 2D DFT over the trailing two axes of a packed tensor [2, ..., h, w]
/// (real block then imaginary block). Unnormalized; the inverse uses e^{+i}.
Tensor dft2(const Tensor& packed, bool inverse);

}  // namespace stp
