#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct TensorImpl;
struct Tape;

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;

  // Non-leaf bookkeeping. Leaves have no tape and no parents.
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
  std::shared_ptr<Tape> tape;
  bool reached = false;

  bool is_leaf() const { return tape == nullptr; }
  std::span<double> grad_buffer();
};

/// Ordered record of the non-leaf nodes created by one forward pass. Nodes
/// are appended as they are created, so every node's inputs precede it.
struct Tape {
  std::vector<std::weak_ptr<TensorImpl>> nodes;
};

}  // namespace detail

/// Dense row-major float64 array with optional reverse-mode gradient tracking.
///
/// Tensor is a handle: copies share storage and gradient. Use clone() or
/// detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor ones(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();
  bool is_leaf() const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate (+=)
  /// across calls; intermediate gradients are recomputed each call.
  void backward() const;

  /// Same values, no graph, no gradient tracking.
  Tensor detach() const;
  /// Independent leaf copy that keeps the requires_grad flag.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

/// Builds the result of a differentiable op. The backward closure is only
/// kept when at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn backward);

bool any_requires_grad(std::initializer_list<Tensor> inputs);

/// Gradient sink for an op input, or an empty span when it does not track.
std::span<double> grad_sink(const Tensor& t);

}  // namespace detail

}  // namespace stp
