#include "stp/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace stp {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}

namespace detail {

std::span<double> TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

void merge_tapes(const std::shared_ptr<Tape>& into, std::shared_ptr<Tape> from) {
  for (auto& weak : from->nodes) {
    if (auto node = weak.lock()) {
      node->tape = into;
      into->nodes.push_back(node);
    }
  }
  from->nodes.clear();
}

Tensor finish(Shape shape, std::vector<double> data, const Tensor* begin, const Tensor* end,
              BackwardFn backward) {
  if (shape_numel(shape) != data.size()) {
    throw std::logic_error("make_result: data length does not match " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);

  bool tracked = false;
  for (auto it = begin; it != end; ++it) tracked = tracked || (it->defined() && it->requires_grad());
  if (!tracked) return Tensor(std::move(impl));

  std::shared_ptr<Tape> tape;
  for (auto it = begin; it != end; ++it) {
    if (!it->defined() || !it->requires_grad()) continue;
    impl->parents.push_back(it->impl());
    const std::shared_ptr<Tape> parent_tape = it->impl()->tape;
    if (!parent_tape) continue;
    if (!tape) {
      tape = parent_tape;
    } else if (tape != parent_tape) {
      merge_tapes(tape, parent_tape);
    }
  }
  if (!tape) tape = std::make_shared<Tape>();
  impl->requires_grad = true;
  impl->backward = std::move(backward);
  impl->tape = tape;
  tape->nodes.push_back(impl);
  return Tensor(std::move(impl));
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   BackwardFn backward) {
  return finish(std::move(shape), std::move(data), inputs.begin(), inputs.end(), std::move(backward));
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
  return finish(std::move(shape), std::move(data), inputs.data(), inputs.data() + inputs.size(),
                std::move(backward));
}

bool any_requires_grad(std::initializer_list<Tensor> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

std::span<double> grad_sink(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  t.impl()->reached = true;
  return t.impl()->grad_buffer();
}

}  // namespace detail

namespace {

std::shared_ptr<detail::TensorImpl> new_impl(const Shape& shape, std::vector<double> values,
                                             bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::ones(const Shape& shape, bool requires_grad) {
  return full(shape, 1.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(new_impl(shape, std::vector<double>(shape_numel(shape), value), requires_grad));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_impl(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_impl({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) + " of " +
                            shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_->is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.clear();
  return *this;
}

bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }

std::vector<double> Tensor::grad() const {
  if (has_grad()) return impl_->grad;
  return std::vector<double>(numel(), 0.0);
}

void Tensor::zero_grad() { impl_->grad.clear(); }

bool Tensor::is_leaf() const { return impl_->is_leaf(); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) return;
  if (impl_->is_leaf()) {
    impl_->grad_buffer()[0] += 1.0;
    return;
  }
  auto& nodes = impl_->tape->nodes;
  for (auto& weak : nodes) {
    if (auto node = weak.lock()) {
      node->grad.assign(node->data.size(), 0.0);
      node->reached = false;
    }
  }
  impl_->grad[0] = 1.0;
  impl_->reached = true;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto node = it->lock();
    if (!node || !node->reached || !node->backward) continue;
    node->backward(node->grad);
  }
}

Tensor Tensor::detach() const {
  return Tensor(new_impl(impl_->shape, impl_->data, false));
}

Tensor Tensor::clone() const {
  return Tensor(new_impl(impl_->shape, impl_->data, impl_->requires_grad));
}

}  // namespace stp
