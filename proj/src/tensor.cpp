#include "csent/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace csent::inline CSENT_ABI {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), 0.0f);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<real>{value}, requires_grad);
}

Tensor Tensor::full(Shape shape, real value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

namespace {
void require_defined(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw std::logic_error("tensor: use of an undefined tensor");
}
}  // namespace

const Shape& Tensor::shape() const {
  require_defined(impl_);
  return impl_->shape;
}

std::size_t Tensor::size(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for " +
                            shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const {
  require_defined(impl_);
  return impl_->data.size();
}

std::span<real> Tensor::data() {
  require_defined(impl_);
  return impl_->data;
}

std::span<const real> Tensor::data() const {
  require_defined(impl_);
  return impl_->data;
}

real Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  require_defined(impl_);
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::ensure_grad() {
  require_defined(impl_);
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0f);
}

void Tensor::zero_grad() {
  require_defined(impl_);
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::clear_grad() {
  require_defined(impl_);
  impl_->grad.clear();
}

std::span<real> Tensor::grad() {
  require_defined(impl_);
  return impl_->grad;
}

std::span<const real> Tensor::grad() const {
  require_defined(impl_);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  require_defined(impl_);
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const {
  require_defined(impl_);
  return Tensor(impl_->shape, impl_->data, false);
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::push(Entry entry) { entries_.push_back(std::move(entry)); }

void backward(const Tensor& loss) {
  Tape& tape = Tape::current();
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  if (tape.empty()) {
    throw std::logic_error("backward: tape is empty (already consumed or nothing recorded)");
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not depend on any requires_grad tensor");
  }
  Tensor seed = loss;
  seed.ensure_grad();
  seed.grad()[0] = 1.0f;

  auto& entries = tape.entries_;
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    // Entries whose output never received a gradient are not reachable from the loss.
    if (!it->output.has_grad()) continue;
    for (auto& in : it->inputs) {
      if (in.requires_grad()) in.ensure_grad();
    }
    it->backward();
  }
  tape.clear();
}

}  // namespace csent
