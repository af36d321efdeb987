#pragma once

// Dense real tensors with a reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage, like a
// framework tensor. Use clone() for an independent copy. Ops that see at
// least one input with requires_grad() append an entry to the thread's Tape;
// backward() replays the tape in reverse and then clears it.

#include "csent/real.hpp"
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace csent::inline CSENT_ABI {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor full(Shape shape, real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Size of `axis`; negative axes count from the end.
  std::size_t size(int axis) const;
  std::size_t numel() const;

  std::span<real> data();
  std::span<const real> data() const;
  real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  /// Allocates a zero gradient buffer if none exists yet.
  void ensure_grad();
  void zero_grad();
  /// Releases the gradient buffer so has_grad() is false again.
  void clear_grad();
  std::span<real> grad();
  std::span<const real> grad() const;

  /// Deep copy of values (and requires_grad flag); gradient is not copied.
  Tensor clone() const;
  /// Deep copy of values that never records on the tape.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

void backward(const Tensor& loss);

class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  /// The calling thread's tape.
  static Tape& current();

  bool recording() const { return pause_depth_ == 0; }
  void push(Entry entry);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  friend class NoGradGuard;
  friend void backward(const Tensor& loss);
  std::vector<Entry> entries_;
  int pause_depth_ = 0;
};

/// Suspends recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { ++Tape::current().pause_depth_; }
  ~NoGradGuard() { --Tape::current().pause_depth_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Seeds d(loss)/d(loss) = 1, runs every reachable tape entry once in reverse
/// order, accumulating into requires_grad tensors, then clears the tape.
/// Throws if `loss` is not a scalar or the tape is empty.
void backward(const Tensor& loss);

}  // namespace csent
