#include "csent/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "csent/kernels.hpp"
#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI::ops {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b,
                              const std::string& why = {}) {
  std::string msg = std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                    shape_str(b);
  if (!why.empty()) msg += " (" + why + ")";
  throw std::invalid_argument(msg);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const std::string& why) {
  throw std::invalid_argument(std::string(op) + ": invalid shape " + shape_str(a) + " (" + why +
                              ")");
}

void check_finite([[maybe_unused]] const char* op, [[maybe_unused]] const Tensor& out) {
#if !defined(NDEBUG) || defined(CSENT_CHECK_FINITE)
  const auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw std::runtime_error(std::string(op) + ": produced non-finite value " +
                               std::to_string(d[i]) + " at flat index " + std::to_string(i));
    }
  }
#endif
}

// Records `out` on the tape when any input needs a gradient.
template <class Backward>
Tensor finish(const char* op, std::vector<Tensor> inputs, Tensor out, Backward&& bw) {
  check_finite(op, out);
  Tape& tape = Tape::current();
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (needs && tape.recording()) {
    out.set_requires_grad(true);
    tape.push(Tape::Entry{op, std::move(inputs), out, std::forward<Backward>(bw)});
  }
  return out;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Broadcast layout for a binary op: out has the larger shape; each operand is
// indexed as i % n.
struct Broadcast {
  Shape out_shape;
  std::size_t n_out = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Broadcast bc;
  bc.n_a = a.numel();
  bc.n_b = b.numel();
  if (sa == sb || (bc.n_b == 1 && bc.n_a >= 1) || is_suffix(sb, sa)) {
    bc.out_shape = sa;
  } else if (bc.n_a == 1 || is_suffix(sa, sb)) {
    bc.out_shape = sb;
  } else {
    shape_error(op, sa, sb, "trailing dimensions must match");
  }
  bc.n_out = shape_numel(bc.out_shape);
  return bc;
}

// Accumulates g[i] * factor(i) into dst[i % n] with double partial sums.
template <class Factor>
void reduce_into(std::span<real> dst, std::span<const real> g, Factor factor) {
  const std::size_t n = dst.size();
  if (n == g.size()) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += static_cast<real>(g[i] * factor(i));
    return;
  }
  std::vector<double> acc(n, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) acc[i % n] += static_cast<double>(g[i]) * factor(i);
  for (std::size_t j = 0; j < n; ++j) dst[j] += static_cast<real>(acc[j]);
}

template <class Forward, class DerivA, class DerivB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Forward fwd, DerivA da,
              DerivB db) {
  const Broadcast bc = broadcast(op, a, b);
  Tensor out(bc.out_shape);
  auto o = out.data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < bc.n_out; ++i) o[i] = fwd(x[i % bc.n_a], y[i % bc.n_b]);
  return finish(op, {a, b}, out, [a = a, b = b, out, bc, da, db]() mutable {
    const auto g = std::as_const(out).grad();
    const auto x = std::as_const(a).data();
    const auto y = std::as_const(b).data();
    if (a.requires_grad()) {
      reduce_into(a.grad(), g, [&](std::size_t i) -> double {
        return da(x[i % bc.n_a], y[i % bc.n_b]);
      });
    }
    if (b.requires_grad()) {
      reduce_into(b.grad(), g, [&](std::size_t i) -> double {
        return db(x[i % bc.n_a], y[i % bc.n_b]);
      });
    }
  });
}

// Elementwise unary op; `deriv(x, y)` gets the input and output values.
template <class Forward, class Deriv>
Tensor unary(const char* op, const Tensor& x, Forward fwd, Deriv deriv) {
  Tensor out(x.shape());
  auto o = out.data();
  const auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
  return finish(op, {x}, out, [x = x, out, deriv]() mutable {
    const auto g = std::as_const(out).grad();
    const auto in = std::as_const(x).data();
    const auto y = std::as_const(out).data();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(in[i], y[i]);
  });
}

std::size_t normalize_axis(const char* op, const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) shape_error(op, x.shape(), "axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](real x, real y) -> real { return x + y; }, [](real, real) -> real { return 1.0f; },
      [](real, real) -> real { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](real x, real y) -> real { return x - y; }, [](real, real) -> real { return 1.0f; },
      [](real, real) -> real { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](real x, real y) -> real { return x * y; }, [](real, real y) -> real { return y; },
      [](real x, real) -> real { return x; });
}

Tensor scale(const Tensor& x, real factor) {
  return unary(
      "scale", x, [factor](real v) -> real { return v * factor; },
      [factor](real, real) -> real { return factor; });
}

Tensor add_scalar(const Tensor& x, real value) {
  return unary(
      "add_scalar", x, [value](real v) -> real { return v + value; }, [](real, real) -> real { return 1.0f; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](real v) -> real { return std::tanh(v); },
      [](real, real y) -> real { return 1.0f - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](real v) -> real { return v > 0.0f ? v : 0.0f; },
      [](real v, real) -> real { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](real v) -> real {
        return static_cast<real>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
      },
      [](real, real y) -> real { return y * (1.0f - y); });
}

Tensor gelu(const Tensor& x) {
  // tanh approximation
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      "gelu", x,
      [](real vf) -> real {
        const double v = vf;
        return static_cast<real>(0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v))));
      },
      [](real vf, real) -> real {
        const double v = vf;
        const double t = std::tanh(c * (v + k * v * v * v));
        const double dt = (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
        return static_cast<real>(0.5 * (1.0 + t) + 0.5 * v * dt);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](real v) -> real { return std::exp(v); }, [](real, real y) -> real { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](real v) -> real { return std::log(v); }, [](real v, real) -> real { return 1.0f / v; });
}

Tensor pow(const Tensor& x, real exponent) {
  return unary(
      "pow", x,
      [exponent](real v) -> real {
        return static_cast<real>(std::pow(static_cast<double>(v), static_cast<double>(exponent)));
      },
      [exponent](real v, real) -> real {
        if (v == 0.0f) return exponent == 1.0f ? 1.0f : 0.0f;
        return static_cast<real>(exponent * std::pow(static_cast<double>(v),
                                                      static_cast<double>(exponent) - 1.0));
      });
}

Tensor clamp_min(const Tensor& x, real floor) {
  return unary(
      "clamp_min", x, [floor](real v) -> real { return std::max(v, floor); },
      [](real, real) -> real { return 1.0f; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() == 2) {
    if (a.rank() < 1 || a.size(-1) != b.size(0)) shape_error("matmul", a.shape(), b.shape());
    const std::size_t k = b.size(0);
    const std::size_t n = b.size(1);
    const std::size_t m = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    Tensor out(out_shape);
    kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data().data(),
                  false);
    return finish("matmul", {a, b}, out, [a = a, b = b, out, m, n, k]() mutable {
      const real* g = std::as_const(out).grad().data();
      if (a.requires_grad()) {
        kernels::gemm(false, true, m, k, n, g, std::as_const(b).data().data(),
                      a.grad().data(), true);
      }
      if (b.requires_grad()) {
        kernels::gemm(true, false, k, n, m, std::as_const(a).data().data(), g,
                      b.grad().data(), true);
      }
    });
  }
  if (a.rank() == 3 && b.rank() == 3 && a.size(0) == b.size(0) && a.size(2) == b.size(1)) {
    const std::size_t batch = a.size(0);
    const std::size_t m = a.size(1);
    const std::size_t k = a.size(2);
    const std::size_t n = b.size(2);
    Tensor out(Shape{batch, m, n});
    for (std::size_t t = 0; t < batch; ++t) {
      kernels::gemm(false, false, m, n, k, a.data().data() + t * m * k,
                    b.data().data() + t * k * n, out.data().data() + t * m * n, false);
    }
    return finish("matmul", {a, b}, out, [a = a, b = b, out, batch, m, n, k]() mutable {
      const real* g = std::as_const(out).grad().data();
      for (std::size_t t = 0; t < batch; ++t) {
        if (a.requires_grad()) {
          kernels::gemm(false, true, m, k, n, g + t * m * n,
                        std::as_const(b).data().data() + t * k * n,
                        a.grad().data() + t * m * k, true);
        }
        if (b.requires_grad()) {
          kernels::gemm(true, false, k, n, m, std::as_const(a).data().data() + t * m * k,
                        g + t * m * n, b.grad().data() + t * k * n, true);
        }
      }
    });
  }
  shape_error("matmul", a.shape(), b.shape(),
              "expected [..., m, k] x [k, n] or [b, m, k] x [b, k, n]");
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) shape_error("transpose", x.shape(), "needs rank >= 2");
  const std::size_t r = x.size(-2);
  const std::size_t c = x.size(-1);
  const std::size_t batch = x.numel() / (r * c);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor out(out_shape);
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) o[t * r * c + j * r + i] = in[t * r * c + i * c + j];
    }
  }
  return finish("transpose", {x}, out, [x = x, out, batch, r, c]() mutable {
    const auto g = std::as_const(out).grad();
    auto gx = x.grad();
    for (std::size_t t = 0; t < batch; ++t) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[t * r * c + i * c + j] += g[t * r * c + j * r + i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  Tensor out(std::move(shape), std::vector<real>(x.data().begin(), x.data().end()));
  return finish("reshape", {x}, out, [x = x, out]() mutable {
    const auto g = std::as_const(out).grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis("slice", x, axis);
  const Shape& s = x.shape();
  if (start + length > s[ax] || length == 0) {
    shape_error("slice", s,
                "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                    ") on axis " + std::to_string(ax));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t span_in = s[ax] * inner;
  const std::size_t span_out = length * inner;
  Shape out_shape = s;
  out_shape[ax] = length;
  Tensor out(out_shape);
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t t = 0; t < outer; ++t) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(t * span_in + start * inner), span_out,
                o.begin() + static_cast<std::ptrdiff_t>(t * span_out));
  }
  return finish("slice", {x}, out, [x = x, out, outer, span_in, span_out, start, inner]() mutable {
    const auto g = std::as_const(out).grad();
    auto gx = x.grad();
    for (std::size_t t = 0; t < outer; ++t) {
      for (std::size_t i = 0; i < span_out; ++i) {
        gx[t * span_in + start * inner + i] += g[t * span_out + i];
      }
    }
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    pl.pop_back();
    if (pl != lead) shape_error("concat", parts[0].shape(), p.shape(), "leading dims differ");
    total += p.size(-1);
  }
  const std::size_t outer = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  auto o = out.data();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t w = p.size(-1);
    const auto in = p.data();
    for (std::size_t t = 0; t < outer; ++t) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(t * w), w,
                  o.begin() + static_cast<std::ptrdiff_t>(t * total + offset));
    }
    offsets.push_back(offset);
    offset += w;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return finish("concat", inputs, out, [inputs, out, offsets, outer, total]() mutable {
    const auto g = std::as_const(out).grad();
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (!inputs[p].requires_grad()) continue;
      const std::size_t w = inputs[p].size(-1);
      auto gx = inputs[p].grad();
      for (std::size_t t = 0; t < outer; ++t) {
        for (std::size_t j = 0; j < w; ++j) gx[t * w + j] += g[t * total + offsets[p] + j];
      }
    }
  });
}

namespace {

Tensor softmax_impl(const char* op, const Tensor& x, const Tensor* key_mask) {
  const std::size_t cols = x.size(-1);
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  std::size_t rows_per_mask = 1;
  const real* mask = nullptr;
  if (key_mask) {
    if (x.rank() != 3 || key_mask->rank() != 2 || key_mask->size(0) != x.size(0) ||
        key_mask->size(1) != cols) {
      shape_error(op, x.shape(), key_mask->shape(), "expected scores [b, q, k], mask [b, k]");
    }
    rows_per_mask = x.size(1);
    mask = key_mask->data().data();
  }
  kernels::softmax_rows(rows, cols, x.data().data(), out.data().data(), mask, rows_per_mask);
  return finish(op, {x}, out, [x = x, out, rows, cols]() mutable {
    const auto g = std::as_const(out).grad();
    const auto y = std::as_const(out).data();
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        dot += static_cast<double>(g[r * cols + j]) * y[r * cols + j];
      }
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t i = r * cols + j;
        gx[i] += static_cast<real>(y[i] * (g[i] - dot));
      }
    }
  });
}

}  // namespace

Tensor softmax(const Tensor& x) { return softmax_impl("softmax", x, nullptr); }

Tensor masked_softmax(const Tensor& scores, const Tensor& key_mask) {
  return softmax_impl("masked_softmax", scores, &key_mask);
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t cols = x.size(-1);
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  kernels::log_softmax_rows(rows, cols, x.data().data(), out.data().data());
  return finish("log_softmax", {x}, out, [x = x, out, rows, cols]() mutable {
    const auto g = std::as_const(out).grad();
    const auto y = std::as_const(out).data();
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t i = r * cols + j;
        gx[i] += static_cast<real>(g[i] - std::exp(static_cast<double>(y[i])) * gsum);
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (real v : x.data()) s += v;
  Tensor out = Tensor::scalar(static_cast<real>(s));
  return finish("sum", {x}, out, [x = x, out]() mutable {
    const real g = std::as_const(out).grad()[0];
    for (auto& v : x.grad()) v += g;
  });
}

Tensor mean(const Tensor& x) {
  const auto n = static_cast<double>(x.numel());
  double s = 0.0;
  for (real v : x.data()) s += v;
  Tensor out = Tensor::scalar(static_cast<real>(s / n));
  return finish("mean", {x}, out, [x = x, out, n]() mutable {
    const real g = static_cast<real>(std::as_const(out).grad()[0] / n);
    for (auto& v : x.grad()) v += g;
  });
}

namespace {

Tensor reduce_last(const char* op, const Tensor& x, bool average) {
  const std::size_t cols = x.size(-1);
  const std::size_t rows = x.numel() / cols;
  Shape out_shape = x.shape();
  out_shape.pop_back();
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  const auto in = x.data();
  auto o = out.data();
  const double denom = average ? static_cast<double>(cols) : 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += in[r * cols + j];
    o[r] = static_cast<real>(s / denom);
  }
  return finish(op, {x}, out, [x = x, out, rows, cols, denom]() mutable {
    const auto g = std::as_const(out).grad();
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const auto gr = static_cast<real>(g[r] / denom);
      for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += gr;
    }
  });
}

}  // namespace

Tensor sum_last(const Tensor& x) { return reduce_last("sum_last", x, false); }
Tensor mean_last(const Tensor& x) { return reduce_last("mean_last", x, true); }

Tensor embedding(const Tensor& table, std::span<const int> indices, const Shape& index_shape) {
  if (table.rank() != 2) shape_error("embedding", table.shape(), "table must be [rows, d]");
  if (shape_numel(index_shape) != indices.size()) {
    shape_error("embedding", index_shape, std::to_string(indices.size()) + " indices given");
  }
  const std::size_t rows = table.size(0);
  const std::size_t d = table.size(1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= rows) {
      throw std::out_of_range("embedding: index " + std::to_string(indices[i]) +
                              " at position " + std::to_string(i) + " outside table of " +
                              std::to_string(rows) + " rows");
    }
  }
  Shape out_shape = index_shape;
  out_shape.push_back(d);
  Tensor out(out_shape);
  const auto t = table.data();
  auto o = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(indices[i] * d), d,
                o.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return finish("embedding", {table}, out, [table = table, out, idx = std::move(idx), d]() mutable {
    const auto g = std::as_const(out).grad();
    auto gt = table.grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t base = static_cast<std::size_t>(idx[i]) * d;
      for (std::size_t j = 0; j < d; ++j) gt[base + j] += g[i * d + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  const std::size_t cols = x.size(-1);
  if (gamma.numel() != cols || beta.numel() != cols) {
    shape_error("layer_norm", x.shape(), gamma.shape(), "gamma/beta must match the last axis");
  }
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  auto stats = std::make_shared<std::vector<real>>(2 * rows);
  kernels::layer_norm_rows(rows, cols, x.data().data(), gamma.data().data(), beta.data().data(),
                           eps, out.data().data(), stats->data(), stats->data() + rows);
  return finish("layer_norm", {x, gamma, beta}, out,
                [x = x, gamma = gamma, beta = beta, out, stats, rows, cols]() mutable {
                  kernels::layer_norm_backward_rows(
                      rows, cols, std::as_const(x).data().data(),
                      std::as_const(gamma).data().data(), stats->data(), stats->data() + rows,
                      std::as_const(out).grad().data(),
                      x.requires_grad() ? x.grad().data() : nullptr,
                      gamma.requires_grad() ? gamma.grad().data() : nullptr,
                      beta.requires_grad() ? beta.grad().data() : nullptr);
                });
}

real dropout_uniform(std::uint64_t seed, std::uint64_t index) {
  return static_cast<real>(hash_uniform(seed, index));
}

Tensor dropout(const Tensor& x, real p, std::uint64_t seed, bool training) {
  if (!(p >= 0.0f && p < 1.0f)) {
    throw std::invalid_argument("dropout: probability " + std::to_string(p) +
                                " outside [0, 1)");
  }
  if (!training || p == 0.0f) return x;
  const real keep_scale = 1.0f / (1.0f - p);
  auto factors = std::make_shared<std::vector<real>>(x.numel());
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const real f = dropout_uniform(seed, i) >= p ? keep_scale : 0.0f;
    (*factors)[i] = f;
    o[i] = in[i] * f;
  }
  return finish("dropout", {x}, out, [x = x, out, factors]() mutable {
    const auto g = std::as_const(out).grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*factors)[i];
  });
}

namespace {

std::vector<double> row_norms(const char* op, const Tensor& x) {
  const std::size_t cols = x.size(-1);
  const std::size_t rows = x.numel() / cols;
  const auto d = x.data();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += static_cast<double>(d[r * cols + j]) * d[r * cols + j];
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) {
      throw std::domain_error(std::string(op) + ": zero-norm vector at row " + std::to_string(r));
    }
  }
  return norms;
}

}  // namespace

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("cosine_similarity", a.shape(), b.shape());
  const std::size_t cols = a.size(-1);
  const std::size_t rows = a.numel() / cols;
  auto na = std::make_shared<std::vector<double>>(row_norms("cosine_similarity", a));
  auto nb = std::make_shared<std::vector<double>>(row_norms("cosine_similarity", b));
  Shape out_shape = a.shape();
  out_shape.pop_back();
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  const auto x = a.data();
  const auto y = b.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += static_cast<double>(x[r * cols + j]) * y[r * cols + j];
    o[r] = static_cast<real>(dot / ((*na)[r] * (*nb)[r]));
  }
  return finish("cosine_similarity", {a, b}, out, [a = a, b = b, out, na, nb, rows, cols]() mutable {
    const auto g = std::as_const(out).grad();
    const auto c = std::as_const(out).data();
    const auto x = std::as_const(a).data();
    const auto y = std::as_const(b).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double inv = 1.0 / ((*na)[r] * (*nb)[r]);
      const double ca = c[r] / ((*na)[r] * (*na)[r]);
      const double cb = c[r] / ((*nb)[r] * (*nb)[r]);
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t i = r * cols + j;
        if (a.requires_grad()) a.grad()[i] += static_cast<real>(g[r] * (y[i] * inv - ca * x[i]));
        if (b.requires_grad()) b.grad()[i] += static_cast<real>(g[r] * (x[i] * inv - cb * y[i]));
      }
    }
  });
}

Tensor l2_normalize(const Tensor& x) {
  const std::size_t cols = x.size(-1);
  const std::size_t rows = x.numel() / cols;
  auto norms = std::make_shared<std::vector<double>>(row_norms("l2_normalize", x));
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      o[r * cols + j] = static_cast<real>(in[r * cols + j] / (*norms)[r]);
    }
  }
  return finish("l2_normalize", {x}, out, [x = x, out, norms, rows, cols]() mutable {
    const auto g = std::as_const(out).grad();
    const auto y = std::as_const(out).data();
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += static_cast<double>(g[r * cols + j]) * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t i = r * cols + j;
        gx[i] += static_cast<real>((g[i] - y[i] * dot) / (*norms)[r]);
      }
    }
  });
}

Tensor select_rows(std::span<const std::uint8_t> take_a, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("select_rows", a.shape(), b.shape());
  const std::size_t rows = a.size(0);
  if (take_a.size() != rows) {
    shape_error("select_rows", a.shape(), std::to_string(take_a.size()) + " selectors given");
  }
  const std::size_t width = a.numel() / rows;
  Tensor out(a.shape());
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = take_a[r] ? a.data() : b.data();
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * width), width,
                o.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  std::vector<std::uint8_t> sel(take_a.begin(), take_a.end());
  return finish("select_rows", {a, b}, out, [a = a, b = b, out, sel = std::move(sel), width]() mutable {
    const auto g = std::as_const(out).grad();
    for (std::size_t r = 0; r < sel.size(); ++r) {
      Tensor& dst = sel[r] ? a : b;
      if (!dst.requires_grad()) continue;
      auto gd = dst.grad();
      for (std::size_t j = 0; j < width; ++j) gd[r * width + j] += g[r * width + j];
    }
  });
}

Tensor masked_mean(const Tensor& hidden, const Tensor& mask) {
  if (hidden.rank() != 3 || mask.rank() != 2 || mask.size(0) != hidden.size(0) ||
      mask.size(1) != hidden.size(1)) {
    shape_error("masked_mean", hidden.shape(), mask.shape(), "expected [b, l, d] and [b, l]");
  }
  const std::size_t batch = hidden.size(0);
  const std::size_t len = hidden.size(1);
  const std::size_t d = hidden.size(2);
  const auto h = hidden.data();
  const auto m = mask.data();
  auto counts = std::make_shared<std::vector<double>>(batch, 0.0);
  Tensor out(Shape{batch, d});
  auto o = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> acc(d, 0.0);
    for (std::size_t l = 0; l < len; ++l) {
      if (m[b * len + l] == 0.0f) continue;
      (*counts)[b] += 1.0;
      for (std::size_t j = 0; j < d; ++j) acc[j] += h[(b * len + l) * d + j];
    }
    if ((*counts)[b] == 0.0) {
      throw std::invalid_argument("masked_mean: row " + std::to_string(b) + " has no real positions");
    }
    for (std::size_t j = 0; j < d; ++j) o[b * d + j] = static_cast<real>(acc[j] / (*counts)[b]);
  }
  return finish("masked_mean", {hidden}, out, [hidden = hidden, mask = mask, out, counts, batch, len, d]() mutable {
    const auto g = std::as_const(out).grad();
    const auto m = std::as_const(mask).data();
    auto gh = hidden.grad();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t l = 0; l < len; ++l) {
        if (m[b * len + l] == 0.0f) continue;
        for (std::size_t j = 0; j < d; ++j) {
          gh[(b * len + l) * d + j] += static_cast<real>(g[b * d + j] / (*counts)[b]);
        }
      }
    }
  });
}

}  // namespace csent::inline CSENT_ABI::ops
