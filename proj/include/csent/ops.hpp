#pragma once

// Differentiable tensor ops. Every op validates shapes and throws
// std::invalid_argument naming itself and the offending shapes.
//
// Broadcasting (add/sub/mul): the smaller operand's shape must equal a
// trailing suffix of the larger one's (or be a single element); it is then
// repeated over the leading dimensions.

#include "csent/real.hpp"
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "csent/tensor.hpp"

namespace csent::inline CSENT_ABI::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real factor);
Tensor add_scalar(const Tensor& x, real value);

Tensor tanh(const Tensor& x);
/// relu'(0) is taken as 0.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// x^exponent. At x == 0 the derivative is taken as 0 for exponent != 1.
Tensor pow(const Tensor& x, real exponent);
/// max(x, floor) in the forward pass; the gradient passes through unchanged.
Tensor clamp_min(const Tensor& x, real floor);

/// [..., m, k] x [k, n] -> [..., m, n], or batched [b, m, k] x [b, k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// Concatenates along the last axis.
Tensor concat(std::span<const Tensor> parts);

Tensor softmax(const Tensor& x);
/// Softmax over the last axis of scores [b, q, k] with key_mask [b, k] (1 = keep).
/// Masked keys get probability exactly 0.
Tensor masked_softmax(const Tensor& scores, const Tensor& key_mask);
Tensor log_softmax(const Tensor& x);

/// Full reductions to shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reductions over the last axis.
Tensor sum_last(const Tensor& x);
Tensor mean_last(const Tensor& x);

/// Row gather: table [rows, d], indices of shape `index_shape` -> index_shape + [d].
Tensor embedding(const Tensor& table, std::span<const int> indices, const Shape& index_shape);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = 1e-5f);

/// Inverted dropout with a counter-based mask: entry i is kept iff
/// uniform(seed, i) >= p, and kept entries are scaled by 1/(1-p). The same
/// seed always reproduces the same mask. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, real p, std::uint64_t seed, bool training);

/// Cosine similarity over the last axis. Throws on a zero-norm row.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// Scales each last-axis row to unit L2 norm. Throws on a zero-norm row.
Tensor l2_normalize(const Tensor& x);

/// Row-wise select over the first axis: out[r] = take_a[r] ? a[r] : b[r].
Tensor select_rows(std::span<const std::uint8_t> take_a, const Tensor& a, const Tensor& b);

/// Mean of hidden [b, l, d] over positions whose mask [b, l] entry is 1 -> [b, d].
Tensor masked_mean(const Tensor& hidden, const Tensor& mask);

/// Uniform [0, 1) draw used by dropout; exposed for tests.
real dropout_uniform(std::uint64_t seed, std::uint64_t index);

}  // namespace csent::inline CSENT_ABI::ops
