#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <utility>
#include <random>
#include <vector>

#include "csent/tensor.hpp"

namespace testing {

template <typename T = csent::real>
std::vector<T> normal_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

inline csent::Tensor random_tensor(csent::Shape shape, std::uint64_t seed, double scale = 1.0,
                                   bool requires_grad = true) {
  const auto n = csent::shape_numel(shape);
  return csent::Tensor(std::move(shape), normal_values(n, seed, scale), requires_grad);
}

template <typename T>
bool bit_equal(std::span<const T> a, std::span<const T> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return bit_equal(std::span<const T>(a), std::span<const T>(b));
}

inline bool bit_equal(const csent::Tensor& a, const csent::Tensor& b) {
  return a.shape() == b.shape() && bit_equal(std::as_const(a).data(), std::as_const(b).data());
}

}  // namespace testing
