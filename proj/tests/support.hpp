#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "slt/rng.hpp"
#include "slt/tensor.hpp"

namespace slt::testing {

// Runs `body` on `cases` independently seeded generators; bodies report
// failures through doctest.
inline void for_all(std::size_t cases, std::uint64_t seed, const std::function<void(Rng&, std::size_t)>& body) {
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(derive_seed(seed, 0x74657374ULL, i));
    body(rng, i);
  }
}

template <typename T = double>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(uniform(rng, lo, hi));
  return t;
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace slt::testing
