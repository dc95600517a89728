#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "slt/autograd.hpp"

namespace slt {

/// Fill value for masked attention scores. Finite so that softmax and its
/// gradient stay finite; a fully masked row comes out uniform.
inline constexpr double kMaskValue = -1e9;

/// Plain (non-differentiable) products used outside graphs.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

namespace ops {

// Leading axes of `a` fold into rows; `b` is rank 2.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
// a · bᵀ, both folded to rank 2.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
/// Adds a length-cols vector to every row.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);

template <typename T>
Var<T> softmax_rows(Var<T> a);
template <typename T>
Var<T> log_softmax_rows(Var<T> a);
/// Normalizes each row over the last axis, then applies per-feature gain/bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
template <typename T>
Var<T> relu(Var<T> x);

/// Valid 1-D convolution along axis 1 of x: (B, n, c_in) -> (B, n-k+1, c_out).
/// Weight layout is (k*c_in, c_out), row index = tap*c_in + channel.
template <typename T>
Var<T> conv1d_valid(Var<T> x, Var<T> weight, Var<T> bias, std::size_t kernel);
/// Max over axis 1: (B, n, c) -> (B, c). Ties resolve to the earliest step.
template <typename T>
Var<T> max_over_axis1(Var<T> x);

/// out[i] = table[idx[i]], out shape (idx.size(), cols).
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> idx);
/// out[k] = x(rows[k], cols[k]) reshaped to `shape`.
template <typename T>
Var<T> gather_elements(Var<T> x, std::span<const int> rows, std::span<const int> cols, Shape shape);
/// Replaces entries where mask != 0 with `value`; those entries get no gradient.
template <typename T>
Var<T> masked_fill(Var<T> x, std::span<const std::uint8_t> mask, T value = T(kMaskValue));

/// Sum of -logp(i, targets[i]) over rows whose target differs from ignore_index.
template <typename T>
Var<T> nll_loss(Var<T> logp, std::span<const int> targets, int ignore_index = -1);
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t len);
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
/// Inverted dropout; identity when p == 0.
template <typename T>
Var<T> dropout(Var<T> x, T p, std::mt19937_64& rng);

}  // namespace ops
}  // namespace slt
