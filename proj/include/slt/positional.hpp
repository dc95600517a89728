#pragma once

#include <span>

#include "slt/tensor.hpp"

namespace slt {

/// Sinusoidal absolute encoding: row k encodes position positions[k] with
/// sin on even columns and cos on odd columns, wavelengths 10000^(2i/d).
template <typename T>
Tensor<T> sinusoidal_encoding(std::span<const int> positions, std::size_t dim);

/// Rows for positions 0..count-1.
template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t count, std::size_t dim);

}  // namespace slt
