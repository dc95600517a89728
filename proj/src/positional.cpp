#include "slt/positional.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace slt {

template <typename T>
Tensor<T> sinusoidal_encoding(std::span<const int> positions, std::size_t dim) {
  Tensor<T> out(Shape{positions.size(), dim});
  for (std::size_t k = 0; k < positions.size(); ++k) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double rate = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(dim));
      const double angle = positions[k] * rate;
      out(k, c) = static_cast<T>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return out;
}

template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t count, std::size_t dim) {
  std::vector<int> pos(count);
  std::iota(pos.begin(), pos.end(), 0);
  return sinusoidal_encoding<T>(std::span<const int>(pos), dim);
}

template Tensor<float> sinusoidal_encoding<float>(std::span<const int>, std::size_t);
template Tensor<double> sinusoidal_encoding<double>(std::span<const int>, std::size_t);
template Tensor<float> sinusoidal_encoding<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_encoding<double>(std::size_t, std::size_t);

}  // namespace slt
