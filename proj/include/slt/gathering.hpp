#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slt/autograd.hpp"

namespace slt {

enum class GatherVariant { ContentAware, Centered, Sparse, None };

GatherVariant parse_gather_variant(std::string_view name);
std::string to_string(GatherVariant v);

/// Frames in a clip beyond the l_r neighbors: the anchor itself.
inline constexpr int kAnchorFrames = 1;

struct GatherConfig {
  GatherVariant variant = GatherVariant::ContentAware;
  /// Half-width of the window that similarity mass is taken from.
  int window = 16;
  /// Region size factor; l_r = round(gamma * window).
  double gamma = 1.0;

  int region_size() const;
  int clip_length() const { return variant == GatherVariant::None ? 1 : region_size() + kAnchorFrames; }
  /// Largest |source - anchor| any variant can produce.
  int max_offset() const;
};

/// Per-anchor clip extent. `real_minus`/`real_plus` are the unrounded
/// gamma * window * mass values, before and after the anchor.
struct RegionBound {
  int minus = 0;
  int plus = 0;
  double real_minus = 0.0;
  double real_plus = 0.0;
};

class GatherError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// s = F Fᵀ / sqrt(d) for F of shape (M, d).
template <typename T>
Tensor<T> similarity_matrix(const Tensor<T>& features);

/// Row-wise softmax restricted to max(0,t-l) <= j <= min(t+l, M-1), j != t.
/// Everything outside the window, including the diagonal, is exactly zero.
template <typename T>
Tensor<T> masked_neighbor_distribution(const Tensor<T>& similarity, int window);

/// Splits l_r = round(gamma * window) into frames before/after anchor t in
/// proportion to the distribution mass on either side, then shifts the
/// window inward at the sequence edges so it always spans l_r + 1 frames.
template <typename T>
RegionBound region_bounds(std::span<const T> distribution_row, int anchor, int window, double gamma);

/// Source frames of every clip, flattened anchor-major.
struct ClipLayout {
  std::size_t anchors = 0;
  std::size_t clip_length = 0;
  std::vector<int> source;
  /// source - anchor, the relative position of each clip element.
  std::vector<int> offset;
  /// Filled for the contiguous variants.
  std::vector<RegionBound> bounds;

  std::span<const int> sources_of(std::size_t anchor) const {
    return {source.data() + anchor * clip_length, clip_length};
  }
};

/// Contiguous layout from per-anchor bounds: clip t covers [t - minus, t + plus].
ClipLayout layout_from_bounds(std::span<const RegionBound> bounds);

/// Symmetric window of l_r + 1 frames around each anchor, shifted inward at edges.
std::vector<RegionBound> centered_bounds(std::size_t frames, int region_size);

/// Decides which frames every anchor gathers, according to the variant.
template <typename T>
ClipLayout plan_clips(const Tensor<T>& features, const GatherConfig& config);

/// Gathered neighborhoods, values of shape (M, clip_length, d).
template <typename T>
struct ClipTensor {
  Var<T> values;
  ClipLayout layout;
};

template <typename T>
ClipTensor<T> gather_clips(Var<T> features, ClipLayout layout);

}  // namespace slt
