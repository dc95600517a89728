#include "slt/gathering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slt/ops.hpp"

namespace slt {

GatherVariant parse_gather_variant(std::string_view name) {
  if (name == "content_aware") return GatherVariant::ContentAware;
  if (name == "centered") return GatherVariant::Centered;
  if (name == "sparse") return GatherVariant::Sparse;
  if (name == "none") return GatherVariant::None;
  throw std::invalid_argument("unknown gathering variant '" + std::string(name) +
                              "' (expected content_aware, centered, sparse or none)");
}

std::string to_string(GatherVariant v) {
  switch (v) {
    case GatherVariant::ContentAware: return "content_aware";
    case GatherVariant::Centered: return "centered";
    case GatherVariant::Sparse: return "sparse";
    case GatherVariant::None: return "none";
  }
  return "?";
}

int GatherConfig::region_size() const {
  return static_cast<int>(std::lround(gamma * window));
}

int GatherConfig::max_offset() const {
  switch (variant) {
    case GatherVariant::None: return 0;
    case GatherVariant::Sparse: return std::max(window, region_size());
    default: return region_size();
  }
}

template <typename T>
Tensor<T> similarity_matrix(const Tensor<T>& features) {
  if (features.rank() != 2 || features.rows() == 0 || features.cols() == 0) {
    throw ShapeError("similarity_matrix: expected (M>0, d>0), got " + shape_str(features.shape()));
  }
  Tensor<T> s = matmul_nt(features, features);
  const T scale = T(1) / std::sqrt(static_cast<T>(features.cols()));
  for (auto& v : s.values()) v *= scale;
  return s;
}

template <typename T>
Tensor<T> masked_neighbor_distribution(const Tensor<T>& similarity, int window) {
  const std::size_t m = similarity.rows();
  if (similarity.rank() != 2 || similarity.cols() != m) {
    throw ShapeError("masked_neighbor_distribution: expected square matrix, got " + shape_str(similarity.shape()));
  }
  if (window < 1) throw GatherError("masked_neighbor_distribution: window must be >= 1");
  if (m < 2) throw GatherError("masked_neighbor_distribution: a single frame has no neighbors");
  Tensor<T> d(similarity.shape());
  const int mi = static_cast<int>(m);
  for (int t = 0; t < mi; ++t) {
    const int lo = std::max(0, t - window), hi = std::min(t + window, mi - 1);
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = lo; j <= hi; ++j)
      if (j != t) mx = std::max(mx, similarity(t, j));
    T z = 0;
    for (int j = lo; j <= hi; ++j)
      if (j != t) z += (d(t, j) = std::exp(similarity(t, j) - mx));
    for (int j = lo; j <= hi; ++j) d(t, j) /= z;
  }
  return d;
}

template <typename T>
RegionBound region_bounds(std::span<const T> row, int anchor, int window, double gamma) {
  const int m = static_cast<int>(row.size());
  const int region = static_cast<int>(std::lround(gamma * window));
  if (m < region + kAnchorFrames) {
    throw GatherError("sequence shorter than clip: " + std::to_string(m) + " frames < l_r + 1 = " +
                      std::to_string(region + kAnchorFrames));
  }
  if (anchor < 0 || anchor >= m) throw GatherError("region_bounds: anchor " + std::to_string(anchor) + " out of range");
  double before = 0.0, after = 0.0;
  for (int j = 0; j < anchor; ++j) before += static_cast<double>(row[j]);
  for (int j = anchor + 1; j < m; ++j) after += static_cast<double>(row[j]);

  RegionBound b;
  b.real_minus = gamma * window * before;
  b.real_plus = gamma * window * after;
  b.minus = std::clamp(static_cast<int>(std::lround(b.real_minus)), 0, region);
  b.plus = region - b.minus;
  if (anchor - b.minus < 0) {
    b.plus += b.minus - anchor;
    b.minus = anchor;
  }
  if (anchor + b.plus > m - 1) {
    b.minus += anchor + b.plus - (m - 1);
    b.plus = m - 1 - anchor;
  }
  return b;
}

ClipLayout layout_from_bounds(std::span<const RegionBound> bounds) {
  ClipLayout layout;
  layout.anchors = bounds.size();
  layout.clip_length = bounds.empty() ? 0 : static_cast<std::size_t>(bounds[0].minus + bounds[0].plus + kAnchorFrames);
  layout.bounds.assign(bounds.begin(), bounds.end());
  for (std::size_t t = 0; t < bounds.size(); ++t) {
    const RegionBound& b = bounds[t];
    if (static_cast<std::size_t>(b.minus + b.plus + kAnchorFrames) != layout.clip_length) {
      throw GatherError("layout_from_bounds: anchor " + std::to_string(t) + " has a different clip length");
    }
    const int anchor = static_cast<int>(t);
    const int first = anchor - b.minus;
    if (first < 0 || anchor + b.plus >= static_cast<int>(bounds.size())) {
      throw GatherError("layout_from_bounds: clip of anchor " + std::to_string(t) + " leaves the sequence");
    }
    for (int k = 0; k < static_cast<int>(layout.clip_length); ++k) {
      layout.source.push_back(first + k);
      layout.offset.push_back(first + k - anchor);
    }
  }
  return layout;
}

std::vector<RegionBound> centered_bounds(std::size_t frames, int region_size) {
  const int m = static_cast<int>(frames);
  if (m < region_size + kAnchorFrames) {
    throw GatherError("sequence shorter than clip: " + std::to_string(m) + " frames < l_r + 1 = " +
                      std::to_string(region_size + kAnchorFrames));
  }
  std::vector<RegionBound> out(frames);
  for (int t = 0; t < m; ++t) {
    RegionBound& b = out[t];
    b.minus = region_size / 2;
    b.plus = region_size - b.minus;
    b.real_minus = b.minus;
    b.real_plus = b.plus;
    if (t - b.minus < 0) {
      b.plus += b.minus - t;
      b.minus = t;
    }
    if (t + b.plus > m - 1) {
      b.minus += t + b.plus - (m - 1);
      b.plus = m - 1 - t;
    }
  }
  return out;
}

namespace {

template <typename T>
ClipLayout sparse_layout(const Tensor<T>& s, const GatherConfig& config) {
  const int m = static_cast<int>(s.rows());
  const int region = config.region_size();
  if (m < region + kAnchorFrames) {
    throw GatherError("sequence shorter than clip: " + std::to_string(m) + " frames < l_r + 1 = " +
                      std::to_string(region + kAnchorFrames));
  }
  const int half = config.max_offset();
  ClipLayout layout;
  layout.anchors = static_cast<std::size_t>(m);
  layout.clip_length = static_cast<std::size_t>(region + kAnchorFrames);
  std::vector<int> cand;
  for (int t = 0; t < m; ++t) {
    cand.clear();
    for (int j = std::max(0, t - half); j <= std::min(m - 1, t + half); ++j)
      if (j != t) cand.push_back(j);
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return s(t, a) > s(t, b); });
    cand.resize(static_cast<std::size_t>(region));
    cand.push_back(t);
    std::sort(cand.begin(), cand.end());
    for (int j : cand) {
      layout.source.push_back(j);
      layout.offset.push_back(j - t);
    }
  }
  return layout;
}

}  // namespace

template <typename T>
ClipLayout plan_clips(const Tensor<T>& features, const GatherConfig& config) {
  const std::size_t m = features.rows();
  switch (config.variant) {
    case GatherVariant::None: {
      ClipLayout layout;
      layout.anchors = m;
      layout.clip_length = 1;
      layout.source.resize(m);
      std::iota(layout.source.begin(), layout.source.end(), 0);
      layout.offset.assign(m, 0);
      return layout;
    }
    case GatherVariant::Centered: {
      auto bounds = centered_bounds(m, config.region_size());
      return layout_from_bounds(bounds);
    }
    case GatherVariant::Sparse:
      return sparse_layout(similarity_matrix(features), config);
    case GatherVariant::ContentAware: {
      if (static_cast<int>(m) < config.region_size() + kAnchorFrames) {
        throw GatherError("sequence shorter than clip: " + std::to_string(m) + " frames < l_r + 1 = " +
                          std::to_string(config.region_size() + kAnchorFrames));
      }
      const Tensor<T> d = masked_neighbor_distribution(similarity_matrix(features), config.window);
      std::vector<RegionBound> bounds(m);
      for (std::size_t t = 0; t < m; ++t)
        bounds[t] = region_bounds<T>(d.row(t), static_cast<int>(t), config.window, config.gamma);
      return layout_from_bounds(bounds);
    }
  }
  throw GatherError("plan_clips: unhandled variant");
}

template <typename T>
ClipTensor<T> gather_clips(Var<T> features, ClipLayout layout) {
  const std::size_t d = features.value().cols();
  Var<T> flat = ops::gather_rows(features, std::span<const int>(layout.source));
  Var<T> clips = ops::reshape(flat, Shape{layout.anchors, layout.clip_length, d});
  return {clips, std::move(layout)};
}

#define SLT_INSTANTIATE_GATHER(T)                                                          \
  template Tensor<T> similarity_matrix(const Tensor<T>&);                                  \
  template Tensor<T> masked_neighbor_distribution(const Tensor<T>&, int);                  \
  template RegionBound region_bounds<T>(std::span<const T>, int, int, double);             \
  template ClipLayout plan_clips(const Tensor<T>&, const GatherConfig&);                   \
  template struct ClipTensor<T>;                                                           \
  template ClipTensor<T> gather_clips(Var<T>, ClipLayout);

SLT_INSTANTIATE_GATHER(float)
SLT_INSTANTIATE_GATHER(double)

}  // namespace slt
