#include "slt/cptcn.hpp"

#include <cmath>

#include "slt/ops.hpp"
#include "slt/positional.hpp"

namespace slt {

ClipPosition parse_clip_position(std::string_view name) {
  if (name == "rpe") return ClipPosition::Relative;
  if (name == "ape") return ClipPosition::Absolute;
  if (name == "none") return ClipPosition::None;
  throw std::invalid_argument("unknown cptcn.pe '" + std::string(name) + "' (expected rpe, ape or none)");
}

std::string to_string(ClipPosition p) {
  switch (p) {
    case ClipPosition::Relative: return "rpe";
    case ClipPosition::Absolute: return "ape";
    case ClipPosition::None: return "none";
  }
  return "?";
}

QkvSource parse_qkv_source(std::string_view name) {
  if (name == "q_raw") return QkvSource::QueryRaw;
  if (name == "all_aggregated") return QkvSource::AllAggregated;
  throw std::invalid_argument("unknown cptcn.qkv '" + std::string(name) + "' (expected q_raw or all_aggregated)");
}

std::string to_string(QkvSource q) {
  return q == QkvSource::QueryRaw ? "q_raw" : "all_aggregated";
}

std::vector<int> relative_table_rows(std::span<const int> offsets, int half_width) {
  std::vector<int> rows(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i] < -half_width || offsets[i] > half_width) {
      throw GatherError("clip offset " + std::to_string(offsets[i]) + " outside relative table range [-" +
                        std::to_string(half_width) + ", " + std::to_string(half_width) + "]");
    }
    rows[i] = offsets[i] + half_width;
  }
  return rows;
}

template <typename T>
Cptcn<T>::Cptcn(ParameterStore<T>& store, const std::string& prefix, std::size_t dim, CptcnConfig config, Rng& rng)
    : config_(config), dim_(dim) {
  if (!active()) return;
  if (static_cast<std::size_t>(config_.gathering.clip_length()) < kMinClipLength) {
    throw GatherError("cptcn: clip length " + std::to_string(config_.gathering.clip_length()) +
                      " is shorter than the " + std::to_string(kMinClipLength) + " frames two convolutions need");
  }
  half_width_ = std::max(config_.gathering.window, config_.gathering.max_offset());
  if (config_.position == ClipPosition::Relative) {
    Tensor<T> t(Shape{static_cast<std::size_t>(2 * half_width_ + 1), dim});
    for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -0.1, 0.1));
    table_ = &store.add(prefix + ".rpe_table", std::move(t));
  }
  const double bound = std::sqrt(1.0 / (static_cast<double>(kConvKernel) * dim));
  for (std::size_t b = 0; b < kConvBlocks; ++b) {
    const std::string p = prefix + ".conv" + std::to_string(b + 1);
    Tensor<T> w(Shape{kConvKernel * dim, dim});
    for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -bound, bound));
    Block blk;
    blk.weight = &store.add(p + ".weight", std::move(w));
    blk.bias = &store.add(p + ".bias", Tensor<T>(Shape{dim}));
    if (config_.layer_norm) {
      blk.gain = &store.add(p + ".ln.gain", Tensor<T>(Shape{dim}, T(1)));
      blk.shift = &store.add(p + ".ln.bias", Tensor<T>(Shape{dim}));
    }
    blocks_.push_back(blk);
  }
}

template <typename T>
ClipTensor<T> Cptcn<T>::add_position(Graph<T>& g, ClipTensor<T> clips) const {
  const ClipLayout& layout = clips.layout;
  const Shape shape = clips.values.shape();
  switch (config_.position) {
    case ClipPosition::None:
      return clips;
    case ClipPosition::Relative: {
      const std::vector<int> rows = relative_table_rows(layout.offset, half_width_);
      Var<T> phi = ops::reshape(ops::gather_rows(g.param(*table_), std::span<const int>(rows)), shape);
      clips.values = ops::add(clips.values, phi);
      return clips;
    }
    case ClipPosition::Absolute: {
      Tensor<T> pe = sinusoidal_encoding<T>(std::span<const int>(layout.source), dim_).reshaped(shape);
      clips.values = ops::add(clips.values, g.constant(std::move(pe)));
      return clips;
    }
  }
  return clips;
}

template <typename T>
Var<T> Cptcn<T>::aggregate(Graph<T>& g, Var<T> clips, Var<T> features) const {
  const Shape& shape = clips.shape();
  if (shape.size() != 3 || shape[1] < kMinClipLength) {
    throw GatherError("cptcn: clips " + shape_str(shape) + " are shorter than the " + std::to_string(kMinClipLength) +
                      " frames two convolutions need");
  }
  Var<T> x = clips;
  for (const Block& blk : blocks_) {
    x = ops::conv1d_valid(x, g.param(*blk.weight), g.param(*blk.bias), kConvKernel);
    if (blk.gain) x = ops::layer_norm(x, g.param(*blk.gain), g.param(*blk.shift));
    x = ops::relu(x);
  }
  Var<T> pooled = ops::max_over_axis1(x);
  return config_.residual ? ops::add(pooled, features) : pooled;
}

template <typename T>
AttentionInputs<T> Cptcn<T>::attention_inputs(Graph<T>& g, Var<T> features) const {
  if (!active()) return {features, features, features};
  ClipTensor<T> clips = gather_clips(features, plan_clips(features.value(), config_.gathering));
  clips = add_position(g, std::move(clips));
  Var<T> aggregated = aggregate(g, clips.values, features);
  Var<T> query = config_.qkv == QkvSource::AllAggregated ? aggregated : features;
  return {query, aggregated, aggregated};
}

template class Cptcn<float>;
template class Cptcn<double>;

}  // namespace slt
