#pragma once

#include <string>
#include <string_view>

#include "slt/gathering.hpp"
#include "slt/rng.hpp"

namespace slt {

/// Position information added to clip elements before convolution.
enum class ClipPosition { Relative, Absolute, None };
/// Which attention inputs receive the aggregated features.
enum class QkvSource { QueryRaw, AllAggregated };

ClipPosition parse_clip_position(std::string_view name);
std::string to_string(ClipPosition p);
QkvSource parse_qkv_source(std::string_view name);
std::string to_string(QkvSource q);

struct CptcnConfig {
  GatherConfig gathering;
  ClipPosition position = ClipPosition::Relative;
  bool residual = true;
  bool layer_norm = true;
  QkvSource qkv = QkvSource::QueryRaw;
};

inline constexpr std::size_t kConvKernel = 3;
inline constexpr std::size_t kConvBlocks = 2;
/// Shortest clip the two valid kernel-3 convolutions accept.
inline constexpr std::size_t kMinClipLength = kConvBlocks * (kConvKernel - 1) + 1;

template <typename T>
struct AttentionInputs {
  Var<T> query;
  Var<T> key;
  Var<T> value;
};

/// Content-aware, position-aware temporal convolution for one encoder layer.
/// Owns a relative-position table of (2h+1) rows, h = the config's largest
/// clip offset, plus two conv/LN blocks of width d.
template <typename T>
class Cptcn {
 public:
  Cptcn(ParameterStore<T>& store, const std::string& prefix, std::size_t dim, CptcnConfig config, Rng& rng);

  const CptcnConfig& config() const { return config_; }
  int table_half_width() const { return half_width_; }
  bool active() const { return config_.gathering.variant != GatherVariant::None; }

  /// F^r + Φ for relative mode (Φ looked up by clip offset), F^r + sinusoid of
  /// the source frame index for absolute mode, F^r for none.
  ClipTensor<T> add_position(Graph<T>& g, ClipTensor<T> clips) const;

  /// Two (conv, LN, relu) blocks, max over the remaining steps, residual add.
  /// clips: (M, n, d) with n >= kMinClipLength; features: (M, d).
  Var<T> aggregate(Graph<T>& g, Var<T> clips, Var<T> features) const;

  /// Q = F, K = V = F_ag (or all three aggregated when configured).
  AttentionInputs<T> attention_inputs(Graph<T>& g, Var<T> features) const;

  Parameter<T>* table() const { return table_; }
  Parameter<T>* conv_weight(std::size_t block) const { return blocks_.at(block).weight; }

 private:
  struct Block {
    Parameter<T>* weight = nullptr;
    Parameter<T>* bias = nullptr;
    Parameter<T>* gain = nullptr;
    Parameter<T>* shift = nullptr;
  };

  CptcnConfig config_;
  std::size_t dim_;
  int half_width_ = 0;
  Parameter<T>* table_ = nullptr;
  std::vector<Block> blocks_;
};

/// Rows `offsets + half_width` of a relative-position table; rejects offsets
/// outside [-half_width, half_width].
std::vector<int> relative_table_rows(std::span<const int> offsets, int half_width);

}  // namespace slt
