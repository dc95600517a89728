#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "slt/autograd.hpp"
#include "slt/rng.hpp"

namespace slt {

/// Enabled score terms of disentangled attention. Content-to-content is
/// mandatory.
struct TermSet {
  bool c2c = true;
  bool c2p = true;
  bool p2c = true;
  bool p2p = true;

  /// Comma-separated subset of {c2c, c2p, p2c, p2p}, or "all".
  static TermSet parse(std::string_view spec);
  std::string str() const;
  bool operator==(const TermSet&) const = default;
};

/// Relative-distance bucket: clamp(i - j, -L, L-1) + L, in [0, 2L-1].
int rel_bucket(int i, int j, int max_distance);

/// Boolean mask over (queries x keys); nonzero entries are excluded.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> masked;

  static AttentionMask none(std::size_t queries, std::size_t keys);
  static AttentionMask causal(std::size_t n);
  /// Keys at index >= valid_keys are padding.
  static AttentionMask key_padding(std::size_t queries, std::size_t keys, std::size_t valid_keys);
  AttentionMask& merge(const AttentionMask& other);
  bool any() const;
};

/// softmax(scale * Q Kᵀ + mask) V for one head.
template <typename T>
Var<T> standard_attention(Var<T> query, Var<T> key, Var<T> value, const AttentionMask* mask, T scale);

/// Unscaled disentangled scores (M_q x M_k) for one head:
///   c2c: Qc[i]·Kc[j], c2p: Qc[i]·Kp[b(j,i)], p2c: Qp[b(i,j)]·Kc[j],
///   p2p: Qp[b(i,j)]·Kp[b(j,i)], where b is rel_bucket and Qp/Kp are the
///   projected 2L-row position tables.
template <typename T>
Var<T> drpe_scores(Var<T> q_content, Var<T> k_content, Var<T> q_position, Var<T> k_position, const TermSet& terms,
                   int max_distance);

struct AttentionConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  /// Disentangled relative scores when true, plain content scores otherwise.
  bool relative = true;
  TermSet terms;
  int max_distance = 32;
  double dropout = 0.0;

  std::size_t head_dim() const { return d_model / heads; }
};

/// Multi-head attention with optional disentangled relative positions. The
/// relative table P (2L x d_model) is owned by the caller so that layers of one
/// site can share it; projections are per layer.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention(ParameterStore<T>& store, const std::string& prefix, AttentionConfig config,
                     Parameter<T>* rel_table, Rng& rng);

  const AttentionConfig& config() const { return config_; }

  /// query_in: (M_q, d), key_in/value_in: (M_k, d). With a dropout RNG the
  /// attention weights are dropped out at the configured rate.
  Var<T> forward(Graph<T>& g, Var<T> query_in, Var<T> key_in, Var<T> value_in, const AttentionMask* mask,
                 Rng* dropout_rng = nullptr) const;

  /// Attention weights per head from the last forward call, kept for inspection.
  const std::vector<Var<T>>& last_weights() const { return last_weights_; }

  /// 1/sqrt(4 d_h) for relative scores (independent of which terms are on),
  /// 1/sqrt(d_h) otherwise.
  T score_scale() const;

 private:
  AttentionConfig config_;
  Parameter<T>* w_query_ = nullptr;
  Parameter<T>* w_key_ = nullptr;
  Parameter<T>* w_value_ = nullptr;
  Parameter<T>* w_out_ = nullptr;
  Parameter<T>* b_out_ = nullptr;
  Parameter<T>* w_query_pos_ = nullptr;
  Parameter<T>* w_key_pos_ = nullptr;
  Parameter<T>* rel_table_ = nullptr;
  mutable std::vector<Var<T>> last_weights_;
};

/// Xavier-uniform initialized (rows x cols) tensor.
template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace slt
