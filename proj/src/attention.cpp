#include "slt/attention.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slt/ops.hpp"

namespace slt {

TermSet TermSet::parse(std::string_view spec) {
  if (spec == "all") return TermSet{};
  TermSet t{false, false, false, false};
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', pos), spec.size());
    const std::string_view tok = spec.substr(pos, end - pos);
    if (tok == "c2c") t.c2c = true;
    else if (tok == "c2p") t.c2p = true;
    else if (tok == "p2c") t.p2c = true;
    else if (tok == "p2p") t.p2p = true;
    else throw std::invalid_argument("unknown attention term '" + std::string(tok) + "' (expected c2c, c2p, p2c, p2p)");
    pos = end + 1;
  }
  if (!t.c2c) throw std::invalid_argument("attention.terms must include c2c");
  return t;
}

std::string TermSet::str() const {
  std::string s;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  put(c2c, "c2c");
  put(c2p, "c2p");
  put(p2c, "p2c");
  put(p2p, "p2p");
  return s;
}

int rel_bucket(int i, int j, int max_distance) {
  return std::clamp(i - j, -max_distance, max_distance - 1) + max_distance;
}

AttentionMask AttentionMask::none(std::size_t queries, std::size_t keys) {
  return {queries, keys, std::vector<std::uint8_t>(queries * keys, 0)};
}

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m = none(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.masked[i * n + j] = 1;
  return m;
}

AttentionMask AttentionMask::key_padding(std::size_t queries, std::size_t keys, std::size_t valid_keys) {
  AttentionMask m = none(queries, keys);
  for (std::size_t i = 0; i < queries; ++i)
    for (std::size_t j = valid_keys; j < keys; ++j) m.masked[i * keys + j] = 1;
  return m;
}

AttentionMask& AttentionMask::merge(const AttentionMask& other) {
  if (other.queries != queries || other.keys != keys) {
    throw ShapeError("AttentionMask::merge: " + std::to_string(queries) + "x" + std::to_string(keys) + " vs " +
                     std::to_string(other.queries) + "x" + std::to_string(other.keys));
  }
  for (std::size_t i = 0; i < masked.size(); ++i) masked[i] |= other.masked[i];
  return *this;
}

bool AttentionMask::any() const {
  return std::any_of(masked.begin(), masked.end(), [](std::uint8_t m) { return m != 0; });
}

namespace {

template <typename T>
Var<T> apply_mask(Var<T> scores, const AttentionMask* mask) {
  if (!mask) return scores;
  const Tensor<T>& s = scores.value();
  if (mask->queries != s.rows() || mask->keys != s.cols()) {
    throw ShapeError("attention mask " + std::to_string(mask->queries) + "x" + std::to_string(mask->keys) +
                     " does not match scores " + shape_str(s.shape()));
  }
  if (!mask->any()) return scores;
  return ops::masked_fill(scores, std::span<const std::uint8_t>(mask->masked));
}

}  // namespace

template <typename T>
Var<T> standard_attention(Var<T> query, Var<T> key, Var<T> value, const AttentionMask* mask, T scale) {
  if (query.value().cols() != key.value().cols() || key.value().rows() != value.value().rows()) {
    throw ShapeError("standard_attention: Q " + shape_str(query.shape()) + ", K " + shape_str(key.shape()) + ", V " +
                     shape_str(value.shape()));
  }
  Var<T> scores = ops::scale(ops::matmul_nt(query, key), scale);
  Var<T> weights = ops::softmax_rows(apply_mask(scores, mask));
  return ops::matmul(weights, value);
}

template <typename T>
Var<T> drpe_scores(Var<T> q_content, Var<T> k_content, Var<T> q_position, Var<T> k_position, const TermSet& terms,
                   int max_distance) {
  if (!terms.c2c) throw std::invalid_argument("drpe_scores: content-to-content term cannot be disabled");
  const std::size_t mq = q_content.value().rows(), mk = k_content.value().rows();
  const std::size_t table_rows = static_cast<std::size_t>(2 * max_distance);
  if (q_content.value().cols() != k_content.value().cols() ||
      (terms.c2p || terms.p2c || terms.p2p) &&
          (q_position.value().rows() != table_rows || k_position.value().rows() != table_rows ||
           q_position.value().cols() != q_content.value().cols() ||
           k_position.value().cols() != q_content.value().cols())) {
    throw ShapeError("drpe_scores: Qc " + shape_str(q_content.shape()) + ", Kc " + shape_str(k_content.shape()) +
                     ", Qp " + shape_str(q_position.shape()) + ", Kp " + shape_str(k_position.shape()) + ", L " +
                     std::to_string(max_distance));
  }
  Var<T> scores = ops::matmul_nt(q_content, k_content);
  if (!(terms.c2p || terms.p2c || terms.p2p)) return scores;

  const Shape out{mq, mk};
  std::vector<int> rows(mq * mk), cols(mq * mk);
  auto fill = [&](auto row_of, auto col_of) {
    for (std::size_t i = 0; i < mq; ++i)
      for (std::size_t j = 0; j < mk; ++j) {
        rows[i * mk + j] = row_of(static_cast<int>(i), static_cast<int>(j));
        cols[i * mk + j] = col_of(static_cast<int>(i), static_cast<int>(j));
      }
  };
  if (terms.c2p) {
    Var<T> a = ops::matmul_nt(q_content, k_position);  // (M_q, 2L)
    fill([](int i, int) { return i; }, [&](int i, int j) { return rel_bucket(j, i, max_distance); });
    scores = ops::add(scores, ops::gather_elements(a, std::span<const int>(rows), std::span<const int>(cols), out));
  }
  if (terms.p2c) {
    Var<T> b = ops::matmul_nt(k_content, q_position);  // (M_k, 2L)
    fill([](int, int j) { return j; }, [&](int i, int j) { return rel_bucket(i, j, max_distance); });
    scores = ops::add(scores, ops::gather_elements(b, std::span<const int>(rows), std::span<const int>(cols), out));
  }
  if (terms.p2p) {
    Var<T> c = ops::matmul_nt(q_position, k_position);  // (2L, 2L)
    fill([&](int i, int j) { return rel_bucket(i, j, max_distance); },
         [&](int i, int j) { return rel_bucket(j, i, max_distance); });
    scores = ops::add(scores, ops::gather_elements(c, std::span<const int>(rows), std::span<const int>(cols), out));
  }
  return scores;
}

template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor<T> t(Shape{rows, cols});
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -bound, bound));
  return t;
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store, const std::string& prefix, AttentionConfig config,
                                          Parameter<T>* rel_table, Rng& rng)
    : config_(config), rel_table_(rel_table) {
  const std::size_t d = config_.d_model;
  if (config_.heads == 0 || d % config_.heads != 0) {
    throw std::invalid_argument("attention: d_model " + std::to_string(d) + " is not divisible by " +
                                std::to_string(config_.heads) + " heads");
  }
  if (!config_.terms.c2c) throw std::invalid_argument("attention: c2c term is mandatory");
  w_query_ = &store.add(prefix + ".w_query", xavier_uniform<T>(d, d, rng));
  w_key_ = &store.add(prefix + ".w_key", xavier_uniform<T>(d, d, rng));
  w_value_ = &store.add(prefix + ".w_value", xavier_uniform<T>(d, d, rng));
  w_out_ = &store.add(prefix + ".w_out", xavier_uniform<T>(d, d, rng));
  b_out_ = &store.add(prefix + ".b_out", Tensor<T>(Shape{d}));
  if (config_.relative) {
    const std::size_t rows = static_cast<std::size_t>(2 * config_.max_distance);
    if (!rel_table_ || rel_table_->value.shape() != Shape{rows, d}) {
      throw std::invalid_argument("attention: relative mode needs a " + shape_str(Shape{rows, d}) + " table");
    }
    w_query_pos_ = &store.add(prefix + ".w_query_pos", xavier_uniform<T>(d, d, rng));
    w_key_pos_ = &store.add(prefix + ".w_key_pos", xavier_uniform<T>(d, d, rng));
  }
}

template <typename T>
T MultiHeadAttention<T>::score_scale() const {
  const T dh = static_cast<T>(config_.head_dim());
  return config_.relative ? T(1) / std::sqrt(T(4) * dh) : T(1) / std::sqrt(dh);
}

template <typename T>
Var<T> MultiHeadAttention<T>::forward(Graph<T>& g, Var<T> query_in, Var<T> key_in, Var<T> value_in,
                                      const AttentionMask* mask, Rng* dropout_rng) const {
  const std::size_t dh = config_.head_dim();
  Var<T> q = ops::matmul(query_in, g.param(*w_query_));
  Var<T> k = ops::matmul(key_in, g.param(*w_key_));
  Var<T> v = ops::matmul(value_in, g.param(*w_value_));
  Var<T> qp{}, kp{};
  if (config_.relative) {
    Var<T> table = g.param(*rel_table_);
    qp = ops::matmul(table, g.param(*w_query_pos_));
    kp = ops::matmul(table, g.param(*w_key_pos_));
  }
  const T scale = score_scale();
  last_weights_.clear();
  std::vector<Var<T>> heads;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    Var<T> qh = ops::slice_cols(q, h * dh, dh);
    Var<T> kh = ops::slice_cols(k, h * dh, dh);
    Var<T> vh = ops::slice_cols(v, h * dh, dh);
    Var<T> scores;
    if (config_.relative) {
      scores = drpe_scores(qh, kh, ops::slice_cols(qp, h * dh, dh), ops::slice_cols(kp, h * dh, dh), config_.terms,
                           config_.max_distance);
    } else {
      scores = ops::matmul_nt(qh, kh);
    }
    scores = apply_mask(ops::scale(scores, scale), mask);
    Var<T> weights = ops::softmax_rows(scores);
    last_weights_.push_back(weights);
    if (dropout_rng) weights = ops::dropout(weights, static_cast<T>(config_.dropout), *dropout_rng);
    heads.push_back(ops::matmul(weights, vh));
  }
  Var<T> joined = heads.size() == 1 ? heads[0] : ops::concat_cols(std::span<const Var<T>>(heads));
  return ops::add_row(ops::matmul(joined, g.param(*w_out_)), g.param(*b_out_));
}

#define SLT_INSTANTIATE_ATTN(T)                                                                                   \
  template Var<T> standard_attention(Var<T>, Var<T>, Var<T>, const AttentionMask*, T);                            \
  template Var<T> drpe_scores(Var<T>, Var<T>, Var<T>, Var<T>, const TermSet&, int);                               \
  template Tensor<T> xavier_uniform<T>(std::size_t, std::size_t, Rng&);                                           \
  template class MultiHeadAttention<T>;

SLT_INSTANTIATE_ATTN(float)
SLT_INSTANTIATE_ATTN(double)

}  // namespace slt
