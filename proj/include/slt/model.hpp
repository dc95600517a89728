#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slt/attention.hpp"
#include "slt/cptcn.hpp"
#include "slt/rng.hpp"

namespace slt {

/// Reserved word ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstWord = 3;

struct DrpeSites {
  bool encoder = true;
  bool decoder = true;
  bool cross = true;

  /// Comma-separated subset of {enc, dec, cross}; "all" or "none".
  static DrpeSites parse(std::string_view spec);
  std::string str() const;
};

struct ModelConfig {
  std::size_t input_dim = 32;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  /// Feed-forward width; 0 means 4 * d_model.
  std::size_t ff_dim = 0;
  double dropout = 0.1;
  /// G: glosses, excluding the CTC blank.
  std::size_t gloss_vocab = 12;
  /// W: every word id including pad/bos/eos.
  std::size_t word_vocab = 20;

  CptcnConfig cptcn;
  /// CPTcn in every encoder layer, or only the first.
  bool cptcn_all_layers = true;

  TermSet terms;
  DrpeSites drpe_sites;
  int max_distance = 32;

  double lambda_recognition = 1.0;
  double lambda_translation = 1.0;

  std::size_t feed_forward_dim() const { return ff_dim ? ff_dim : 4 * d_model; }
  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

/// Output of the encoder for one sequence.
template <typename T>
struct Encoded {
  Var<T> states;           // (M, d_model)
  Var<T> gloss_log_probs;  // (valid_length, G + 1)
  std::size_t valid_length = 0;
};

/// Per-sequence loss parts, each already weighted for the batch.
template <typename T>
struct SampleLoss {
  Var<T> total;
  double ctc = 0.0;
  double nll = 0.0;
  std::size_t tokens = 0;
  bool ctc_feasible = true;
};

/// Joint recognition + translation encoder-decoder. Encoder layers use
/// CPTcn-derived attention inputs; sites flagged in drpe_sites use
/// disentangled relative attention, the others plain attention with
/// sinusoidal absolute positions added to that side's inputs.
template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

  /// features: (M, input_dim); frames at index >= valid_length are padding and
  /// are masked out as attention keys. valid_length 0 means M.
  Encoded<T> encode(Graph<T>& g, const Tensor<T>& features, std::size_t valid_length = 0,
                    Rng* dropout_rng = nullptr) const;

  /// Teacher-forced decoder: inputs start with bos; returns (N, W) log-probs.
  Var<T> decode(Graph<T>& g, std::span<const int> inputs, const Encoded<T>& encoded, Rng* dropout_rng = nullptr) const;

  /// λ_R * ctc / batch_size + λ_T * nll / batch_tokens for one sequence, so
  /// the per-sample totals of a batch sum to its joint loss.
  SampleLoss<T> sample_loss(Graph<T>& g, const Tensor<T>& features, std::span<const int> glosses,
                            std::span<const int> words, std::size_t batch_size, std::size_t batch_tokens,
                            Rng* dropout_rng = nullptr) const;

  /// Self-attention modules of the encoder, exposed for inspection.
  const MultiHeadAttention<T>& encoder_attention(std::size_t layer) const { return *enc_layers_.at(layer).attn; }

 private:
  struct Norm {
    Parameter<T>* gain;
    Parameter<T>* bias;
  };
  struct FeedForward {
    Parameter<T>* w1;
    Parameter<T>* b1;
    Parameter<T>* w2;
    Parameter<T>* b2;
  };
  struct EncoderLayer {
    Norm attn_norm;
    std::optional<Cptcn<T>> cptcn;
    std::unique_ptr<MultiHeadAttention<T>> attn;
    Norm ff_norm;
    FeedForward ff;
  };
  struct DecoderLayer {
    Norm self_norm;
    std::unique_ptr<MultiHeadAttention<T>> self_attn;
    Norm cross_norm;
    std::unique_ptr<MultiHeadAttention<T>> cross_attn;
    Norm ff_norm;
    FeedForward ff;
  };

  Norm make_norm(const std::string& name);
  FeedForward make_ff(const std::string& name, Rng& rng);
  Var<T> norm(Graph<T>& g, const Norm& n, Var<T> x) const;
  Var<T> feed_forward(Graph<T>& g, const FeedForward& f, Var<T> x, Rng* dropout_rng) const;
  Var<T> drop(Var<T> x, Rng* dropout_rng) const;

  ModelConfig config_;
  ParameterStore<T> params_;
  Parameter<T>* input_w_ = nullptr;
  Parameter<T>* input_b_ = nullptr;
  Parameter<T>* enc_table_ = nullptr;
  Parameter<T>* dec_table_ = nullptr;
  Parameter<T>* cross_table_ = nullptr;
  std::vector<EncoderLayer> enc_layers_;
  Norm enc_final_{};
  Parameter<T>* gloss_w_ = nullptr;
  Parameter<T>* gloss_b_ = nullptr;
  Parameter<T>* embed_ = nullptr;
  std::vector<DecoderLayer> dec_layers_;
  Norm dec_final_{};
  Parameter<T>* word_w_ = nullptr;
  Parameter<T>* word_b_ = nullptr;
};

}  // namespace slt
