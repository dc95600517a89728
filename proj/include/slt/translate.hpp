#pragma once

#include <span>
#include <vector>

#include "slt/corpus.hpp"
#include "slt/metrics.hpp"
#include "slt/model.hpp"

namespace slt {

/// ((5 + length) / 6)^alpha.
double length_penalty(std::size_t length, double alpha);

struct Hypothesis {
  /// Generated tokens, without bos; a finished hypothesis ends with eos.
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;
  /// log_prob / length_penalty(tokens.size(), alpha).
  double score = 0.0;

  /// Tokens with a trailing eos removed.
  std::vector<int> words() const;
};

struct BeamOptions {
  std::size_t beam_width = 5;
  double alpha = 1.0;
  std::size_t max_len = 32;
};

/// Beam search over the decoder. At every step the expansions of all live
/// hypotheses are ranked by raw log-prob (ties: lexicographically smaller
/// tokens first) and the best beam_width survive; survivors ending in eos
/// retire. Search stops when nothing is live, beam_width hypotheses have
/// retired, or max_len is reached. Returns finished hypotheses (or the live
/// ones if none finished) ranked by penalized score, best first.
template <typename T>
std::vector<Hypothesis> beam_translate(const Model<T>& model, Graph<T>& g, const Encoded<T>& encoded,
                                       const BeamOptions& options);

/// Argmax decoding until eos or max_len.
template <typename T>
Hypothesis greedy_translate(const Model<T>& model, Graph<T>& g, const Encoded<T>& encoded, std::size_t max_len,
                            double alpha = 1.0);

struct DecodeConfig {
  /// CTC decoding: width 1 is greedy best path, larger widths prefix beam search.
  std::size_t ctc_beam = 1;
  BeamOptions translation;
};

struct SampleOutput {
  std::vector<int> glosses;
  std::vector<int> words;
  double translation_score = 0.0;
};

struct EvalReport {
  std::size_t samples = 0;
  ErrorCounts recognition;
  BleuScores translation;
  std::vector<SampleOutput> outputs;
};

template <typename T>
SampleOutput decode_sample(const Model<T>& model, const Sample& sample, const DecodeConfig& config);

/// Recognition WER over glosses and corpus BLEU over words.
template <typename T>
EvalReport evaluate_model(const Model<T>& model, std::span<const Sample> samples, const DecodeConfig& config);

}  // namespace slt
