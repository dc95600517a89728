#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slt/tensor.hpp"

namespace slt {

/// Synthetic gesture corpus: every gloss owns a fixed random prototype; a
/// video concatenates one noisy segment per gloss; the sentence is a fixed
/// non-monotonic rewrite of the gloss sequence.
struct CorpusConfig {
  std::uint64_t seed = 0;
  std::size_t glosses = 12;
  std::size_t train_size = 300;
  std::size_t dev_size = 50;
  std::size_t test_size = 50;
  std::size_t min_glosses = 3;
  std::size_t max_glosses = 5;
  std::size_t min_frames = 12;
  std::size_t max_frames = 20;
  std::size_t feature_dim = 32;
  double noise = 0.6;
  /// "swap_pairs_length": swap adjacent pairs, then append a length word.
  /// "identity": monotonic, one word per gloss.
  std::string reorder = "swap_pairs_length";

  /// pad/bos/eos, one word per gloss, one length word per sentence length.
  std::size_t word_vocab() const;
  /// Throws std::invalid_argument; `min_video_frames` is the shortest video the
  /// model accepts (l_r + 1 for gathering).
  void validate(std::size_t min_video_frames) const;
};

struct Sample {
  Tensor<float> features;  // (M, feature_dim)
  std::vector<int> glosses;
  std::vector<int> words;
  /// Segment starts plus the final frame count: glosses.size() + 1 entries.
  /// Generator ground truth for diagnostics; no model code reads it.
  std::vector<int> boundaries;

  bool operator==(const Sample&) const = default;
};

struct Corpus {
  std::vector<Sample> train;
  std::vector<Sample> dev;
  std::vector<Sample> test;
};

Corpus generate_corpus(const CorpusConfig& config);

/// Word ids of the sentence for a gloss sequence under the config's rule.
std::vector<int> glosses_to_words(const std::vector<int>& glosses, const CorpusConfig& config);
/// Inverse of glosses_to_words; throws when `words` is not in its image.
std::vector<int> words_to_glosses(const std::vector<int>& words, const CorpusConfig& config);

}  // namespace slt
