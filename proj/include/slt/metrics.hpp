#pragma once

#include <array>
#include <span>
#include <vector>

namespace slt {

/// Edit counts of one alignment, or a corpus total.
struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  /// (S + D + I) / N.
  double wer() const;
  double deletion_rate() const;
  double insertion_rate() const;
  ErrorCounts& operator+=(const ErrorCounts& o);
};

/// Minimal unit-cost edit distance with its S/D/I breakdown. Among optimal
/// alignments, the backtrace prefers substitution, then deletion, then
/// insertion. Throws on an empty reference.
ErrorCounts align_errors(std::span<const int> reference, std::span<const int> hypothesis);

/// Word error rate of one pair.
double wer(std::span<const int> reference, std::span<const int> hypothesis);

/// Corpus-level S/D/I totals; references must be nonempty.
ErrorCounts corpus_errors(std::span<const std::vector<int>> references, std::span<const std::vector<int>> hypotheses);

struct BleuScores {
  /// BLEU-1 .. BLEU-4 as fractions in [0, 1].
  std::array<double, 4> bleu{};
  /// Modified n-gram precisions p_1 .. p_4.
  std::array<double, 4> precision{};
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

/// Corpus BLEU, unsmoothed: clipped n-gram counts pooled over the corpus,
/// BLEU-k the geometric mean of p_1..p_k times exp(1 - r/c) when c < r.
BleuScores corpus_bleu(std::span<const std::vector<int>> references, std::span<const std::vector<int>> hypotheses,
                       std::size_t max_n = 4);

/// Sentence-level BLEU-4 with add-one smoothing on n > 1 precisions.
/// Diagnostic only; never used in corpus reports.
double smoothed_sentence_bleu(std::span<const int> reference, std::span<const int> hypothesis);

}  // namespace slt
