#include "slt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace slt {

double ErrorCounts::wer() const {
  return reference_length == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(reference_length);
}

double ErrorCounts::deletion_rate() const {
  return reference_length == 0 ? 0.0 : static_cast<double>(deletions) / static_cast<double>(reference_length);
}

double ErrorCounts::insertion_rate() const {
  return reference_length == 0 ? 0.0 : static_cast<double>(insertions) / static_cast<double>(reference_length);
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_length += o.reference_length;
  return *this;
}

ErrorCounts align_errors(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: reference is empty");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]), at(i - 1, j) + 1, at(i, j - 1) + 1});

  ErrorCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      c.substitutions += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

double wer(std::span<const int> reference, std::span<const int> hypothesis) {
  return align_errors(reference, hypothesis).wer();
}

ErrorCounts corpus_errors(std::span<const std::vector<int>> references, std::span<const std::vector<int>> hypotheses) {
  if (references.size() != hypotheses.size()) throw std::invalid_argument("wer: reference/hypothesis count mismatch");
  ErrorCounts total;
  for (std::size_t k = 0; k < references.size(); ++k) total += align_errors(references[k], hypotheses[k]);
  return total;
}

namespace {

using NGram = std::vector<int>;

std::map<NGram, std::size_t> count_ngrams(std::span<const int> seq, std::size_t n) {
  std::map<NGram, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[NGram(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

// Clipped matches and total hypothesis n-grams for one pair.
std::pair<std::size_t, std::size_t> clipped_matches(std::span<const int> ref, std::span<const int> hyp, std::size_t n) {
  const auto rc = count_ngrams(ref, n);
  const auto hc = count_ngrams(hyp, n);
  std::size_t match = 0, total = 0;
  for (const auto& [gram, cnt] : hc) {
    total += cnt;
    const auto it = rc.find(gram);
    if (it != rc.end()) match += std::min(cnt, it->second);
  }
  return {match, total};
}

}  // namespace

BleuScores corpus_bleu(std::span<const std::vector<int>> references, std::span<const std::vector<int>> hypotheses,
                       std::size_t max_n) {
  if (references.size() != hypotheses.size()) throw std::invalid_argument("bleu: reference/hypothesis count mismatch");
  if (references.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (max_n == 0 || max_n > 4) throw std::invalid_argument("bleu: max_n must be in [1, 4]");
  BleuScores s;
  std::array<std::size_t, 4> match{}, total{};
  for (std::size_t k = 0; k < references.size(); ++k) {
    s.reference_length += references[k].size();
    s.hypothesis_length += hypotheses[k].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto [m, t] = clipped_matches(references[k], hypotheses[k], n);
      match[n - 1] += m;
      total[n - 1] += t;
    }
  }
  if (s.hypothesis_length == 0) {
    s.brevity_penalty = 0.0;
    return s;
  }
  if (s.hypothesis_length < s.reference_length) {
    s.brevity_penalty =
        std::exp(1.0 - static_cast<double>(s.reference_length) / static_cast<double>(s.hypothesis_length));
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    s.precision[n - 1] = total[n - 1] == 0 ? 0.0 : static_cast<double>(match[n - 1]) / static_cast<double>(total[n - 1]);
    if (s.precision[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(s.precision[n - 1]);
    s.bleu[n - 1] = zero ? 0.0 : s.brevity_penalty * std::exp(log_sum / static_cast<double>(n));
  }
  return s;
}

double smoothed_sentence_bleu(std::span<const int> reference, std::span<const int> hypothesis) {
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto [m, t] = clipped_matches(reference, hypothesis, n);
    const double add = n == 1 ? 0.0 : 1.0;
    if (m + add == 0.0) return 0.0;
    log_sum += std::log((static_cast<double>(m) + add) / (static_cast<double>(t) + add));
  }
  double bp = 1.0;
  if (hypothesis.size() < reference.size()) {
    bp = std::exp(1.0 - static_cast<double>(reference.size()) / static_cast<double>(hypothesis.size()));
  }
  return bp * std::exp(log_sum / 4.0);
}

}  // namespace slt
