#include "slt/translate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "slt/ctc.hpp"

namespace slt {

double length_penalty(std::size_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

std::vector<int> Hypothesis::words() const {
  std::vector<int> w = tokens;
  if (!w.empty() && w.back() == kEos) w.pop_back();
  return w;
}

namespace {

void check_options(const BeamOptions& o) {
  if (o.beam_width == 0) throw std::invalid_argument("beam search: beam_width must be >= 1");
  if (o.alpha < 0.0 || o.alpha > 2.0) throw std::invalid_argument("beam search: alpha must be in [0, 2]");
  if (o.max_len == 0) throw std::invalid_argument("beam search: max_len must be >= 1");
}

// Next-token log-probs after bos + tokens.
template <typename T>
std::vector<double> next_log_probs(const Model<T>& model, Graph<T>& g, const Encoded<T>& enc,
                                   const std::vector<int>& tokens) {
  std::vector<int> inputs{kBos};
  inputs.insert(inputs.end(), tokens.begin(), tokens.end());
  Var<T> lp = model.decode(g, inputs, enc);
  const auto row = lp.value().row(inputs.size() - 1);
  return std::vector<double>(row.begin(), row.end());
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

}  // namespace

template <typename T>
std::vector<Hypothesis> beam_translate(const Model<T>& model, Graph<T>& g, const Encoded<T>& encoded,
                                       const BeamOptions& options) {
  check_options(options);
  std::vector<Hypothesis> live{Hypothesis{}}, finished;
  for (std::size_t len = 0; len < options.max_len && !live.empty() && finished.size() < options.beam_width; ++len) {
    std::vector<Hypothesis> pool;
    for (const Hypothesis& h : live) {
      const std::vector<double> lp = next_log_probs(model, g, encoded, h.tokens);
      for (std::size_t w = 0; w < lp.size(); ++w) {
        if (static_cast<int>(w) == kPad || static_cast<int>(w) == kBos) continue;
        Hypothesis e = h;
        e.tokens.push_back(static_cast<int>(w));
        e.log_prob += lp[w];
        e.finished = static_cast<int>(w) == kEos;
        pool.push_back(std::move(e));
      }
    }
    const std::size_t keep = std::min(options.beam_width, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), better);
    live.clear();
    for (std::size_t k = 0; k < keep; ++k) (pool[k].finished ? finished : live).push_back(std::move(pool[k]));
  }
  std::vector<Hypothesis>& out = finished.empty() ? live : finished;
  if (out.empty()) throw std::logic_error("beam search: beam emptied before max_len");
  for (Hypothesis& h : out) h.score = h.log_prob / length_penalty(h.tokens.size(), options.alpha);
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return out;
}

template <typename T>
Hypothesis greedy_translate(const Model<T>& model, Graph<T>& g, const Encoded<T>& encoded, std::size_t max_len,
                            double alpha) {
  if (max_len == 0) throw std::invalid_argument("greedy decoding: max_len must be >= 1");
  Hypothesis h;
  while (h.tokens.size() < max_len && !h.finished) {
    const std::vector<double> lp = next_log_probs(model, g, encoded, h.tokens);
    std::size_t best = 0;
    double best_lp = -INFINITY;
    for (std::size_t w = 0; w < lp.size(); ++w) {
      if (static_cast<int>(w) == kPad || static_cast<int>(w) == kBos) continue;
      if (lp[w] > best_lp) {
        best_lp = lp[w];
        best = w;
      }
    }
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += best_lp;
    h.finished = static_cast<int>(best) == kEos;
  }
  h.score = h.log_prob / length_penalty(h.tokens.size(), alpha);
  return h;
}

template <typename T>
SampleOutput decode_sample(const Model<T>& model, const Sample& sample, const DecodeConfig& config) {
  Graph<T> g(false);
  Encoded<T> enc = model.encode(g, sample.features.cast<T>());
  SampleOutput out;
  const Tensor<T>& lp = enc.gloss_log_probs.value();
  out.glosses = config.ctc_beam <= 1 ? ctc_greedy_decode(lp) : ctc_beam_search(lp, config.ctc_beam);
  const Hypothesis best = beam_translate(model, g, enc, config.translation).front();
  out.words = best.words();
  out.translation_score = best.score;
  return out;
}

template <typename T>
EvalReport evaluate_model(const Model<T>& model, std::span<const Sample> samples, const DecodeConfig& config) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  EvalReport r;
  r.samples = samples.size();
  std::vector<std::vector<int>> refs, hyps;
  for (const Sample& s : samples) {
    r.outputs.push_back(decode_sample(model, s, config));
    r.recognition += align_errors(s.glosses, r.outputs.back().glosses);
    refs.push_back(s.words);
    hyps.push_back(r.outputs.back().words);
  }
  r.translation = corpus_bleu(refs, hyps);
  return r;
}

#define SLT_INSTANTIATE_TRANSLATE(T)                                                                           \
  template std::vector<Hypothesis> beam_translate<T>(const Model<T>&, Graph<T>&, const Encoded<T>&,          \
                                                     const BeamOptions&);                                      \
  template Hypothesis greedy_translate<T>(const Model<T>&, Graph<T>&, const Encoded<T>&, std::size_t, double); \
  template SampleOutput decode_sample<T>(const Model<T>&, const Sample&, const DecodeConfig&);                 \
  template EvalReport evaluate_model<T>(const Model<T>&, std::span<const Sample>, const DecodeConfig&);

SLT_INSTANTIATE_TRANSLATE(float)
SLT_INSTANTIATE_TRANSLATE(double)

}  // namespace slt
