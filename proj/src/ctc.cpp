#include "slt/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace slt {
namespace {

template <typename T>
constexpr T kNegInf = -std::numeric_limits<T>::infinity();

template <typename T>
T log_add(T a, T b) {
  if (a == kNegInf<T>) return b;
  if (b == kNegInf<T>) return a;
  const T mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

template <typename T>
CtcResult<T> ctc_forward_backward(const Tensor<T>& log_probs, std::span<const int> target, Tensor<T>* grad) {
  const std::size_t frames = log_probs.rows(), classes = log_probs.cols();
  for (int label : target) {
    if (label == kBlank || label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument("ctc: target label " + std::to_string(label) + " is not a gloss id in [1, " +
                                  std::to_string(classes - 1) + "]");
    }
  }
  if (grad) *grad = Tensor<T>(log_probs.shape());
  CtcResult<T> result;
  const std::size_t need = ctc_min_frames(target);
  if (frames < need) {
    result.nll = std::numeric_limits<T>::infinity();
    result.feasible = false;
    result.diagnostic = "infeasible target: " + std::to_string(target.size()) + " labels need " +
                        std::to_string(need) + " frames, only " + std::to_string(frames) + " available";
    return result;
  }

  const std::size_t s_len = 2 * target.size() + 1;
  std::vector<int> ext(s_len, kBlank);
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  std::vector<T> alpha(frames * s_len, kNegInf<T>);
  alpha[0] = log_probs(0, kBlank);
  if (s_len > 1) alpha[1] = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    const T* prev = alpha.data() + (t - 1) * s_len;
    T* cur = alpha.data() + t * s_len;
    for (std::size_t s = 0; s < s_len; ++s) {
      T a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (skip_ok(s)) a = log_add(a, prev[s - 2]);
      cur[s] = a == kNegInf<T> ? a : a + log_probs(t, ext[s]);
    }
  }
  const T* last = alpha.data() + (frames - 1) * s_len;
  const T log_p = s_len > 1 ? log_add(last[s_len - 1], last[s_len - 2]) : last[0];
  result.nll = -log_p;
  if (!grad || log_p == kNegInf<T>) return result;

  std::vector<T> beta(frames * s_len, kNegInf<T>);
  T* bl = beta.data() + (frames - 1) * s_len;
  bl[s_len - 1] = log_probs(frames - 1, ext[s_len - 1]);
  if (s_len > 1) bl[s_len - 2] = log_probs(frames - 1, ext[s_len - 2]);
  for (std::size_t t = frames - 1; t-- > 0;) {
    const T* next = beta.data() + (t + 1) * s_len;
    T* cur = beta.data() + t * s_len;
    for (std::size_t s = 0; s < s_len; ++s) {
      T b = next[s];
      if (s + 1 < s_len) b = log_add(b, next[s + 1]);
      if (s + 2 < s_len && skip_ok(s + 2)) b = log_add(b, next[s + 2]);
      cur[s] = b == kNegInf<T> ? b : b + log_probs(t, ext[s]);
    }
  }

  std::vector<T> occupancy(classes);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf<T>);
    for (std::size_t s = 0; s < s_len; ++s) {
      const T ab = alpha[t * s_len + s] + beta[t * s_len + s];
      if (ab != kNegInf<T>) occupancy[ext[s]] = log_add(occupancy[ext[s]], ab);
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (occupancy[k] == kNegInf<T>) continue;
      (*grad)(t, k) = -std::exp(occupancy[k] - log_probs(t, k) - log_p);
    }
  }
  return result;
}

template <typename T>
Var<T> ctc_loss(Var<T> log_probs, std::span<const int> target) {
  Tensor<T> grad;
  CtcResult<T> r = ctc_forward_backward(log_probs.value(), target, log_probs.requires_grad() ? &grad : nullptr);
  return log_probs.graph->record(OpKind::CtcLoss, {log_probs.id}, Tensor<T>::scalar(r.nll),
                                 [log_probs, grad = std::move(grad)](Graph<T>& g, const Tensor<T>& go) {
                                   Tensor<T>& gl = g.grad_buffer(log_probs.id);
                                   for (std::size_t i = 0; i < gl.numel(); ++i) gl[i] += go[0] * grad[i];
                                 });
}

template <typename T>
std::vector<int> ctc_greedy_decode(const Tensor<T>& log_probs) {
  std::vector<int> out;
  int prev = kBlank;
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    auto row = log_probs.row(t);
    const int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != kBlank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

template <typename T>
std::vector<int> ctc_beam_search(const Tensor<T>& log_probs, std::size_t beam_width) {
  if (beam_width == 0) throw std::invalid_argument("ctc_beam_search: beam width must be >= 1");
  struct Mass {
    T blank = kNegInf<T>;
    T label = kNegInf<T>;
    T total() const { return log_add(blank, label); }
  };
  using Prefix = std::vector<int>;
  std::map<Prefix, Mass> beam;
  beam[Prefix{}] = Mass{T(0), kNegInf<T>};
  const std::size_t classes = log_probs.cols();
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    std::map<Prefix, Mass> next;
    for (const auto& [prefix, mass] : beam) {
      Mass& stay = next[prefix];
      stay.blank = log_add(stay.blank, mass.total() + log_probs(t, kBlank));
      for (std::size_t c = 1; c < classes; ++c) {
        const int label = static_cast<int>(c);
        const T lp = log_probs(t, c);
        Prefix extended = prefix;
        extended.push_back(label);
        Mass& ext = next[extended];
        if (!prefix.empty() && prefix.back() == label) {
          // Repeating the last label needs an intervening blank; without one
          // the path collapses onto the same prefix.
          ext.label = log_add(ext.label, mass.blank + lp);
          Mass& same = next[prefix];
          same.label = log_add(same.label, mass.label + lp);
        } else {
          ext.label = log_add(ext.label, mass.total() + lp);
        }
      }
    }
    std::vector<std::pair<Prefix, Mass>> ranked(next.begin(), next.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
    if (ranked.size() > beam_width) ranked.resize(beam_width);
    beam = std::map<Prefix, Mass>(ranked.begin(), ranked.end());
  }
  const auto best = std::max_element(beam.begin(), beam.end(), [](const auto& a, const auto& b) {
    return a.second.total() < b.second.total();
  });
  return best->first;
}

#define SLT_INSTANTIATE_CTC(T)                                                                   \
  template struct CtcResult<T>;                                                                  \
  template CtcResult<T> ctc_forward_backward(const Tensor<T>&, std::span<const int>, Tensor<T>*); \
  template Var<T> ctc_loss(Var<T>, std::span<const int>);                                        \
  template std::vector<int> ctc_greedy_decode(const Tensor<T>&);                                 \
  template std::vector<int> ctc_beam_search(const Tensor<T>&, std::size_t);

SLT_INSTANTIATE_CTC(float)
SLT_INSTANTIATE_CTC(double)

}  // namespace slt
