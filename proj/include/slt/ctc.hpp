#pragma once

#include <span>
#include <string>
#include <vector>

#include "slt/autograd.hpp"

namespace slt {

/// Blank occupies class 0; glosses are 1..G.
inline constexpr int kBlank = 0;

/// Frames the shortest alignment of `target` needs: one per label plus a
/// separating blank between equal neighbors.
std::size_t ctc_min_frames(std::span<const int> target);

template <typename T>
struct CtcResult {
  /// Negative log-likelihood; +inf when no alignment exists.
  T nll = 0;
  bool feasible = true;
  std::string diagnostic;
};

/// Forward recursion over the blank-extended target in log space.
/// log_probs: (frames, classes) per-frame log-probabilities. When `grad` is
/// given it receives d(nll)/d(log_probs) from the forward-backward pass
/// (zeros for an infeasible target).
template <typename T>
CtcResult<T> ctc_forward_backward(const Tensor<T>& log_probs, std::span<const int> target, Tensor<T>* grad = nullptr);

/// Differentiable CTC negative log-likelihood of one sequence.
template <typename T>
Var<T> ctc_loss(Var<T> log_probs, std::span<const int> target);

/// Best path: per-frame argmax, merge repeats, drop blanks.
template <typename T>
std::vector<int> ctc_greedy_decode(const Tensor<T>& log_probs);

/// Prefix beam search. Each prefix keeps separate log masses for paths ending
/// in blank and in a label; the beam is pruned to `beam_width` after each frame.
template <typename T>
std::vector<int> ctc_beam_search(const Tensor<T>& log_probs, std::size_t beam_width);

}  // namespace slt
