#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "slt/ctc.hpp"
#include "slt/gradcheck_suite.hpp"
#include "slt/ops.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace slt;
using namespace slt::testing;

TEST_CASE("loss equals brute-force path enumeration") {
  for_all(200, 31, [](Rng& rng, std::size_t) {
    const std::size_t frames = random_size(rng, 1, 6), glosses = random_size(rng, 1, 3);
    const Tensor<double> lp = random_log_probs(rng, frames, glosses + 1);
    std::vector<int> target(random_size(rng, 0, 3));
    for (int& c : target) c = static_cast<int>(random_size(rng, 1, glosses));
    const auto masses = path_masses(lp);
    const auto it = masses.find(target);
    const CtcResult<double> r = ctc_forward_backward(lp, std::span<const int>(target));
    if (it == masses.end()) {
      CHECK_FALSE(r.feasible);
      CHECK(std::isinf(r.nll));
      return;
    }
    const double expect = -std::log(it->second);
    INFO("T=" << frames << " U=" << target.size() << " nll=" << r.nll << " oracle=" << expect);
    CHECK(r.feasible);
    CHECK(std::abs(r.nll - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
  });
}

TEST_CASE("prefix beam search matches exhaustive rescoring when wide enough") {
  for_all(200, 32, [](Rng& rng, std::size_t) {
    const std::size_t frames = random_size(rng, 1, 6), glosses = random_size(rng, 1, 3);
    const Tensor<double> lp = random_log_probs(rng, frames, glosses + 1);
    const auto masses = path_masses(lp);
    auto best = masses.begin();
    for (auto it = masses.begin(); it != masses.end(); ++it)
      if (it->second > best->second) best = it;
    CHECK(ctc_beam_search(lp, masses.size()) == best->first);
  });
}

TEST_CASE("greedy decoding collapses the best path") {
  Tensor<double> lp(Shape{6, 3}, std::log(0.1));
  const int best[] = {1, 1, 0, 1, 2, 2};
  for (std::size_t t = 0; t < 6; ++t) lp(t, static_cast<std::size_t>(best[t])) = std::log(0.8);
  CHECK(ctc_greedy_decode(lp) == std::vector<int>{1, 1, 2});
}

TEST_CASE("infeasible targets give infinite loss and a diagnostic") {
  Rng rng(3);
  const Tensor<double> lp = random_log_probs(rng, 3, 3);
  const std::vector<int> target{1, 1, 2};
  CHECK(ctc_min_frames(std::span<const int>(target)) == 4);
  Tensor<double> grad;
  const CtcResult<double> r = ctc_forward_backward(lp, std::span<const int>(target), &grad);
  CHECK_FALSE(r.feasible);
  CHECK(std::isinf(r.nll));
  CHECK(r.diagnostic.find("need 4 frames") != std::string::npos);
  for (double v : grad.values()) CHECK(v == 0.0);
}

TEST_CASE("blank and out-of-range labels are rejected") {
  Rng rng(4);
  const Tensor<double> lp = random_log_probs(rng, 4, 3);
  const std::vector<int> blank{1, 0}, big{3};
  CHECK_THROWS_AS(ctc_forward_backward(lp, std::span<const int>(blank)), std::invalid_argument);
  CHECK_THROWS_AS(ctc_forward_backward(lp, std::span<const int>(big)), std::invalid_argument);
}

TEST_CASE("gradient over log-probs is the brute-force posterior occupancy") {
  for_all(30, 33, [](Rng& rng, std::size_t) {
    const std::size_t frames = random_size(rng, 2, 5), glosses = random_size(rng, 1, 3);
    const Tensor<double> lp = random_log_probs(rng, frames, glosses + 1);
    std::vector<int> target(random_size(rng, 1, 2));
    for (int& c : target) c = static_cast<int>(random_size(rng, 1, glosses));
    if (ctc_min_frames(std::span<const int>(target)) > frames) return;
    // d(-log p)/d lp(t,k) = -(mass of target paths through k at t) / p.
    Tensor<double> expect(lp.shape());
    double total = 0.0;
    std::vector<int> path(frames, 0);
    while (true) {
      if (collapse(path) == target) {
        double p = 1.0;
        for (std::size_t t = 0; t < frames; ++t) p *= std::exp(lp(t, static_cast<std::size_t>(path[t])));
        total += p;
        for (std::size_t t = 0; t < frames; ++t) expect(t, static_cast<std::size_t>(path[t])) -= p;
      }
      std::size_t t = 0;
      while (t < frames && ++path[t] == static_cast<int>(glosses + 1)) path[t++] = 0;
      if (t == frames) break;
    }
    for (double& v : expect.values()) v /= total;
    Tensor<double> grad;
    ctc_forward_backward(lp, std::span<const int>(target), &grad);
    CHECK(max_abs_diff(grad, expect) < 1e-10);
  });
}

TEST_CASE("loss gradient through log-softmax") {
  for (const GradcheckOutcome& o : run_gradcheck_group("ctc")) {
    INFO(o.module << "\n" << o.detail);
    CHECK(o.passed);
  }
}
