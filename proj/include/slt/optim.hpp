#pragma once

#include <vector>

#include "slt/autograd.hpp"

namespace slt {

/// Linear warmup to `peak` over `warmup` steps, then inverse square-root decay:
/// lr(step) = peak * min(step / warmup, sqrt(warmup / step)); lr(0) = 0.
struct LrSchedule {
  double peak = 6.8e-4;
  std::size_t warmup = 4000;

  double rate(std::size_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// Adam with bias correction over every parameter of a store.
template <typename T>
class Adam {
 public:
  Adam(ParameterStore<T>& params, AdamConfig config = {});

  /// Applies one update from the accumulated Parameter::grad and increments
  /// the step counter.
  void step(double lr);

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t s) { steps_ = s; }
  const AdamConfig& config() const { return config_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  ParameterStore<T>& params_;
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace slt
