#include "slt/optim.hpp"

#include <algorithm>
#include <cmath>

namespace slt {

double LrSchedule::rate(std::size_t step) const {
  if (step == 0) return 0.0;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  if (warmup == 0) return peak / std::sqrt(s);
  return peak * std::min(s / w, std::sqrt(w / s));
}

template <typename T>
Adam<T>::Adam(ParameterStore<T>& params, AdamConfig config) : params_(params), config_(config) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_.emplace_back(params_[i].value.shape());
    v_.emplace_back(params_[i].value.shape());
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<T>& p = params_[i];
    if (p.grad.empty()) continue;
    Tensor<T>& m = m_[i];
    Tensor<T>& v = v_[i];
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const T g = p.grad[k];
      m[k] = static_cast<T>(b1 * m[k] + (1.0 - b1) * g);
      v[k] = static_cast<T>(b2 * v[k] + (1.0 - b2) * g * g);
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      p.value[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace slt
