#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slt/autograd.hpp"

namespace slt {

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error. Below it the check is absolute
  /// (tolerance * floor), since central differences of an O(10) loss carry
  /// roundoff around 1e-10 and cannot resolve smaller gradients relatively.
  double floor = 1e-4;
  /// When nonzero, at most this many evenly strided entries per parameter are probed.
  std::size_t max_entries = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  /// First flat index whose analytic or numeric gradient was not finite.
  std::optional<std::size_t> nonfinite_index;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
  double max_error() const;
  std::string summary() const;
};

/// Compares analytic gradients of a scalar loss against central differences.
/// `loss` must rebuild its graph from the current parameter values on every
/// call and be deterministic. Relative error per entry is
/// |a - n| / max(|a|, |n|, floor).
GradCheckReport finite_difference_check(const std::function<Var<double>(Graph<double>&)>& loss,
                                         const std::vector<Parameter<double>*>& params,
                                         const GradCheckOptions& options = {});

}  // namespace slt
