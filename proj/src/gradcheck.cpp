#include "slt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slt {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [&](const GradCheckEntry& e) {
    return !e.nonfinite_index && e.max_rel_error <= tolerance;
  });
}

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.name << ": max_rel_error=" << e.max_rel_error << " at " << e.worst_index << " [analytic " << e.worst_analytic
       << ", numeric " << e.worst_numeric << "] (" << e.checked
       << " probed)";
    if (e.nonfinite_index) os << " NON-FINITE at index " << *e.nonfinite_index;
    os << (!e.nonfinite_index && e.max_rel_error <= tolerance ? " ok" : " FAIL") << "\n";
  }
  return os.str();
}

GradCheckReport finite_difference_check(const std::function<Var<double>(Graph<double>&)>& loss,
                                         const std::vector<Parameter<double>*>& params,
                                         const GradCheckOptions& options) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Graph<double> g(true);
    Var<double> l = loss(g);
    g.backward(l);
  }
  auto eval = [&] {
    Graph<double> g(false);
    return loss(g).value().item();
  };

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (Parameter<double>* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    const std::size_t n = p->value.numel();
    const std::size_t stride =
        options.max_entries == 0 || n <= options.max_entries ? 1 : (n + options.max_entries - 1) / options.max_entries;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p->value[i];
      p->value[i] = orig + options.eps;
      const double up = eval();
      p->value[i] = orig - options.eps;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = p->grad[i];
      ++entry.checked;
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        if (!entry.nonfinite_index) entry.nonfinite_index = i;
        continue;
      }
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double err = std::abs(analytic - numeric) / denom;
      if (err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.worst_analytic = analytic;
        entry.worst_numeric = numeric;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace slt
