#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slt/gradcheck.hpp"

namespace slt {

struct GradcheckOutcome {
  std::string module;
  bool passed = false;
  double max_error = 0.0;
  std::string detail;
};

/// Finite-difference checks (64-bit, eps 1e-5, tolerance 1e-4) for every
/// graph primitive, the CPTcn pipeline, disentangled attention including its
/// position table, CTC, and the joint model at toy size.
std::vector<GradcheckOutcome> run_gradcheck_suite(std::uint64_t seed = 0);

/// Same checks, one group at a time: "primitives", "cptcn", "drpe", "ctc", "model".
std::vector<GradcheckOutcome> run_gradcheck_group(const std::string& group, std::uint64_t seed = 0);

}  // namespace slt
