#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slt {

/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here rather than taken from
/// <random>, whose algorithms vary between standard libraries.
using Rng = std::mt19937_64;

inline constexpr std::string_view kRngName = "mt19937_64/box-muller/v1";

/// Uniform in [0, 1) with 53 random bits.
double uniform01(Rng& rng);
/// Uniform in [lo, hi) .
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [lo, hi], rejection-sampled so there is no modulo bias.
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
/// Standard normal via the Box-Muller transform, one draw per call.
double normal(Rng& rng);

/// Mixes a base seed with stream identifiers into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace slt
