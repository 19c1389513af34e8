#pragma once

#include <limits>
#include <vector>

#include "decompose/rng.hpp"
#include "decompose/types.hpp"

namespace decompose {

struct TruncationRegion {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  static TruncationRegion unbounded() { return {}; }
  static TruncationRegion nonnegative() {
    return {0.0, std::numeric_limits<double>::infinity()};
  }
  static TruncationRegion nonpositive() {
    return {-std::numeric_limits<double>::infinity(), 0.0};
  }
};

// Region-dispatch constants in standardized units; each boundary is covered
// by a test.
//
// A finite bound further than this from the mean (in sigmas) leaves no
// representable probability mass to work with.
inline constexpr double kMaxStandardizedBound = 1e10;
// One-sided [a, inf): plain rejection while a <= this (acceptance >= ~0.33),
// exponential-proposal tail rejection above it.
inline constexpr double kOneSidedPlainMax = 0.45;
// Two-sided: plain rejection while the region holds at least this much mass.
inline constexpr double kTwoSidedPlainMinMass = 0.25;
// Two-sided tail: exponential proposal with an upper cut while
// lambda(a) * (b - a) >= this, uniform rejection below it.
inline constexpr double kTailUniformSwitch = 0.35;

// Exact draw from N(mu, sigma^2) restricted to the region.
double sample_truncated_normal(double mu, double sigma,
                               const TruncationRegion& region, RngHandle& rng);

// Vectorised forms; consume the stream exactly as the equivalent sequence of
// scalar calls.
Vector sample_truncated_normal(const Vector& mu, double sigma,
                               const TruncationRegion& region, RngHandle& rng);
Vector sample_truncated_normal(const Vector& mu, const Vector& sigma,
                               const std::vector<TruncationRegion>& regions,
                               RngHandle& rng);

// Exact Gamma(shape, rate) draws, shape-rate convention.
double sample_gamma(double shape, double rate, RngHandle& rng);
Vector sample_gamma(const Vector& shape, const Vector& rate, RngHandle& rng);

}  // namespace decompose
