#include "decompose/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "decompose/mathutil.hpp"

namespace decompose {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxAttempts = 100000;

[[noreturn]] void attempts_exceeded() {
  throw std::runtime_error("truncated normal: rejection attempts exceeded");
}

// Standard normal on [a, b] via raw draws; caller guarantees decent mass.
double plain_rejection(double a, double b, RngHandle& rng) {
  for (int i = 0; i < kMaxAttempts; ++i) {
    const double z = rng.normal();
    if (z >= a && z <= b) return z;
  }
  attempts_exceeded();
}

// Robert's shifted-exponential proposal for [a, b] with a > 0; b may be inf.
double tail_rejection(double a, double b, RngHandle& rng) {
  const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (int i = 0; i < kMaxAttempts; ++i) {
    const double z = a + rng.exponential() / lambda;
    if (z > b) continue;
    const double d = z - lambda;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
  }
  attempts_exceeded();
}

// Uniform proposal on [a, b] with the max-density envelope.
double uniform_rejection(double a, double b, RngHandle& rng) {
  const double c = (a <= 0.0 && b >= 0.0) ? 0.0 : (a > 0.0 ? a : b);
  for (int i = 0; i < kMaxAttempts; ++i) {
    const double z = a + (b - a) * rng.uniform();
    if (rng.uniform() <= std::exp(0.5 * (c * c - z * z))) return z;
  }
  attempts_exceeded();
}

// Standardized sampler: N(0,1) restricted to [a, b], a < b.
double sample_standard(double a, double b, RngHandle& rng) {
  if (a == -kInf && b == kInf) return rng.normal();
  // Reflect so the region sits on the non-negative side of its bulk.
  if (b != kInf && (a == -kInf || a + b < 0.0)) {
    return -sample_standard(-b, -a, rng);
  }
  if (b == kInf) {
    if (a <= kOneSidedPlainMax) return plain_rejection(a, b, rng);
    return tail_rejection(a, b, rng);
  }
  const double mass = normal_cdf(b) - normal_cdf(a);
  if (mass >= kTwoSidedPlainMinMass) return plain_rejection(a, b, rng);
  if (a > kOneSidedPlainMax) {
    const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
    if (lambda * (b - a) >= kTailUniformSwitch) return tail_rejection(a, b, rng);
  }
  return uniform_rejection(a, b, rng);
}

void check_region(double a, double b) {
  if (!(a < b)) {
    throw std::invalid_argument("truncated normal: lower must be < upper");
  }
  if ((std::isfinite(a) && std::abs(a) > kMaxStandardizedBound) ||
      (std::isfinite(b) && std::abs(b) > kMaxStandardizedBound)) {
    throw std::invalid_argument(
        "truncated normal: standardized bound beyond +-1e10");
  }
}

}  // namespace

double sample_truncated_normal(double mu, double sigma,
                               const TruncationRegion& region, RngHandle& rng) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("truncated normal: sigma must be positive");
  }
  const double a = (region.lower - mu) / sigma;
  const double b = (region.upper - mu) / sigma;
  check_region(a, b);
  const double z = sample_standard(a, b, rng);
  double x = mu + sigma * z;
  // Guard the support against de-standardization round-off at the bounds.
  if (x < region.lower) x = region.lower;
  if (x > region.upper) x = region.upper;
  return x;
}

Vector sample_truncated_normal(const Vector& mu, double sigma,
                               const TruncationRegion& region, RngHandle& rng) {
  Vector out(mu.size());
  for (Index i = 0; i < mu.size(); ++i) {
    out[i] = sample_truncated_normal(mu[i], sigma, region, rng);
  }
  return out;
}

Vector sample_truncated_normal(const Vector& mu, const Vector& sigma,
                               const std::vector<TruncationRegion>& regions,
                               RngHandle& rng) {
  if (mu.size() != sigma.size() ||
      static_cast<size_t>(mu.size()) != regions.size()) {
    throw ShapeError("truncated normal: mu/sigma/region lengths differ");
  }
  Vector out(mu.size());
  for (Index i = 0; i < mu.size(); ++i) {
    out[i] = sample_truncated_normal(mu[i], sigma[i],
                                     regions[static_cast<size_t>(i)], rng);
  }
  return out;
}

double sample_gamma(double shape, double rate, RngHandle& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw std::invalid_argument("gamma: shape and rate must be positive");
  }
  // Marsaglia-Tsang squeeze; shapes below one via the boost
  // Gamma(shape) = Gamma(shape + 1) * U^(1/shape).
  double boost = 1.0;
  double k = shape;
  if (k < 1.0) {
    boost = std::pow(rng.uniform(), 1.0 / k);
    k += 1.0;
  }
  const double d = k - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (int i = 0; i < kMaxAttempts; ++i) {
    const double x = rng.normal();
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 ||
        std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return boost * d * v / rate;
    }
  }
  throw std::runtime_error("gamma: rejection attempts exceeded");
}

Vector sample_gamma(const Vector& shape, const Vector& rate, RngHandle& rng) {
  if (shape.size() != rate.size()) {
    throw ShapeError("gamma: shape/rate lengths differ");
  }
  Vector out(shape.size());
  for (Index i = 0; i < shape.size(); ++i) {
    out[i] = sample_gamma(shape[i], rate[i], rng);
  }
  return out;
}

}  // namespace decompose
