#include "decompose/mathutil.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace decompose {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))
}  // namespace

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / kSqrt2);
}

double log_normal_cdf(double x) {
  if (x > -37.0) {
    const double p = normal_cdf(x);
    if (p > 1e-300) return std::log(p);
  }
  // Mills-ratio asymptotic: Phi(x) ~ phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6)
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + std::log(series);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  }
  // Work with the smaller tail for accuracy, restore sign at the end.
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;

  // Initial guess: central linearisation for moderate q, iterated
  // tail asymptotic t = sqrt(-2 log q - log(2 pi t^2)) otherwise.
  double z;
  if (q > 0.2) {
    z = 2.5066282746310002 * (0.5 - q);  // linearise Phi about 0
  } else {
    double t = std::sqrt(-2.0 * std::log(q));
    for (int i = 0; i < 3; ++i) {
      t = std::sqrt(-2.0 * std::log(q) - 2.0 * kLogSqrt2Pi - 2.0 * std::log(t));
    }
    z = t;
  }
  // Solve Phi(-z) = q for z > 0 (lower-tail framed as upper for erfc accuracy),
  // i.e. find z with normal_cdf(-z) - q = 0 via safeguarded Newton.
  double lo = 0.0, hi = 40.0;
  for (int iter = 0; iter < 100; ++iter) {
    const double f = normal_cdf(-z) - q;
    if (f > 0.0) {
      lo = std::max(lo, z);
    } else {
      hi = std::min(hi, z);
    }
    const double pdf = std::exp(-0.5 * z * z - kLogSqrt2Pi);
    double step = (pdf > 0.0) ? f / pdf : 0.0;
    double next = z + step;
    if (!(next > lo && next < hi) || pdf == 0.0) {
      next = 0.5 * (lo + hi);
    }
    if (std::abs(next - z) <= 1e-16 * (1.0 + std::abs(z))) {
      z = next;
      break;
    }
    z = next;
  }
  const double result = -z;  // quantile of the lower tail q
  return upper ? -result : result;
}

double digamma(double x) { return boost::math::digamma(x); }

double trigamma(double x) { return boost::math::trigamma(x); }

}  // namespace decompose
