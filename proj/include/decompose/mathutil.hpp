#pragma once

namespace decompose {

// Standard normal CDF, accurate into the left tail (erfc-based).
double normal_cdf(double x);

// log(Phi(x)), stable for x down to about -1e7 (asymptotic expansion below
// the erfc underflow point near -37.5).
double log_normal_cdf(double x);

// Inverse standard normal CDF on (0, 1), accurate to ~1e-15 (safeguarded
// Newton on the erfc-based CDF).
double normal_quantile(double p);

// Digamma and trigamma.
double digamma(double x);
double trigamma(double x);

}  // namespace decompose
