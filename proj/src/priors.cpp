#include "decompose/priors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "decompose/mathutil.hpp"
#include "decompose/sampler.hpp"

namespace decompose {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.9189385332046727;

double mean_of(const Vector& v) { return v.sum() / static_cast<double>(v.size()); }

void require_finite(const Vector& values, const char* who) {
  if (!values.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": non-finite input");
  }
}

double floored_scale(double s) { return std::max(s, kScaleFloor); }

// ---------------------------------------------------------------------------
// Scalar log densities and their derivatives (segment interiors only).

double log_student_t(double u, double s, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * M_PI) - std::log(s) -
         0.5 * (nu + 1.0) * std::log1p((u / s) * (u / s) / nu);
}

double d_log_student_t(double u, double s, double nu) {
  return -(nu + 1.0) * u / (nu * s * s + u * u);
}

double log_lomax(double u, double beta, double a) {
  return std::log(a) - std::log(beta) - (a + 1.0) * std::log1p(u / beta);
}

double d_log_lomax(double u, double beta, double a) {
  return -(a + 1.0) / (beta + u);
}

// ---------------------------------------------------------------------------
// 1-D root finding on a log grid for decreasing functions (hyperparameter
// stationarity equations).

double solve_decreasing(const std::function<double(double)>& g, double lo,
                        double hi) {
  if (g(lo) <= 0.0) return lo;
  if (g(hi) >= 0.0) return hi;
  constexpr int kGridPoints = 60;
  const double log_lo = std::log(lo), log_hi = std::log(hi);
  double a = lo, b = hi;
  double prev = lo;
  for (int i = 1; i <= kGridPoints; ++i) {
    const double x = std::exp(log_lo + (log_hi - log_lo) * i / kGridPoints);
    if (g(x) <= 0.0) {
      a = prev;
      b = x;
      break;
    }
    prev = x;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (a + b);
    if (g(mid) > 0.0) {
      a = mid;
    } else {
      b = mid;
    }
    if (b - a <= 1e-12 * b) break;
  }
  return 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// T / Lomax EM sweeps (one partial, warm-started M-step per call).

double log_likelihood(const PriorSpec& spec, const Vector& values) {
  return log_density(spec, values).sum();
}

std::vector<double> student_t_sweep(const Vector& values,
                                    const std::vector<double>& warm) {
  const double s = warm[0], nu = warm[1];
  const Index n = values.size();
  Vector w(n);
  double mean_wu2 = 0.0, mean_logw_minus_w = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = values[i] / s;
    w[i] = (nu + 1.0) / (nu + d * d);
    mean_wu2 += w[i] * values[i] * values[i];
    mean_logw_minus_w += std::log(w[i]) - w[i];
  }
  mean_wu2 /= static_cast<double>(n);
  mean_logw_minus_w /= static_cast<double>(n);
  const double s_new = floored_scale(std::sqrt(mean_wu2));

  // EM stationarity in nu given the E-step weights.
  const double c =
      1.0 + mean_logw_minus_w + digamma(0.5 * (nu + 1.0)) - std::log(0.5 * (nu + 1.0));
  auto g = [&](double v) { return std::log(0.5 * v) - digamma(0.5 * v) + c; };
  const double nu_new = solve_decreasing(g, kShapeSearchMin, kShapeSearchMax);
  return {s_new, nu_new};
}

std::vector<double> lomax_sweep(const Vector& abs_values,
                                const std::vector<double>& warm) {
  const double beta = warm[0], a = warm[1];
  const Index n = abs_values.size();
  double s1 = 0.0, mean_log = 0.0;
  for (Index i = 0; i < n; ++i) {
    s1 += (a + 1.0) / (beta + abs_values[i]);
    mean_log += std::log(beta + abs_values[i]);
  }
  s1 /= static_cast<double>(n);
  const double s2 = digamma(a + 1.0) - mean_log / static_cast<double>(n);

  const double gap = std::log(s1) - s2;  // >= 0 by Jensen
  auto h = [&](double x) { return std::log(x) - digamma(x) - gap; };
  const double a_new = solve_decreasing(h, kShapeSearchMin, kShapeSearchMax);
  const double beta_new = floored_scale(a_new / s1);
  return {beta_new, a_new};
}

// ---------------------------------------------------------------------------
// Posterior helpers.

struct NormalCombine {
  double mean;
  double sd;
};

// Combine N(mu, sigma^2) likelihood with a zero-mean normal prior of
// variance prior_var.
NormalCombine combine_normal(double mu, double sigma, double prior_var) {
  const double v = 1.0 / (1.0 / (sigma * sigma) + 1.0 / prior_var);
  return {mu * v / (sigma * sigma), std::sqrt(v)};
}

// Exponential-prior posterior: truncated normal on [0, inf) with a
// rate-shifted mean.
double sample_exponential_posterior(double mu, double sigma, double rate,
                                    RngHandle& rng) {
  return sample_truncated_normal(mu - sigma * sigma * rate, sigma,
                                 TruncationRegion::nonnegative(), rng);
}

// Laplace-prior posterior: two-piece truncated normal mixture.
double sample_laplace_posterior(double mu, double sigma, double inv_b,
                                RngHandle& rng) {
  const double shift = sigma * sigma * inv_b;
  const double mu_pos = mu - shift, mu_neg = mu + shift;
  const double lw_pos = -mu * inv_b + log_normal_cdf(mu_pos / sigma);
  const double lw_neg = mu * inv_b + log_normal_cdf(-mu_neg / sigma);
  const double diff = lw_neg - lw_pos;
  double p_pos;
  if (diff > 40.0) {
    p_pos = 0.0;
  } else if (diff < -40.0) {
    p_pos = 1.0;
  } else {
    p_pos = 1.0 / (1.0 + std::exp(diff));
  }
  if (rng.uniform() < p_pos) {
    return sample_truncated_normal(mu_pos, sigma,
                                   TruncationRegion::nonnegative(), rng);
  }
  return sample_truncated_normal(mu_neg, sigma, TruncationRegion::nonpositive(),
                                 rng);
}

double soft_threshold(double mu, double t) {
  const double m = std::abs(mu) - t;
  return m > 0.0 ? (mu > 0.0 ? m : -m) : 0.0;
}

// Numerical argmax of -(u-mu)^2/(2 sigma^2) + log f(u) over the bracket
// [min(0,mu) - 10 sigma, max(0,mu) + 10 sigma] clipped to the support.
// Segments are the support intervals on which log f is differentiable.
double numeric_mode(const PriorSpec& spec, double mu, double sigma) {
  const double lo_raw = std::min(0.0, mu) - 10.0 * sigma;
  const double hi_raw = std::max(0.0, mu) + 10.0 * sigma;
  const double sig2 = sigma * sigma;

  auto objective = [&](double u) {
    const double d = u - mu;
    return -0.5 * d * d / sig2 + log_density_scalar(spec, u);
  };
  auto derivative = [&](double u) {
    double dl = 0.0;
    switch (spec.family) {
      case PriorFamily::kStudentT:
      case PriorFamily::kHalfT:
        dl = d_log_student_t(u, spec.theta[0], spec.theta[1]);
        break;
      case PriorFamily::kLomax:
        dl = d_log_lomax(u, spec.theta[0], spec.theta[1]);
        break;
      case PriorFamily::kDoubleLomax:
        dl = (u >= 0.0 ? 1.0 : -1.0) * d_log_lomax(std::abs(u), spec.theta[0],
                                                   spec.theta[1]);
        break;
      default:
        break;
    }
    return (mu - u) / sig2 + dl;
  };

  std::vector<std::pair<double, double>> segments;
  if (spec.non_negative()) {
    segments.push_back({std::max(0.0, lo_raw), hi_raw});
  } else if (spec.family == PriorFamily::kDoubleLomax) {
    segments.push_back({lo_raw, 0.0});
    segments.push_back({0.0, hi_raw});
  } else {
    segments.push_back({lo_raw, hi_raw});
  }

  std::vector<double> candidates;
  constexpr int kScanIntervals = 256;
  for (const auto& [lo, hi] : segments) {
    if (!(lo < hi)) continue;
    candidates.push_back(lo);
    candidates.push_back(hi);
    double x_prev = lo;
    double f_prev = derivative(lo);
    for (int i = 1; i <= kScanIntervals; ++i) {
      const double x = lo + (hi - lo) * i / kScanIntervals;
      const double f = derivative(x);
      if ((f_prev > 0.0) != (f > 0.0)) {
        double a = x_prev, b = x, fa = f_prev;
        while (b - a > 1e-10) {
          const double mid = 0.5 * (a + b);
          const double fm = derivative(mid);
          if ((fa > 0.0) != (fm > 0.0)) {
            b = mid;
          } else {
            a = mid;
            fa = fm;
          }
        }
        candidates.push_back(0.5 * (a + b));
      }
      x_prev = x;
      f_prev = f;
    }
  }

  double best = candidates.front();
  double best_val = objective(best);
  for (const double c : candidates) {
    const double v = objective(c);
    if (v > best_val) {
      best_val = v;
      best = c;
    }
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------

const char* family_name(PriorFamily family) {
  switch (family) {
    case PriorFamily::kUniform: return "Uniform";
    case PriorFamily::kNonNegUniform: return "NonNegUniform";
    case PriorFamily::kNormal: return "Normal";
    case PriorFamily::kHalfNormal: return "HalfNormal";
    case PriorFamily::kLaplace: return "Laplace";
    case PriorFamily::kExponential: return "Exponential";
    case PriorFamily::kStudentT: return "StudentT";
    case PriorFamily::kHalfT: return "HalfT";
    case PriorFamily::kDoubleLomax: return "DoubleLomax";
    case PriorFamily::kLomax: return "Lomax";
  }
  return "?";
}

std::optional<PriorFamily> family_from_name(const std::string& name) {
  static const std::pair<const char*, PriorFamily> kTable[] = {
      {"Uniform", PriorFamily::kUniform},
      {"NonNegUniform", PriorFamily::kNonNegUniform},
      {"Normal", PriorFamily::kNormal},
      {"HalfNormal", PriorFamily::kHalfNormal},
      {"Laplace", PriorFamily::kLaplace},
      {"Exponential", PriorFamily::kExponential},
      {"StudentT", PriorFamily::kStudentT},
      {"HalfT", PriorFamily::kHalfT},
      {"DoubleLomax", PriorFamily::kDoubleLomax},
      {"Lomax", PriorFamily::kLomax},
  };
  for (const auto& [n, f] : kTable) {
    if (name == n) return f;
  }
  return std::nullopt;
}

PriorSpec PriorSpec::with_defaults(PriorFamily family) {
  switch (family) {
    case PriorFamily::kUniform:
    case PriorFamily::kNonNegUniform:
      return {family, {}};
    case PriorFamily::kNormal:
    case PriorFamily::kHalfNormal:
    case PriorFamily::kLaplace:
    case PriorFamily::kExponential:
      return {family, {1.0}};
    case PriorFamily::kStudentT:
    case PriorFamily::kHalfT:
    case PriorFamily::kDoubleLomax:
    case PriorFamily::kLomax:
      return {family, {1.0, 3.0}};
  }
  return {};
}

bool PriorSpec::non_negative() const {
  switch (family) {
    case PriorFamily::kNonNegUniform:
    case PriorFamily::kHalfNormal:
    case PriorFamily::kExponential:
    case PriorFamily::kHalfT:
    case PriorFamily::kLomax:
      return true;
    default:
      return false;
  }
}

bool PriorSpec::improper() const {
  return family == PriorFamily::kUniform ||
         family == PriorFamily::kNonNegUniform;
}

void PriorSpec::validate() const {
  size_t arity = 0;
  switch (family) {
    case PriorFamily::kUniform:
    case PriorFamily::kNonNegUniform:
      arity = 0;
      break;
    case PriorFamily::kNormal:
    case PriorFamily::kHalfNormal:
    case PriorFamily::kLaplace:
    case PriorFamily::kExponential:
      arity = 1;
      break;
    default:
      arity = 2;
      break;
  }
  if (theta.size() != arity) {
    throw ConfigError(std::string(family_name(family)) + ": expected " +
                      std::to_string(arity) + " hyperparameters, got " +
                      std::to_string(theta.size()));
  }
  for (const double t : theta) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw ConfigError(std::string(family_name(family)) +
                        ": hyperparameters must be positive and finite");
    }
  }
}

double log_density_scalar(const PriorSpec& spec, double u) {
  switch (spec.family) {
    case PriorFamily::kUniform:
      return 0.0;
    case PriorFamily::kNonNegUniform:
      return u >= 0.0 ? 0.0 : -kInf;
    case PriorFamily::kNormal: {
      const double tau2 = spec.theta[0];
      return -0.5 * std::log(tau2) - kLogSqrt2Pi - 0.5 * u * u / tau2;
    }
    case PriorFamily::kHalfNormal: {
      if (u < 0.0) return -kInf;
      const double tau2 = spec.theta[0];
      return M_LN2 - 0.5 * std::log(tau2) - kLogSqrt2Pi - 0.5 * u * u / tau2;
    }
    case PriorFamily::kLaplace: {
      const double b = spec.theta[0];
      return -std::log(2.0 * b) - std::abs(u) / b;
    }
    case PriorFamily::kExponential: {
      if (u < 0.0) return -kInf;
      const double beta = spec.theta[0];
      return -std::log(beta) - u / beta;
    }
    case PriorFamily::kStudentT:
      return log_student_t(u, spec.theta[0], spec.theta[1]);
    case PriorFamily::kHalfT:
      if (u < 0.0) return -kInf;
      return M_LN2 + log_student_t(u, spec.theta[0], spec.theta[1]);
    case PriorFamily::kDoubleLomax:
      return log_lomax(std::abs(u), spec.theta[0], spec.theta[1]) - M_LN2;
    case PriorFamily::kLomax:
      if (u < 0.0) return -kInf;
      return log_lomax(u, spec.theta[0], spec.theta[1]);
  }
  return -kInf;
}

Vector log_density(const PriorSpec& spec, const Vector& values) {
  spec.validate();
  Vector out(values.size());
  for (Index i = 0; i < values.size(); ++i) {
    out[i] = log_density_scalar(spec, values[i]);
  }
  return out;
}

std::vector<double> fit_ml(PriorFamily family, const Vector& values,
                           const std::vector<double>* warm_start) {
  require_finite(values, "fit_ml");
  if (values.size() < 2) {
    throw std::invalid_argument("fit_ml: need at least two values");
  }
  if (PriorSpec{family, {}}.non_negative() && values.minCoeff() < 0.0) {
    throw std::domain_error("fit_ml: negative value under non-negative prior");
  }

  switch (family) {
    case PriorFamily::kUniform:
    case PriorFamily::kNonNegUniform:
      return {};
    case PriorFamily::kNormal:
    case PriorFamily::kHalfNormal:
      return {floored_scale(values.squaredNorm() / static_cast<double>(values.size()))};
    case PriorFamily::kLaplace:
      return {floored_scale(values.cwiseAbs().sum() / static_cast<double>(values.size()))};
    case PriorFamily::kExponential:
      return {floored_scale(mean_of(values))};
    case PriorFamily::kStudentT:
    case PriorFamily::kHalfT: {
      const std::vector<double> warm =
          warm_start ? *warm_start : PriorSpec::with_defaults(family).theta;
      // Half-T shares the T machinery: densities differ by a constant factor.
      const std::vector<double> cand = student_t_sweep(values, warm);
      if (log_likelihood({family, cand}, values) >=
          log_likelihood({family, warm}, values)) {
        return cand;
      }
      return warm;
    }
    case PriorFamily::kDoubleLomax:
    case PriorFamily::kLomax: {
      const std::vector<double> warm =
          warm_start ? *warm_start : PriorSpec::with_defaults(family).theta;
      const std::vector<double> cand = lomax_sweep(values.cwiseAbs(), warm);
      if (log_likelihood({family, cand}, values) >=
          log_likelihood({family, warm}, values)) {
        return cand;
      }
      return warm;
    }
  }
  return {};
}

Vector posterior_sample(const PriorSpec& spec, const GaussianLikelihood& lik,
                        const Vector& current, RngHandle& rng) {
  spec.validate();
  if (!(lik.sigma > 0.0) || !std::isfinite(lik.sigma)) {
    throw std::invalid_argument("posterior_sample: sigma must be positive");
  }
  const Index n = lik.mu.size();
  if (current.size() != n) {
    throw ShapeError("posterior_sample: current/mu lengths differ");
  }
  Vector out(n);
  const double sigma = lik.sigma;

  switch (spec.family) {
    case PriorFamily::kUniform:
      for (Index i = 0; i < n; ++i) {
        out[i] = lik.mu[i] + sigma * rng.normal();
      }
      return out;
    case PriorFamily::kNonNegUniform:
      for (Index i = 0; i < n; ++i) {
        out[i] = sample_truncated_normal(lik.mu[i], sigma,
                                         TruncationRegion::nonnegative(), rng);
      }
      return out;
    case PriorFamily::kNormal: {
      const double tau2 = spec.theta[0];
      for (Index i = 0; i < n; ++i) {
        const auto nc = combine_normal(lik.mu[i], sigma, tau2);
        out[i] = nc.mean + nc.sd * rng.normal();
      }
      return out;
    }
    case PriorFamily::kHalfNormal: {
      const double tau2 = spec.theta[0];
      for (Index i = 0; i < n; ++i) {
        const auto nc = combine_normal(lik.mu[i], sigma, tau2);
        out[i] = sample_truncated_normal(nc.mean, nc.sd,
                                         TruncationRegion::nonnegative(), rng);
      }
      return out;
    }
    case PriorFamily::kExponential: {
      const double rate = 1.0 / spec.theta[0];
      for (Index i = 0; i < n; ++i) {
        out[i] = sample_exponential_posterior(lik.mu[i], sigma, rate, rng);
      }
      return out;
    }
    case PriorFamily::kLaplace: {
      const double inv_b = 1.0 / spec.theta[0];
      for (Index i = 0; i < n; ++i) {
        out[i] = sample_laplace_posterior(lik.mu[i], sigma, inv_b, rng);
      }
      return out;
    }
    case PriorFamily::kStudentT:
    case PriorFamily::kHalfT: {
      const double s = spec.theta[0], nu = spec.theta[1];
      for (Index i = 0; i < n; ++i) {
        const double d = current[i] / s;
        const double lambda =
            sample_gamma(0.5 * (nu + 1.0), 0.5 * (nu + d * d), rng);
        const auto nc = combine_normal(lik.mu[i], sigma, s * s / lambda);
        if (spec.family == PriorFamily::kStudentT) {
          out[i] = nc.mean + nc.sd * rng.normal();
        } else {
          out[i] = sample_truncated_normal(
              nc.mean, nc.sd, TruncationRegion::nonnegative(), rng);
        }
      }
      return out;
    }
    case PriorFamily::kDoubleLomax:
    case PriorFamily::kLomax: {
      const double beta = spec.theta[0], a = spec.theta[1];
      for (Index i = 0; i < n; ++i) {
        const double r =
            sample_gamma(a + 1.0, beta + std::abs(current[i]), rng);
        if (spec.family == PriorFamily::kLomax) {
          out[i] = sample_exponential_posterior(lik.mu[i], sigma, r, rng);
        } else {
          out[i] = sample_laplace_posterior(lik.mu[i], sigma, r, rng);
        }
      }
      return out;
    }
  }
  return out;
}

Vector posterior_mode(const PriorSpec& spec, const GaussianLikelihood& lik) {
  spec.validate();
  if (!(lik.sigma > 0.0) || !std::isfinite(lik.sigma)) {
    throw std::invalid_argument("posterior_mode: sigma must be positive");
  }
  const Index n = lik.mu.size();
  Vector out(n);
  const double sigma = lik.sigma;
  const double sig2 = sigma * sigma;

  switch (spec.family) {
    case PriorFamily::kUniform:
      return lik.mu;
    case PriorFamily::kNonNegUniform:
      return lik.mu.cwiseMax(0.0);
    case PriorFamily::kNormal: {
      const double tau2 = spec.theta[0];
      return lik.mu * (tau2 / (tau2 + sig2));
    }
    case PriorFamily::kHalfNormal: {
      const double tau2 = spec.theta[0];
      return (lik.mu * (tau2 / (tau2 + sig2))).cwiseMax(0.0);
    }
    case PriorFamily::kExponential: {
      const double shift = sig2 / spec.theta[0];
      return (lik.mu.array() - shift).cwiseMax(0.0).matrix();
    }
    case PriorFamily::kLaplace: {
      const double t = sig2 / spec.theta[0];
      for (Index i = 0; i < n; ++i) {
        out[i] = soft_threshold(lik.mu[i], t);
      }
      return out;
    }
    default:
      for (Index i = 0; i < n; ++i) {
        out[i] = numeric_mode(spec, lik.mu[i], sigma);
      }
      return out;
  }
}

Vector draw_prior(const PriorSpec& spec, Index n, RngHandle& rng) {
  spec.validate();
  Vector out(n);
  switch (spec.family) {
    case PriorFamily::kUniform:
      for (Index i = 0; i < n; ++i) out[i] = rng.normal();
      return out;
    case PriorFamily::kNonNegUniform:
      for (Index i = 0; i < n; ++i) out[i] = std::abs(rng.normal());
      return out;
    case PriorFamily::kNormal: {
      const double tau = std::sqrt(spec.theta[0]);
      for (Index i = 0; i < n; ++i) out[i] = tau * rng.normal();
      return out;
    }
    case PriorFamily::kHalfNormal: {
      const double tau = std::sqrt(spec.theta[0]);
      for (Index i = 0; i < n; ++i) out[i] = tau * std::abs(rng.normal());
      return out;
    }
    case PriorFamily::kLaplace: {
      const double b = spec.theta[0];
      for (Index i = 0; i < n; ++i) {
        const double mag = b * rng.exponential();
        out[i] = rng.uniform() < 0.5 ? -mag : mag;
      }
      return out;
    }
    case PriorFamily::kExponential: {
      const double beta = spec.theta[0];
      for (Index i = 0; i < n; ++i) out[i] = beta * rng.exponential();
      return out;
    }
    case PriorFamily::kStudentT:
    case PriorFamily::kHalfT: {
      const double s = spec.theta[0], nu = spec.theta[1];
      for (Index i = 0; i < n; ++i) {
        const double lambda = sample_gamma(0.5 * nu, 0.5 * nu, rng);
        const double x = s * rng.normal() / std::sqrt(lambda);
        out[i] = spec.family == PriorFamily::kHalfT ? std::abs(x) : x;
      }
      return out;
    }
    case PriorFamily::kDoubleLomax:
    case PriorFamily::kLomax: {
      const double beta = spec.theta[0], a = spec.theta[1];
      for (Index i = 0; i < n; ++i) {
        const double r = sample_gamma(a, beta, rng);
        const double mag = rng.exponential() / r;
        if (spec.family == PriorFamily::kLomax) {
          out[i] = mag;
        } else {
          out[i] = rng.uniform() < 0.5 ? -mag : mag;
        }
      }
      return out;
    }
  }
  return out;
}

}  // namespace decompose
