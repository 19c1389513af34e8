#pragma once

#include <optional>
#include <string>
#include <vector>

#include "decompose/rng.hpp"
#include "decompose/types.hpp"

namespace decompose {

enum class PriorFamily {
  kUniform,
  kNonNegUniform,
  kNormal,
  kHalfNormal,
  kLaplace,
  kExponential,
  kStudentT,
  kHalfT,
  kDoubleLomax,
  kLomax,
};

// Exact identifiers used in configs and reports.
const char* family_name(PriorFamily family);
std::optional<PriorFamily> family_from_name(const std::string& name);

// Floor applied to fitted scale hyperparameters (collapsed columns).
inline constexpr double kScaleFloor = 1e-12;
// Log-grid search range for shape-type hyperparameters (T dof, Lomax shape);
// beyond the top the families are numerically Gaussian/exponential.
inline constexpr double kShapeSearchMin = 0.1;
inline constexpr double kShapeSearchMax = 1000.0;

// A prior family plus its hyperparameter vector theta. Layouts:
//   Uniform, NonNegUniform          {}
//   Normal, HalfNormal              {tau2}        variance > 0
//   Laplace                         {b}           scale > 0
//   Exponential                     {beta}        scale > 0
//   StudentT, HalfT                 {s, nu}       scale, dof > 0
//   DoubleLomax, Lomax              {beta, a}     scale, shape > 0
struct PriorSpec {
  PriorFamily family = PriorFamily::kUniform;
  std::vector<double> theta;

  static PriorSpec with_defaults(PriorFamily family);
  bool non_negative() const;
  bool improper() const;
  void validate() const;  // throws ConfigError on bad theta
};

// Per-element likelihood means with a shared per-column standard deviation.
struct GaussianLikelihood {
  Vector mu;
  double sigma = 1.0;
};

// Elementwise log f(u | theta); -inf outside the support, 0 inside for the
// improper flat families.
Vector log_density(const PriorSpec& spec, const Vector& values);
double log_density_scalar(const PriorSpec& spec, double u);

// Maximum-likelihood hyperparameter update. Closed form for most families;
// one warm-started EM sweep for T/Lomax types. Never returns a theta with a
// lower likelihood on `values` than the warm start.
std::vector<double> fit_ml(PriorFamily family, const Vector& values,
                           const std::vector<double>* warm_start = nullptr);

// One exact draw per element from p(u) proportional to
// N(u | mu_i, sigma^2) * f(u | theta). The compound families (T/Lomax types)
// draw their latent variable conditioned on `current`, the element's value
// from the previous sweep.
Vector posterior_sample(const PriorSpec& spec, const GaussianLikelihood& lik,
                        const Vector& current, RngHandle& rng);

// Elementwise argmax of the conditional posterior; closed form where one
// exists, bracketed derivative root-finding otherwise (1e-10 on the argument).
Vector posterior_mode(const PriorSpec& spec, const GaussianLikelihood& lik);

// n i.i.d. draws from the prior. Improper families fall back to N(0,1) /
// half-normal(1), which is only used for initialisation.
Vector draw_prior(const PriorSpec& spec, Index n, RngHandle& rng);

}  // namespace decompose
