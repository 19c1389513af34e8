#include <doctest.h>

#include <cmath>
#include <vector>

#include "decompose/priors.hpp"
#include "decompose/rng.hpp"
#include "oracles.hpp"

using namespace decompose;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector constant_vector(Index n, double v) {
  return Vector::Constant(n, v);
}

double tn_nonneg_cdf(double z, double mean, double sd) {
  return oracles::truncated_normal_cdf((z - mean) / sd, -mean / sd, kInf);
}

// Exact Student-T log likelihood for the numerical-MLE oracle.
double t_loglik(const Vector& values, double s, double nu) {
  const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                   0.5 * std::log(nu * M_PI) - std::log(s);
  double sum = static_cast<double>(values.size()) * c;
  for (Index i = 0; i < values.size(); ++i) {
    const double d = values[i] / s;
    sum -= 0.5 * (nu + 1.0) * std::log1p(d * d / nu);
  }
  return sum;
}

double lomax_loglik(const Vector& values, double beta, double a) {
  double sum = static_cast<double>(values.size()) *
               (std::log(a) - std::log(beta));
  for (Index i = 0; i < values.size(); ++i) {
    sum -= (a + 1.0) * std::log1p(values[i] / beta);
  }
  return sum;
}

// 2-D grid search with two zoom refinements; independent of the library's
// EM machinery.
std::pair<double, double> grid_mle_2d(
    const std::function<double(double, double)>& loglik, double a_lo,
    double a_hi, double b_lo, double b_hi) {
  double best_a = a_lo, best_b = b_lo, best = -kInf;
  for (int zoom = 0; zoom < 3; ++zoom) {
    constexpr int kSteps = 32;
    best = -kInf;
    for (int i = 0; i <= kSteps; ++i) {
      const double a =
          a_lo * std::pow(a_hi / a_lo, static_cast<double>(i) / kSteps);
      for (int j = 0; j <= kSteps; ++j) {
        const double b =
            b_lo * std::pow(b_hi / b_lo, static_cast<double>(j) / kSteps);
        const double v = loglik(a, b);
        if (v > best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    const double ra = std::pow(a_hi / a_lo, 1.5 / kSteps);
    const double rb = std::pow(b_hi / b_lo, 1.5 / kSteps);
    a_lo = best_a / ra;
    a_hi = best_a * ra;
    b_lo = best_b / rb;
    b_hi = best_b * rb;
  }
  return {best_a, best_b};
}

std::vector<PriorSpec> all_family_specs() {
  return {
      {PriorFamily::kUniform, {}},
      {PriorFamily::kNonNegUniform, {}},
      {PriorFamily::kNormal, {1.7}},
      {PriorFamily::kHalfNormal, {0.8}},
      {PriorFamily::kLaplace, {1.2}},
      {PriorFamily::kExponential, {0.9}},
      {PriorFamily::kStudentT, {1.1, 4.0}},
      {PriorFamily::kHalfT, {0.7, 3.0}},
      {PriorFamily::kDoubleLomax, {1.3, 2.5}},
      {PriorFamily::kLomax, {0.8, 3.0}},
  };
}

}  // namespace

TEST_CASE("log_density closed-form anchors") {
  CHECK(log_density_scalar({PriorFamily::kExponential, {1.0}}, 0.0) == 0.0);
  CHECK(log_density_scalar({PriorFamily::kNormal, {1.0}}, 0.0) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-14));
  // Lomax(beta=2, a=3) at u=1.
  const double expect = std::log(1.5) - 4.0 * std::log(1.5);
  CHECK(log_density_scalar({PriorFamily::kLomax, {2.0, 3.0}}, 1.0) ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("lomax density equals the gamma-exponential compound by quadrature") {
  const double beta = 2.0, a = 3.0, u = 1.0;
  // integral over r of r e^{-ru} Gamma(r | a, rate beta)
  const auto integrand = [&](double r) {
    const double log_gamma_pdf = a * std::log(beta) - std::lgamma(a) +
                                 (a - 1.0) * std::log(r) - beta * r;
    return r * std::exp(-r * u + log_gamma_pdf);
  };
  const double numeric = oracles::integrate(integrand, 1e-12, 200.0);
  CHECK(std::log(numeric) ==
        doctest::Approx(log_density_scalar({PriorFamily::kLomax, {beta, a}}, u))
            .epsilon(1e-8));
}

TEST_CASE("log_density tags values outside the support with -inf") {
  Vector v(3);
  v << -1.0, 0.5, 2.0;
  const Vector ld = log_density({PriorFamily::kExponential, {1.0}}, v);
  CHECK(std::isinf(ld[0]));
  CHECK(ld[0] < 0.0);
  CHECK(std::isfinite(ld[1]));
  const Vector ld2 = log_density({PriorFamily::kNonNegUniform, {}}, v);
  CHECK(std::isinf(ld2[0]));
  CHECK(ld2[1] == 0.0);
}

TEST_CASE("fit_ml closed forms: Laplace and Exponential anchors") {
  Vector v(3);
  v << -1.0, 2.0, -3.0;
  CHECK(fit_ml(PriorFamily::kLaplace, v)[0] == doctest::Approx(2.0));
  Vector w(2);
  w << 1.0, 3.0;
  CHECK(fit_ml(PriorFamily::kExponential, w)[0] == doctest::Approx(2.0));
  Vector z(4);
  z << 1.0, -1.0, 2.0, -2.0;
  CHECK(fit_ml(PriorFamily::kNormal, z)[0] == doctest::Approx(2.5));
  CHECK(fit_ml(PriorFamily::kUniform, z).empty());
}

TEST_CASE("fit_ml floors collapsed scales and rejects bad input") {
  const Vector zeros = Vector::Zero(10);
  CHECK(fit_ml(PriorFamily::kExponential, zeros)[0] == kScaleFloor);
  CHECK(fit_ml(PriorFamily::kNormal, zeros)[0] == kScaleFloor);
  Vector bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(fit_ml(PriorFamily::kNormal, bad));
  Vector one(1);
  one << 1.0;
  CHECK_THROWS(fit_ml(PriorFamily::kNormal, one));
}

TEST_CASE("fit_ml is idempotent at the optimum for closed-form families") {
  RngHandle rng(21);
  const Vector v = draw_prior({PriorFamily::kNormal, {2.0}}, 5000, rng);
  for (const auto family :
       {PriorFamily::kNormal, PriorFamily::kLaplace}) {
    const auto t1 = fit_ml(family, v.cwiseAbs());
    const auto t2 = fit_ml(family, v.cwiseAbs(), &t1);
    CHECK(std::abs(t2[0] - t1[0]) <= 1e-9 * t1[0]);
  }
}

TEST_CASE("student-t fit recovers generating parameters and the numerical MLE") {
  RngHandle rng(22);
  const PriorSpec truth{PriorFamily::kStudentT, {1.0, 5.0}};
  const Vector sample = draw_prior(truth, 100000, rng);

  // Iterate the warm-started single sweep to convergence.
  std::vector<double> theta = {2.0, 10.0};
  for (int i = 0; i < 400; ++i) {
    const auto next = fit_ml(PriorFamily::kStudentT, sample, &theta);
    const bool done = std::abs(next[0] - theta[0]) < 1e-12 &&
                      std::abs(next[1] - theta[1]) < 1e-10;
    theta = next;
    if (done) break;
  }
  CHECK(theta[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(theta[1] == doctest::Approx(5.0).epsilon(0.15));

  const auto [s_hat, nu_hat] = grid_mle_2d(
      [&](double s, double nu) { return t_loglik(sample, s, nu); }, 0.5, 2.0,
      2.0, 20.0);
  CHECK(theta[0] == doctest::Approx(s_hat).epsilon(0.05));
  CHECK(theta[1] == doctest::Approx(nu_hat).epsilon(0.15));
}

TEST_CASE("lomax fit recovers generating parameters and the numerical MLE") {
  RngHandle rng(23);
  const PriorSpec truth{PriorFamily::kLomax, {1.0, 3.0}};
  const Vector sample = draw_prior(truth, 100000, rng);

  std::vector<double> theta = {0.5, 1.5};
  for (int i = 0; i < 400; ++i) {
    const auto next = fit_ml(PriorFamily::kLomax, sample, &theta);
    const bool done = std::abs(next[0] - theta[0]) < 1e-12 &&
                      std::abs(next[1] - theta[1]) < 1e-10;
    theta = next;
    if (done) break;
  }
  CHECK(theta[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(theta[1] == doctest::Approx(3.0).epsilon(0.15));

  const auto [beta_hat, a_hat] = grid_mle_2d(
      [&](double beta, double a) { return lomax_loglik(sample, beta, a); },
      0.3, 3.0, 1.0, 10.0);
  CHECK(theta[0] == doctest::Approx(beta_hat).epsilon(0.05));
  CHECK(theta[1] == doctest::Approx(a_hat).epsilon(0.15));
}

TEST_CASE("fit_ml sweeps never decrease the likelihood versus the warm start") {
  RngHandle rng(24);
  for (const auto family : {PriorFamily::kStudentT, PriorFamily::kLomax,
                            PriorFamily::kHalfT, PriorFamily::kDoubleLomax}) {
    const Vector sample =
        draw_prior(PriorSpec::with_defaults(family), 2000, rng);
    std::vector<double> warm = {0.4, 8.0};
    for (int i = 0; i < 5; ++i) {
      const auto next = fit_ml(family, sample, &warm);
      const double before =
          log_density({family, warm}, sample).sum();
      const double after =
          log_density({family, next}, sample).sum();
      CHECK(after >= before - 1e-9 * std::abs(before));
      warm = next;
    }
  }
}

TEST_CASE("posterior_sample: flat prior reproduces the likelihood") {
  RngHandle rng(25);
  const Index n = 1000000;
  const GaussianLikelihood lik{Vector::Zero(n), 1.0};
  const Vector s = posterior_sample({PriorFamily::kUniform, {}}, lik,
                                    Vector::Zero(n), rng);
  CHECK(std::abs(s.mean()) < 0.01);
  const double var = (s.array() - s.mean()).square().sum() /
                     static_cast<double>(n - 1);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("posterior_sample: non-negative flat prior gives the half normal") {
  RngHandle rng(26);
  const Index n = 1000000;
  const GaussianLikelihood lik{Vector::Zero(n), 1.0};
  const Vector s = posterior_sample({PriorFamily::kNonNegUniform, {}}, lik,
                                    Vector::Zero(n), rng);
  CHECK(std::abs(s.mean() - 0.79788456080286535588) < 0.01);
  CHECK(s.minCoeff() >= 0.0);
}

TEST_CASE("posterior_sample: exponential prior passes KS against TN(1,1,[0,inf))") {
  RngHandle rng(27);
  const Index n = 100000;
  const GaussianLikelihood lik{constant_vector(n, 2.0), 1.0};
  const Vector s = posterior_sample({PriorFamily::kExponential, {1.0}}, lik,
                                    Vector::Zero(n), rng);
  std::vector<double> sample(s.data(), s.data() + n);
  const double p = oracles::ks_pvalue(
      sample, [](double z) { return tn_nonneg_cdf(z, 1.0, 1.0); });
  CHECK(p > 0.01);
}

TEST_CASE("posterior_sample: conjugate normal moments match closed form") {
  RngHandle rng(28);
  const Index n = 100000;
  const double tau2 = 2.5, sigma = 0.7, mu = 1.3;
  const GaussianLikelihood lik{constant_vector(n, mu), sigma};
  const Vector s = posterior_sample({PriorFamily::kNormal, {tau2}}, lik,
                                    Vector::Zero(n), rng);
  const double v = 1.0 / (1.0 / (sigma * sigma) + 1.0 / tau2);
  const double m = mu * tau2 / (tau2 + sigma * sigma);
  CHECK(std::abs(s.mean() - m) < 3.0 * std::sqrt(v / static_cast<double>(n)));
  const double var =
      (s.array() - s.mean()).square().sum() / static_cast<double>(n - 1);
  CHECK(std::abs(var - v) < 3.0 * v * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("posterior_sample: laplace mixture respects both branches") {
  RngHandle rng(29);
  const Index n = 200000;
  // mu = 0 is symmetric: both pieces get equal weight.
  const GaussianLikelihood lik{Vector::Zero(n), 1.0};
  const Vector s = posterior_sample({PriorFamily::kLaplace, {1.0}}, lik,
                                    Vector::Zero(n), rng);
  const double frac_pos =
      static_cast<double>((s.array() > 0.0).count()) / static_cast<double>(n);
  CHECK(frac_pos == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(s.mean()) < 0.01);
}

TEST_CASE("posterior_sample: far-tail likelihood still returns valid draws") {
  RngHandle rng(30);
  const Index n = 1000;
  const GaussianLikelihood lik{constant_vector(n, -45.0), 1.0};
  const Vector s = posterior_sample({PriorFamily::kNonNegUniform, {}}, lik,
                                    Vector::Zero(n), rng);
  CHECK(s.minCoeff() >= 0.0);
  CHECK(s.allFinite());
}

TEST_CASE("samples respect support across every non-negative family") {
  RngHandle rng(31);
  const Index n = 60000;
  const GaussianLikelihood lik{constant_vector(n, -0.4), 0.8};
  long total = 0;
  for (const auto& spec : all_family_specs()) {
    if (!spec.non_negative()) continue;
    const Vector cur = constant_vector(n, 0.5);
    const Vector s = posterior_sample(spec, lik, cur, rng);
    CHECK(s.minCoeff() >= 0.0);
    const Vector d = draw_prior(spec, n, rng);
    CHECK(d.minCoeff() >= 0.0);
    total += 2 * n;
  }
  CHECK(total >= 600000);
}

TEST_CASE("t augmentation chain matches the quadrature posterior") {
  const double s = 1.0, nu = 4.0, mu = 1.0, sigma = 1.0;
  const PriorSpec spec{PriorFamily::kStudentT, {s, nu}};
  const GaussianLikelihood lik{constant_vector(1, mu), sigma};

  // Stationary chain: each step draws lambda | u then u | lambda.
  RngHandle rng(32);
  Vector cur = constant_vector(1, mu);
  for (int burn = 0; burn < 2000; ++burn) {
    cur = posterior_sample(spec, lik, cur, rng);
  }
  const int n = 100000;
  std::vector<double> sample(static_cast<size_t>(n));
  for (auto& x : sample) {
    cur = posterior_sample(spec, lik, cur, rng);
    x = cur[0];
  }

  // Quadrature CDF of the exact posterior density.
  const auto unnorm = [&](double u) {
    const double d = (u - mu) / sigma;
    return std::exp(-0.5 * d * d + log_density_scalar(spec, u));
  };
  const int grid_n = 4001;
  const double lo = -9.0, hi = 11.0;
  std::vector<double> grid(grid_n), cdf(grid_n, 0.0);
  for (int i = 0; i < grid_n; ++i) {
    grid[static_cast<size_t>(i)] = lo + (hi - lo) * i / (grid_n - 1);
  }
  for (int i = 1; i < grid_n; ++i) {
    const double a = grid[static_cast<size_t>(i - 1)];
    const double b = grid[static_cast<size_t>(i)];
    cdf[static_cast<size_t>(i)] = cdf[static_cast<size_t>(i - 1)] +
                                  0.5 * (unnorm(a) + unnorm(b)) * (b - a);
  }
  const double total = cdf.back();
  const auto cdf_fn = [&](double z) {
    if (z <= lo) return 0.0;
    if (z >= hi) return 1.0;
    const double pos = (z - lo) / (hi - lo) * (grid_n - 1);
    const size_t i = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return (cdf[i] * (1.0 - frac) + cdf[i + 1] * frac) / total;
  };
  const double d = oracles::ks_statistic(sample, cdf_fn);
  CHECK(d < 0.01);
}

TEST_CASE("posterior_mode closed-form anchors") {
  const GaussianLikelihood lik2{constant_vector(1, 2.0), 1.0};
  CHECK(posterior_mode({PriorFamily::kExponential, {1.0}}, lik2)[0] ==
        doctest::Approx(1.0));
  const GaussianLikelihood lik05{constant_vector(1, 0.5), 1.0};
  CHECK(posterior_mode({PriorFamily::kLaplace, {1.0}}, lik05)[0] == 0.0);
  // Conjugate shrinkage.
  const GaussianLikelihood lik{constant_vector(1, 3.0), 1.0};
  CHECK(posterior_mode({PriorFamily::kNormal, {3.0}}, lik)[0] ==
        doctest::Approx(2.25));
  CHECK(posterior_mode({PriorFamily::kNonNegUniform, {}},
                       GaussianLikelihood{constant_vector(1, -2.0), 1.0})[0] ==
        0.0);
}

TEST_CASE("lomax posterior mode matches a dense grid argmax") {
  const PriorSpec spec{PriorFamily::kLomax, {1.0, 2.0}};
  const double mu = 3.0, sigma = 1.0;
  const GaussianLikelihood lik{constant_vector(1, mu), sigma};
  const double mode = posterior_mode(spec, lik)[0];
  const auto objective = [&](double u) {
    const double d = (u - mu) / sigma;
    return -0.5 * d * d + log_density_scalar(spec, u);
  };
  const double grid = oracles::grid_argmax(objective, 0.0, 13.0, 1000000);
  CHECK(std::abs(mode - grid) < 1e-4);
}

TEST_CASE("posterior_mode is a local maximum for every family") {
  RngHandle rng(33);
  for (const auto& spec : all_family_specs()) {
    for (int trial = 0; trial < 20; ++trial) {
      const double mu = 4.0 * rng.normal();
      const double sigma = 0.1 + 2.9 * rng.uniform();
      const GaussianLikelihood lik{constant_vector(1, mu), sigma};
      const double mode = posterior_mode(spec, lik)[0];
      const auto objective = [&](double u) {
        const double d = (u - mu) / sigma;
        return -0.5 * d * d + log_density_scalar(spec, u);
      };
      const double at = objective(mode);
      const double eps = 1e-4 * sigma;
      CAPTURE(family_name(spec.family));
      CAPTURE(mu);
      CAPTURE(sigma);
      CHECK(at >= objective(mode + eps) - 1e-9);
      CHECK(at >= objective(mode - eps) - 1e-9);
    }
  }
}

TEST_CASE("laplace mode approaches the likelihood mean as b grows") {
  const GaussianLikelihood lik{constant_vector(3, 0.0), 1.0};
  GaussianLikelihood shifted = lik;
  shifted.mu << -2.0, 0.7, 3.5;
  const Vector mode =
      posterior_mode({PriorFamily::kLaplace, {1e8}}, shifted);
  for (Index i = 0; i < 3; ++i) {
    CHECK(std::abs(mode[i] - shifted.mu[i]) < 1e-6);
  }
}

TEST_CASE("draw_prior sample means match family expectations") {
  RngHandle rng(34);
  const Index n = 100000;
  CHECK(draw_prior({PriorFamily::kExponential, {2.0}}, n, rng).mean() ==
        doctest::Approx(2.0).epsilon(0.02));
  CHECK(draw_prior({PriorFamily::kHalfNormal, {1.0}}, n, rng).mean() ==
        doctest::Approx(0.79788456080286535588).epsilon(0.02));
  // Lomax mean beta/(a-1) for a > 1.
  CHECK(draw_prior({PriorFamily::kLomax, {1.0, 3.0}}, n, rng).mean() ==
        doctest::Approx(0.5).epsilon(0.05));
  // Improper fallbacks are overdispersed standard draws.
  const Vector u = draw_prior({PriorFamily::kUniform, {}}, n, rng);
  CHECK(std::abs(u.mean()) < 0.02);
  const Vector nn = draw_prior({PriorFamily::kNonNegUniform, {}}, n, rng);
  CHECK(nn.minCoeff() >= 0.0);
}

TEST_CASE("family names round-trip and bad specs are rejected") {
  for (const auto& spec : all_family_specs()) {
    const auto parsed = family_from_name(family_name(spec.family));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == spec.family);
  }
  CHECK_FALSE(family_from_name("Cauchy").has_value());
  CHECK_THROWS_AS((PriorSpec{PriorFamily::kNormal, {}}.validate()), ConfigError);
  CHECK_THROWS_AS((PriorSpec{PriorFamily::kNormal, {-1.0}}.validate()),
                  ConfigError);
  CHECK_THROWS_AS((PriorSpec{PriorFamily::kLomax, {1.0}}.validate()),
                  ConfigError);
}
