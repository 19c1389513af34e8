#include "decompose/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "decompose/rng.hpp"

namespace decompose {

void SyntheticSpec::validate() const {
  if (m < 1 || n < 1) throw ConfigError("SyntheticSpec: need m, n >= 1");
  if (sources.empty()) throw ConfigError("SyntheticSpec: need at least one source");
  for (const auto& s : sources) {
    if (!(s.beta > 0.0)) throw ConfigError("SyntheticSpec: beta must be > 0");
    s.dense_prior.validate();
  }
  if (noise_sigma < 0.0) throw ConfigError("SyntheticSpec: noise_sigma must be >= 0");
}

std::pair<DataMatrix, GroundTruth> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RngHandle rng(spec.seed);

  Matrix x = Matrix::Zero(spec.m, spec.n);
  GroundTruth truth;
  truth.noise_sigma = spec.noise_sigma;

  Index index = 0;
  for (const auto& src : spec.sources) {
    Source s;
    s.index = index++;
    s.spatial = draw_prior(src.dense_prior, spec.m, rng);
    s.spatial /= s.spatial.norm();
    const PriorSpec sparse{PriorFamily::kExponential, {src.beta}};
    s.temporal = draw_prior(sparse, spec.n, rng);
    s.variance_explained = outer_product_variance(s.spatial, s.temporal);
    x += s.spatial * s.temporal.transpose();
    truth.sources.push_back(std::move(s));
  }

  if (spec.noise_sigma > 0.0) {
    for (Index i = 0; i < spec.m; ++i) {
      for (Index j = 0; j < spec.n; ++j) {
        x(i, j) += spec.noise_sigma * rng.normal();
      }
    }
  }
  return {DataMatrix::create(std::move(x)), std::move(truth)};
}

std::pair<DataMatrix, GroundTruth> inject_ground_truth(
    const DataMatrix& background, const std::vector<Source>& cells,
    double target_variance) {
  if (target_variance < 0.0) {
    throw ConfigError("inject_ground_truth: target variance must be >= 0");
  }
  Matrix x = background.values;
  GroundTruth truth;
  truth.target_variance = target_variance;

  for (const auto& cell : cells) {
    if (cell.spatial.size() != background.rows() ||
        cell.temporal.size() != background.cols()) {
      throw ShapeError("inject_ground_truth: cell shape does not match background");
    }
    const double var = outer_product_variance(cell.spatial, cell.temporal);
    if (!(var > 0.0)) {
      throw std::invalid_argument("inject_ground_truth: zero-variance cell");
    }
    const double c = std::sqrt(target_variance / var);
    Source scaled = cell;
    scaled.index = static_cast<Index>(truth.sources.size());
    scaled.spatial = cell.spatial * c;
    scaled.variance_explained =
        outer_product_variance(scaled.spatial, scaled.temporal);
    x += scaled.spatial * scaled.temporal.transpose();
    truth.scale_coefficients.push_back(c);
    truth.sources.push_back(std::move(scaled));
  }
  return {DataMatrix::create(std::move(x)), std::move(truth)};
}

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ShapeError("pearson: need equal lengths >= 2");
  }
  const double n = static_cast<double>(a.size());
  const Vector da = a.array() - a.sum() / n;
  const Vector db = b.array() - b.sum() / n;
  const double sa = da.norm(), sb = db.norm();
  if (!(sa > 0.0) || !(sb > 0.0)) {
    throw std::domain_error("pearson: zero-variance input");
  }
  return da.dot(db) / (sa * sb);
}

namespace {

Vector flatten(const Source& s) {
  const Index m = s.spatial.size(), n = s.temporal.size();
  Vector out(m * n);
  for (Index i = 0; i < m; ++i) {
    out.segment(i * n, n) = s.spatial[i] * s.temporal;
  }
  return out;
}

}  // namespace

double source_correlation(const Source& truth, const Source& recovered,
                          ScoreTarget target) {
  try {
    switch (target) {
      case ScoreTarget::kSpatial:
        return std::abs(pearson(truth.spatial, recovered.spatial));
      case ScoreTarget::kTemporal:
        return std::abs(pearson(truth.temporal, recovered.temporal));
      case ScoreTarget::kFull:
        return std::abs(pearson(flatten(truth), flatten(recovered)));
    }
  } catch (const std::domain_error&) {
    return 0.0;  // dead recovered source matches nothing
  }
  return 0.0;
}

double policy_median(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("policy_median: empty input");
  }
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

double model_score(const std::vector<Source>& truth,
                   const std::vector<std::vector<Source>>& runs,
                   ScoreTarget target) {
  if (truth.empty() || runs.empty()) {
    throw std::invalid_argument("model_score: need truth cells and runs");
  }
  double total = 0.0;
  for (const auto& cell : truth) {
    std::vector<double> best_per_run;
    best_per_run.reserve(runs.size());
    for (const auto& run : runs) {
      if (run.empty()) {
        throw std::invalid_argument("model_score: a run has no sources");
      }
      double best = 0.0;
      for (const auto& rec : run) {
        best = std::max(best, source_correlation(cell, rec, target));
      }
      best_per_run.push_back(best);
    }
    total += policy_median(std::move(best_per_run));
  }
  return total / static_cast<double>(truth.size());
}

double sparsity_log_ratio(const Vector& u) {
  const double l1 = u.cwiseAbs().sum();
  const double l2 = u.norm();
  if (!(l2 > 0.0)) return 0.0;
  return std::log(l1 / l2);
}

}  // namespace decompose
