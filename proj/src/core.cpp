#include "decompose/core.hpp"

#include <cmath>

namespace decompose {

namespace {
constexpr double kLog2Pi = 1.8378770664093456;
}

DataMatrix DataMatrix::create(Matrix values) {
  if (values.rows() < 1 || values.cols() < 1) {
    throw ShapeError("DataMatrix: need at least one row and one column");
  }
  if (!values.allFinite()) {
    throw std::invalid_argument("DataMatrix: non-finite entries");
  }
  return DataMatrix{std::move(values)};
}

FactorBank FactorBank::create(Matrix columns, std::vector<PriorSpec> priors) {
  FactorBank bank{std::move(columns), std::move(priors)};
  bank.validate();
  return bank;
}

void FactorBank::validate() const {
  if (k() < 1 || k() > dim()) {
    throw ShapeError("FactorBank: require 1 <= K <= dim");
  }
  if (priors.size() != static_cast<size_t>(k())) {
    throw ShapeError("FactorBank: one prior per column required");
  }
  for (Index j = 0; j < k(); ++j) {
    const auto& spec = priors[static_cast<size_t>(j)];
    spec.validate();
    if (spec.non_negative() && columns.col(j).minCoeff() < 0.0) {
      throw std::invalid_argument(
          "FactorBank: negative value in a non-negative-prior column");
    }
  }
}

void ModelState::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("ModelState: alpha must be positive and finite");
  }
  if (u.k() != v.k()) {
    throw ShapeError("ModelState: factor banks disagree on K");
  }
}

DataMatrix reconstruct(const FactorBank& u, const FactorBank& v) {
  if (u.k() != v.k()) {
    throw ShapeError("reconstruct: factor banks disagree on K");
  }
  return DataMatrix{u.columns * v.columns.transpose()};
}

Matrix residual(const DataMatrix& x, const FactorBank& u, const FactorBank& v,
                std::optional<Index> exclude) {
  if (u.k() != v.k()) {
    throw ShapeError("residual: factor banks disagree on K");
  }
  if (x.rows() != u.dim() || x.cols() != v.dim()) {
    throw ShapeError("residual: data shape does not match factors");
  }
  if (exclude && (*exclude < 0 || *exclude >= u.k())) {
    throw ShapeError("residual: excluded source index out of range");
  }
  if (!exclude) {
    return x.values - u.columns * v.columns.transpose();
  }
  // Zeroing the excluded column computes X - U_{-k} V_{-k}^T exactly,
  // without the cancellation an add-back would introduce.
  Matrix u_rest = u.columns;
  u_rest.col(*exclude).setZero();
  return x.values - u_rest * v.columns.transpose();
}

NegLogJoint neg_log_joint(const DataMatrix& x, const ModelState& state) {
  state.validate();
  const double mn = static_cast<double>(x.rows()) * static_cast<double>(x.cols());
  const double rss = residual(x, state.u, state.v).squaredNorm();

  double prior_terms = 0.0;
  bool violation = false;
  const auto accumulate = [&](const FactorBank& bank) {
    for (Index j = 0; j < bank.k(); ++j) {
      const Vector ld =
          log_density(bank.priors[static_cast<size_t>(j)], bank.columns.col(j));
      for (Index i = 0; i < ld.size(); ++i) {
        if (std::isinf(ld[i])) {
          violation = true;
        } else {
          prior_terms += ld[i];
        }
      }
    }
  };
  accumulate(state.u);
  accumulate(state.v);

  if (violation) {
    return {std::numeric_limits<double>::infinity(), true};
  }
  const double value = 0.5 * state.alpha * rss - prior_terms -
                       0.5 * mn * (std::log(state.alpha) - kLog2Pi);
  return {value, false};
}

double outer_product_variance(const Vector& a, const Vector& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double mean_sq = (a.squaredNorm() / na) * (b.squaredNorm() / nb);
  const double mean = (a.sum() / na) * (b.sum() / nb);
  return std::max(0.0, mean_sq - mean * mean);
}

std::vector<Source> extract_sources(const ModelState& state) {
  std::vector<Source> sources;
  sources.reserve(static_cast<size_t>(state.u.k()));
  for (Index j = 0; j < state.u.k(); ++j) {
    Source s;
    s.index = j;
    s.spatial = state.u.columns.col(j);
    s.temporal = state.v.columns.col(j);
    s.variance_explained = outer_product_variance(s.spatial, s.temporal);
    sources.push_back(std::move(s));
  }
  return sources;
}

}  // namespace decompose
