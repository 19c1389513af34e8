#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "decompose/priors.hpp"
#include "decompose/types.hpp"

namespace decompose {

// Dense M x N observation matrix; all entries finite.
struct DataMatrix {
  Matrix values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  // Validating factory.
  static DataMatrix create(Matrix values);
};

// One factor matrix (U or V): dim x K columns plus per-column priors.
struct FactorBank {
  Matrix columns;                 // dim x K
  std::vector<PriorSpec> priors;  // size K

  Index dim() const { return columns.rows(); }
  Index k() const { return columns.cols(); }

  static FactorBank create(Matrix columns, std::vector<PriorSpec> priors);
  void validate() const;
};

struct ModelState {
  FactorBank u;
  FactorBank v;
  double alpha = 1.0;
  std::uint64_t rng_seed = 0;
  Index iteration = 0;
  // Single-sample surrogate for the EM lower bound (log joint at the
  // current sample); not claimed to equal the bound itself.
  double monitor = std::numeric_limits<double>::quiet_NaN();

  void validate() const;
};

// Rank-1 component U_k V_k^T.
struct Source {
  Index index = 0;
  Vector spatial;
  Vector temporal;
  double variance_explained = 0.0;  // elementwise variance of the rank-1 matrix
};

// X_hat = U V^T.
DataMatrix reconstruct(const FactorBank& u, const FactorBank& v);

// X - U V^T, or X - U_{-k} V_{-k}^T when a source is excluded.
Matrix residual(const DataMatrix& x, const FactorBank& u, const FactorBank& v,
                std::optional<Index> exclude = std::nullopt);

// Negative log joint under the flat hyperprior. A factor value outside its
// prior's support is surfaced via the flag rather than a bare Inf.
struct NegLogJoint {
  double value = 0.0;
  bool support_violation = false;
};
NegLogJoint neg_log_joint(const DataMatrix& x, const ModelState& state);

// Per-source views of the current state, in column order.
std::vector<Source> extract_sources(const ModelState& state);

// Elementwise variance of the outer product a b^T without forming it.
double outer_product_variance(const Vector& a, const Vector& b);

}  // namespace decompose
