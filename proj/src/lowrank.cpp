#include "decompose/lowrank.hpp"

#include <cmath>

namespace decompose {

namespace {

// Orthonormal basis of the dominant `rank`-dimensional range of `target`
// (dim x other): Gaussian sketch, optional power iterations with
// re-orthonormalisation, QR, then small-SVD truncation to `rank` columns.
// Columns beyond the numerical rank of the sketch are completed with random
// orthonormal directions and counted in *padded.
Matrix axis_basis(const Matrix& target, Index rank, Index oversample,
                  int power_iters, RngHandle& rng, int* padded) {
  const Index dim = target.rows();
  const Index other = target.cols();
  const Index sketch_cols = std::min(rank + oversample, dim);

  Matrix omega(other, sketch_cols);
  for (Index i = 0; i < other; ++i) {
    for (Index j = 0; j < sketch_cols; ++j) {
      omega(i, j) = rng.normal();
    }
  }
  Matrix y = target * omega;
  for (int it = 0; it < power_iters; ++it) {
    Eigen::HouseholderQR<Matrix> qr(y);
    Matrix q = qr.householderQ() * Matrix::Identity(dim, sketch_cols);
    y = target * (target.transpose() * q);
  }
  Eigen::HouseholderQR<Matrix> qr(y);
  Matrix q_full = qr.householderQ() * Matrix::Identity(dim, sketch_cols);

  // Truncate to the best `rank` directions of the sketch.
  Matrix b = q_full.transpose() * target;  // sketch_cols x other
  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  Index numeric_rank = 0;
  const double tol = sv.size() > 0 ? sv[0] * 1e-12 : 0.0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > tol && sv[i] > 0.0) ++numeric_rank;
  }
  Matrix q = q_full * svd.matrixU().leftCols(std::min(rank, sv.size()));
  if (q.cols() < rank) {
    const Index old = q.cols();
    q.conservativeResize(Eigen::NoChange, rank);
    q.rightCols(rank - old).setZero();
    numeric_rank = std::min(numeric_rank, old);
  }

  if (numeric_rank < rank) {
    *padded += static_cast<int>(rank - numeric_rank);
    for (Index j = numeric_rank; j < rank; ++j) {
      // Random direction orthogonalised against the basis built so far.
      Vector w(dim);
      double norm = 0.0;
      do {
        for (Index i = 0; i < dim; ++i) w[i] = rng.normal();
        for (int pass = 0; pass < 2; ++pass) {
          for (Index c = 0; c < j; ++c) {
            w -= q.col(c).dot(w) * q.col(c);
          }
        }
        norm = w.norm();
      } while (norm < 1e-8);
      q.col(j) = w / norm;
    }
  }
  return q;
}

}  // namespace

ProjectionPair build_projection(const DataMatrix& x, Index m_r, Index n_r,
                                Index oversample, int power_iters,
                                RngHandle& rng) {
  const Index m = x.rows(), n = x.cols();
  if (m_r < 1 || m_r > m || n_r < 1 || n_r > n) {
    throw ConfigError("build_projection: ranks must satisfy 1 <= m_r <= M, 1 <= n_r <= N");
  }
  ProjectionPair pp;
  pp.x_sq_norm = x.values.squaredNorm();
  pp.u_identity = (m_r == m);
  pp.v_identity = (n_r == n);

  if (!pp.u_identity) {
    pp.q_u = axis_basis(x.values, m_r, oversample, power_iters, rng, &pp.padded_u);
  }
  if (!pp.v_identity) {
    pp.q_v = axis_basis(x.values.transpose(), n_r, oversample, power_iters, rng,
                        &pp.padded_v);
  }

  if (pp.u_identity && pp.v_identity) {
    pp.x_reduced = x.values;
  } else if (pp.u_identity) {
    pp.x_reduced = x.values * pp.q_v;
  } else if (pp.v_identity) {
    pp.x_reduced = pp.q_u.transpose() * x.values;
  } else {
    pp.x_reduced = pp.q_u.transpose() * (x.values * pp.q_v);
  }
  pp.discarded_energy = std::max(0.0, pp.x_sq_norm - pp.x_reduced.squaredNorm());
  return pp;
}

Matrix project_columns(const ProjectionPair& pp, const Matrix& columns,
                       bool u_axis) {
  if (u_axis ? pp.u_identity : pp.v_identity) return columns;
  const Matrix& q = u_axis ? pp.q_u : pp.q_v;
  return q.transpose() * columns;
}

Vector lift_column(const ProjectionPair& pp, const Vector& reduced,
                   bool u_axis) {
  if (u_axis ? pp.u_identity : pp.v_identity) return reduced;
  const Matrix& q = u_axis ? pp.q_u : pp.q_v;
  return q * reduced;
}

ReducedCache build_reduced_cache(const ProjectionPair& pp, Matrix u_reduced,
                                 Matrix v_reduced, bool updating_u) {
  ReducedCache rc;
  if (updating_u) {
    rc.a_reduced = pp.x_reduced * v_reduced;
    rc.b_reduced = v_reduced.transpose() * v_reduced;
  } else {
    rc.a_reduced = pp.x_reduced.transpose() * u_reduced;
    rc.b_reduced = u_reduced.transpose() * u_reduced;
  }
  rc.u_reduced = std::move(u_reduced);
  rc.v_reduced = std::move(v_reduced);
  return rc;
}

std::optional<GaussianLikelihood> likelihood_params_reduced(
    const ProjectionPair& pp, const ReducedCache& rc, double alpha, Index k,
    bool updating_u, double dead_source_threshold) {
  const Matrix& own = updating_u ? rc.u_reduced : rc.v_reduced;
  const double bkk = rc.b_reduced(k, k);
  if (!(bkk > dead_source_threshold)) return std::nullopt;
  const Vector m_reduced =
      (rc.a_reduced.col(k) - own * rc.b_reduced.col(k) + own.col(k) * bkk) / bkk;
  GaussianLikelihood lik;
  lik.mu = lift_column(pp, m_reduced, updating_u);
  lik.sigma = 1.0 / std::sqrt(alpha * bkk);
  return lik;
}

namespace flops {

namespace {
std::uint64_t u(Index v) { return static_cast<std::uint64_t>(v); }

// One factor sweep of the cache/update path: A, B, then per-column
// mu/sigma work (2*dim*K^2 for U B_k across columns plus 4*dim*K vector ops).
std::uint64_t sweep(Index rows, Index cols, Index k) {
  return 2 * u(rows) * u(cols) * u(k)   // A
         + 2 * u(cols) * u(k) * u(k)    // B
         + 2 * u(rows) * u(k) * u(k)    // per-column U * B_k
         + 4 * u(rows) * u(k);          // per-column vector arithmetic
}

// Range-finder build for one axis: sketch passes (1 + 2q), QR factor-and-form,
// the small-matrix product Q^T X, its SVD, and forming the truncated basis.
std::uint64_t axis_build(Index dim, Index other, Index rank) {
  const Index l = std::min(rank + kOversample, dim);
  const std::uint64_t pass = 2 * u(dim) * u(other) * u(l);
  return (1 + 2 * u(kPowerIters)) * pass  // sketch + power iterations
         + 4 * u(dim) * u(l) * u(l)       // QR factor + form Q
         + pass                           // B = Q^T X
         + 2 * u(l) * u(l) * u(other)     // small SVD
         + 2 * u(dim) * u(l) * u(rank);   // truncated basis Q * W
}
}  // namespace

std::uint64_t full_iteration(Index m, Index n, Index k) {
  return sweep(m, n, k) + sweep(n, m, k);
}

std::uint64_t reduced_iteration(Index m, Index n, Index k, Index m_r,
                                Index n_r) {
  std::uint64_t total = sweep(m_r, n_r, k) + sweep(n_r, m_r, k);
  std::uint64_t one_time = 0;
  if (m_r < m) one_time += 2 * u(m) * u(m_r) * u(k);  // final U lift
  if (n_r < n) one_time += 2 * u(n) * u(n_r) * u(k);  // final V lift
  one_time += projection_build(m, n, m_r, n_r);
  total += one_time / u(kAmortizationIters);
  return total;
}

std::uint64_t projection_build(Index m, Index n, Index m_r, Index n_r) {
  std::uint64_t total = 0;
  if (m_r < m) total += axis_build(m, n, m_r);
  if (n_r < n) total += axis_build(n, m, n_r);
  // X^R via the already-available sketch product on the cheapest route.
  if (m_r < m && n_r < n) {
    const Index l = std::min(m_r + kOversample, m);
    total += 2 * u(l) * u(n) * u(n_r) + 2 * u(m_r) * u(l) * u(n_r);
  } else if (m_r < m) {
    const Index l = std::min(m_r + kOversample, m);
    total += 2 * u(m_r) * u(l) * u(n);
  } else if (n_r < n) {
    const Index l = std::min(n_r + kOversample, n);
    total += 2 * u(n_r) * u(l) * u(m);
  }
  return total;
}

std::uint64_t estimate(Index m, Index n, Index k, Index m_r, Index n_r,
                       bool reduced) {
  return reduced ? reduced_iteration(m, n, k, m_r, n_r)
                 : full_iteration(m, n, k);
}

}  // namespace flops

}  // namespace decompose
