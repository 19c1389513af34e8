#pragma once

#include <cstdint>
#include <optional>

#include "decompose/core.hpp"
#include "decompose/rng.hpp"
#include "decompose/types.hpp"

namespace decompose {

// Orthonormal projection bases and the reduced data matrix
// X^R = Q_u^T X Q_v. An axis whose rank equals its dimension is kept as an
// exact identity (reduction disabled along that axis; q matrix left empty).
struct ProjectionPair {
  Matrix q_u;      // M x m_r, empty when u_identity
  Matrix q_v;      // N x n_r, empty when v_identity
  Matrix x_reduced;
  bool u_identity = false;
  bool v_identity = false;
  int padded_u = 0;  // columns completed at random due to rank deficiency
  int padded_v = 0;
  double x_sq_norm = 0.0;       // ||X||_F^2
  double discarded_energy = 0.0;  // ||X||_F^2 - ||X^R||_F^2

  Index m_r() const { return x_reduced.rows(); }
  Index n_r() const { return x_reduced.cols(); }
};

// Randomized range finder per axis (Gaussian sketch, power iteration, QR,
// small-SVD truncation), then X^R.
ProjectionPair build_projection(const DataMatrix& x, Index m_r, Index n_r,
                                Index oversample, int power_iters,
                                RngHandle& rng);

// Project full-space factor columns into an axis basis (no-op on identity).
Matrix project_columns(const ProjectionPair& pp, const Matrix& columns,
                       bool u_axis);
// Lift reduced coordinates back to full space (no-op on identity).
Vector lift_column(const ProjectionPair& pp, const Vector& reduced, bool u_axis);

// Reduced-space update cache for one sweep.
struct ReducedCache {
  Matrix u_reduced;  // m_r x K
  Matrix v_reduced;  // n_r x K
  Matrix a_reduced;  // per-updated-side rows x K
  Matrix b_reduced;  // K x K
};

ReducedCache build_reduced_cache(const ProjectionPair& pp, Matrix u_reduced,
                                 Matrix v_reduced, bool updating_u);

// Full-space likelihood parameters from reduced quantities; nullopt signals a
// dead source (B^R_{k,k} at or below the threshold).
std::optional<GaussianLikelihood> likelihood_params_reduced(
    const ProjectionPair& pp, const ReducedCache& rc, double alpha, Index k,
    bool updating_u, double dead_source_threshold);

// ---------------------------------------------------------------------------
// FLOP accounting. This cost model is the artifact's own: per-EM-iteration
// multiply-add census of the cache/update path, with the one-time projection
// build and the factor lifts amortised over a nominal run length.
namespace flops {

inline constexpr Index kOversample = 10;
inline constexpr int kPowerIters = 1;
// Nominal iterations a fit runs for (default EM + BCD caps).
inline constexpr Index kAmortizationIters = 250;

std::uint64_t full_iteration(Index m, Index n, Index k);
std::uint64_t reduced_iteration(Index m, Index n, Index k, Index m_r, Index n_r);
std::uint64_t projection_build(Index m, Index n, Index m_r, Index n_r);
std::uint64_t estimate(Index m, Index n, Index k, Index m_r, Index n_r,
                       bool reduced);

}  // namespace flops

}  // namespace decompose
