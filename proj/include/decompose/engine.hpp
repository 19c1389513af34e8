#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "decompose/core.hpp"
#include "decompose/lowrank.hpp"
#include "decompose/rng.hpp"

namespace decompose {

enum class FactorSide { kU, kV };

// Residual-free update cache: A = X V and B = V^T V for U updates (and the
// transposed pair for V updates).
struct UpdateCache {
  Matrix a;  // dim x K
  Matrix b;  // K x K, symmetric PSD
};

struct EngineConfig {
  Index k = 1;
  Index max_em_iters = 200;
  Index max_bcd_iters = 50;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  double dead_source_threshold = 1e-12;
  // Broadcast (size 1) or per-column (size K) assignments.
  std::vector<PriorSpec> priors_u{PriorSpec{}};
  std::vector<PriorSpec> priors_v{PriorSpec{}};
  // Pool all columns of a factor into a single hyperparameter fit.
  bool shared_hyperparams = false;
  // Freeze the configured hyperparameters instead of fitting them.
  bool fit_hyperparams_u = true;
  bool fit_hyperparams_v = true;
  std::optional<std::pair<Index, Index>> projections;  // (m_r, n_r)
  Index oversample = flops::kOversample;
  int power_iters = flops::kPowerIters;
  double alpha_min = 1e-10;
  double alpha_max = 1e12;

  void validate(Index m, Index n) const;
  std::vector<PriorSpec> expanded_priors(FactorSide side) const;
};

struct IterationRecord {
  Index iteration = 0;
  std::string phase;  // "em" or "bcd"
  double monitor = 0.0;
  double alpha = 0.0;
  std::vector<std::vector<double>> theta_u;
  std::vector<std::vector<double>> theta_v;
  std::uint64_t flop_count = 0;
  std::vector<std::string> events;
};

struct RunReport {
  std::vector<IterationRecord> iterations;
  std::uint64_t total_flops = 0;
  double wall_seconds = 0.0;
  Index em_iterations = 0;
  Index bcd_iterations = 0;
  int dead_source_events = 0;
  int basis_pad_events = 0;
  double final_neg_log_joint = 0.0;
};

UpdateCache build_update_cache(const DataMatrix& x, const ModelState& state,
                               FactorSide side);

// mu^(k) = (A_k - U B_k + U_k B_kk) / B_kk, sigma^(k) = 1/sqrt(alpha B_kk).
// nullopt signals a dead source (B_kk at or below the threshold): the caller
// re-initialises the column.
std::optional<GaussianLikelihood> likelihood_params(
    const UpdateCache& cache, const FactorBank& factor, double alpha, Index k,
    double dead_source_threshold = 1e-12);

// Gaussian precision MLE given the current factors, clamped to
// [alpha_min, alpha_max].
double update_noise_precision(const DataMatrix& x, const ModelState& state,
                              double alpha_min = 1e-10,
                              double alpha_max = 1e12);

// Normalise the just-updated factor's columns, pushing the scale into the
// partner columns; collapsed columns are re-initialised from their prior.
void rescale_columns(ModelState& state, FactorSide updated,
                     double dead_source_threshold, RngHandle& rng,
                     std::vector<std::string>* events = nullptr);

// One blocked-Gibbs sweep over the side's columns (hyperparameter fit, then
// conditional sample, ascending k), followed by a column rescale.
void gibbs_sweep_factor(const DataMatrix& x, ModelState& state,
                        FactorSide side, RngHandle& rng,
                        const EngineConfig& cfg,
                        std::vector<std::string>* events = nullptr);

using BlockHook = std::function<void(FactorSide, Index)>;

// Same traversal with conditional modes; hyperparameters and alpha untouched.
void bcd_sweep_factor(const DataMatrix& x, ModelState& state, FactorSide side,
                      RngHandle& rng, const EngineConfig& cfg,
                      std::vector<std::string>* events = nullptr,
                      const BlockHook& after_block = {});

struct FitResult {
  ModelState state;
  RunReport report;
};

// Full run: init from the priors, EM phase, then BCD refinement.
FitResult fit(const DataMatrix& x, const EngineConfig& cfg);

}  // namespace decompose
