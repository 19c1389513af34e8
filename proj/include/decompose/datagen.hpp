#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "decompose/core.hpp"
#include "decompose/types.hpp"

namespace decompose {

// One synthetic source: a dense filter drawn from `dense_prior` (unit
// L2-normalised) outer-multiplied with a sparse exponential filter of scale
// beta.
struct SourceSpec {
  PriorSpec dense_prior = PriorSpec::with_defaults(PriorFamily::kNormal);
  double beta = 1.0;
};

struct SyntheticSpec {
  Index m = 1000;
  Index n = 1000;
  std::vector<SourceSpec> sources = {{{}, 2.0}, {{}, 1.0}, {{}, 0.5}};
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  std::vector<Source> sources;  // reproduce the noiseless signal exactly
  double noise_sigma = 0.0;
  double target_variance = 0.0;           // sigma^2_GT of an injection
  std::vector<double> scale_coefficients; // c_k applied per injected cell
};

// X = sum_k dense_k sparse_k^T + noise_sigma * iid standard normal.
std::pair<DataMatrix, GroundTruth> generate_synthetic(const SyntheticSpec& spec);

// Scale each cell's rank-1 matrix to elementwise variance target_variance and
// superimpose onto the background.
std::pair<DataMatrix, GroundTruth> inject_ground_truth(
    const DataMatrix& background, const std::vector<Source>& cells,
    double target_variance);

// Sample Pearson correlation; throws std::domain_error on zero variance.
double pearson(const Vector& a, const Vector& b);

// Which filters enter the correlation.
enum class ScoreTarget { kFull, kSpatial, kTemporal };

// score = mean_i( median_n( max_k |rho(S_i, S_hat_k^(n))| ) ), medians of
// even length taking the lower-middle element; zero-variance recovered
// sources count as correlation 0.
double model_score(const std::vector<Source>& truth,
                   const std::vector<std::vector<Source>>& runs,
                   ScoreTarget target = ScoreTarget::kFull);

// Correlation of one truth source against one recovered source under the
// chosen target (0 when the recovered source has no variance).
double source_correlation(const Source& truth, const Source& recovered,
                          ScoreTarget target);

// Diagnostic sparsity measure log(||u||_1 / ||u||_2).
double sparsity_log_ratio(const Vector& u);

// Lower-middle median (even lengths take the element at n/2 - 1).
double policy_median(std::vector<double> values);

}  // namespace decompose
