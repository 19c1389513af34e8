#include "decompose/engine.hpp"

#include <chrono>
#include <cmath>

namespace decompose {

namespace {

constexpr double kLog2Pi = 1.8378770664093456;

FactorBank& bank_of(ModelState& state, FactorSide side) {
  return side == FactorSide::kU ? state.u : state.v;
}
FactorBank& partner_of(ModelState& state, FactorSide side) {
  return side == FactorSide::kU ? state.v : state.u;
}

void log_event(std::vector<std::string>* events, std::string msg) {
  if (events) events->push_back(std::move(msg));
}

const char* side_name(FactorSide side) {
  return side == FactorSide::kU ? "u" : "v";
}

// Shared-hyperparameter fit: pool every column of the bank into one call.
void fit_shared(FactorBank& bank) {
  const Index dim = bank.dim(), k = bank.k();
  Vector pooled(dim * k);
  for (Index j = 0; j < k; ++j) {
    pooled.segment(j * dim, dim) = bank.columns.col(j);
  }
  const auto& warm = bank.priors[0].theta;
  const auto theta = fit_ml(bank.priors[0].family, pooled,
                            warm.empty() ? nullptr : &warm);
  for (auto& spec : bank.priors) spec.theta = theta;
}

void reinit_column(FactorBank& bank, Index k, RngHandle& rng) {
  bank.columns.col(k) = draw_prior(bank.priors[static_cast<size_t>(k)],
                                   bank.dim(), rng);
}

std::vector<std::vector<double>> theta_snapshot(const FactorBank& bank) {
  std::vector<std::vector<double>> out;
  out.reserve(bank.priors.size());
  for (const auto& spec : bank.priors) out.push_back(spec.theta);
  return out;
}

}  // namespace

void EngineConfig::validate(Index m, Index n) const {
  if (k < 1 || k > std::min(m, n)) {
    throw ConfigError("EngineConfig: require 1 <= K <= min(M, N)");
  }
  if (max_em_iters < 1 || max_bcd_iters < 1) {
    throw ConfigError("EngineConfig: iteration caps must be >= 1");
  }
  if (!(tol > 0.0)) {
    throw ConfigError("EngineConfig: tol must be positive");
  }
  for (const auto* priors : {&priors_u, &priors_v}) {
    if (priors->size() != 1 && priors->size() != static_cast<size_t>(k)) {
      throw ConfigError("EngineConfig: priors must be broadcast or per-column");
    }
    for (const auto& spec : *priors) spec.validate();
    if (shared_hyperparams) {
      for (const auto& spec : *priors) {
        if (spec.family != priors->front().family) {
          throw ConfigError(
              "EngineConfig: shared hyperparameters need one family per factor");
        }
      }
    }
  }
  if (projections) {
    const auto [m_r, n_r] = *projections;
    if (m_r < k || m_r > m || n_r < k || n_r > n) {
      throw ConfigError(
          "EngineConfig: projections must satisfy K <= M_R <= M, K <= N_R <= N");
    }
  }
}

std::vector<PriorSpec> EngineConfig::expanded_priors(FactorSide side) const {
  const auto& priors = side == FactorSide::kU ? priors_u : priors_v;
  std::vector<PriorSpec> out;
  out.reserve(static_cast<size_t>(k));
  for (Index j = 0; j < k; ++j) {
    PriorSpec spec = priors.size() == 1 ? priors[0]
                                        : priors[static_cast<size_t>(j)];
    if (spec.theta.empty() && !spec.improper()) {
      spec = PriorSpec::with_defaults(spec.family);
    }
    out.push_back(std::move(spec));
  }
  return out;
}

UpdateCache build_update_cache(const DataMatrix& x, const ModelState& state,
                               FactorSide side) {
  UpdateCache cache;
  if (side == FactorSide::kU) {
    cache.a = x.values * state.v.columns;
    cache.b = state.v.columns.transpose() * state.v.columns;
  } else {
    cache.a = x.values.transpose() * state.u.columns;
    cache.b = state.u.columns.transpose() * state.u.columns;
  }
  return cache;
}

std::optional<GaussianLikelihood> likelihood_params(
    const UpdateCache& cache, const FactorBank& factor, double alpha, Index k,
    double dead_source_threshold) {
  const double bkk = cache.b(k, k);
  if (!(bkk > dead_source_threshold)) return std::nullopt;
  GaussianLikelihood lik;
  lik.mu = (cache.a.col(k) - factor.columns * cache.b.col(k) +
            factor.columns.col(k) * bkk) /
           bkk;
  lik.sigma = 1.0 / std::sqrt(alpha * bkk);
  return lik;
}

double update_noise_precision(const DataMatrix& x, const ModelState& state,
                              double alpha_min, double alpha_max) {
  const double rss = residual(x, state.u, state.v).squaredNorm();
  const double mn =
      static_cast<double>(x.rows()) * static_cast<double>(x.cols());
  double alpha = rss > 0.0 ? mn / rss : alpha_max;
  return std::clamp(alpha, alpha_min, alpha_max);
}

void rescale_columns(ModelState& state, FactorSide updated,
                     double dead_source_threshold, RngHandle& rng,
                     std::vector<std::string>* events) {
  FactorBank& own = bank_of(state, updated);
  FactorBank& partner = partner_of(state, updated);
  for (Index k = 0; k < own.k(); ++k) {
    const double c = own.columns.col(k).norm();
    if (c < dead_source_threshold) {
      reinit_column(own, k, rng);
      log_event(events, std::string("dead_source rescale ") +
                            side_name(updated) + " k=" + std::to_string(k));
      continue;
    }
    own.columns.col(k) /= c;
    partner.columns.col(k) *= c;
  }
}

namespace {

// Column pass shared by the Gibbs and BCD sweeps; `sample` toggles
// conditional sampling versus conditional modes.
void sweep_columns(const DataMatrix& x, ModelState& state, FactorSide side,
                   RngHandle& rng, const EngineConfig& cfg, bool sample,
                   std::vector<std::string>* events,
                   const BlockHook& after_block) {
  FactorBank& bank = bank_of(state, side);
  const bool fit_theta =
      sample && (side == FactorSide::kU ? cfg.fit_hyperparams_u
                                        : cfg.fit_hyperparams_v);

  if (fit_theta && cfg.shared_hyperparams) fit_shared(bank);

  const UpdateCache cache = build_update_cache(x, state, side);
  for (Index k = 0; k < bank.k(); ++k) {
    auto& spec = bank.priors[static_cast<size_t>(k)];
    if (fit_theta && !cfg.shared_hyperparams && !spec.improper()) {
      const auto warm = spec.theta;
      spec.theta = fit_ml(spec.family, bank.columns.col(k),
                          warm.empty() ? nullptr : &warm);
    }
    const auto lik = likelihood_params(cache, bank, state.alpha, k,
                                       cfg.dead_source_threshold);
    if (!lik) {
      reinit_column(bank, k, rng);
      log_event(events, std::string("dead_source sweep ") + side_name(side) +
                            " k=" + std::to_string(k));
      continue;
    }
    if (sample) {
      bank.columns.col(k) =
          posterior_sample(spec, *lik, bank.columns.col(k), rng);
    } else {
      bank.columns.col(k) = posterior_mode(spec, *lik);
    }
    if (after_block) after_block(side, k);
  }
  rescale_columns(state, side, cfg.dead_source_threshold, rng, events);
}

}  // namespace

void gibbs_sweep_factor(const DataMatrix& x, ModelState& state,
                        FactorSide side, RngHandle& rng,
                        const EngineConfig& cfg,
                        std::vector<std::string>* events) {
  sweep_columns(x, state, side, rng, cfg, /*sample=*/true, events, {});
}

void bcd_sweep_factor(const DataMatrix& x, ModelState& state, FactorSide side,
                      RngHandle& rng, const EngineConfig& cfg,
                      std::vector<std::string>* events,
                      const BlockHook& after_block) {
  sweep_columns(x, state, side, rng, cfg, /*sample=*/false, events,
                after_block);
}

namespace {

// Reduced-path state shared across one fit.
struct LowRankRun {
  ProjectionPair pp;

  double residual_energy(const ModelState& state) const {
    const Matrix u_red = project_columns(pp, state.u.columns, true);
    const Matrix v_red = project_columns(pp, state.v.columns, false);
    return (pp.x_reduced - u_red * v_red.transpose()).squaredNorm() +
           pp.discarded_energy;
  }
};

// Gibbs/BCD sweep on the reduced update equations; sampling and priors stay
// in full space, the cache work happens in reduced coordinates.
void sweep_columns_reduced(const LowRankRun& lr, ModelState& state,
                           FactorSide side, RngHandle& rng,
                           const EngineConfig& cfg, bool sample,
                           std::vector<std::string>* events) {
  FactorBank& bank = bank_of(state, side);
  const bool updating_u = side == FactorSide::kU;
  const bool fit_theta =
      sample && (updating_u ? cfg.fit_hyperparams_u : cfg.fit_hyperparams_v);
  if (fit_theta && cfg.shared_hyperparams) fit_shared(bank);

  ReducedCache rc = build_reduced_cache(
      lr.pp, project_columns(lr.pp, state.u.columns, true),
      project_columns(lr.pp, state.v.columns, false), updating_u);

  for (Index k = 0; k < bank.k(); ++k) {
    auto& spec = bank.priors[static_cast<size_t>(k)];
    if (fit_theta && !cfg.shared_hyperparams && !spec.improper()) {
      const auto warm = spec.theta;
      spec.theta = fit_ml(spec.family, bank.columns.col(k),
                          warm.empty() ? nullptr : &warm);
    }
    const auto lik = likelihood_params_reduced(lr.pp, rc, state.alpha, k,
                                               updating_u,
                                               cfg.dead_source_threshold);
    if (!lik) {
      reinit_column(bank, k, rng);
      log_event(events, std::string("dead_source sweep ") + side_name(side) +
                            " k=" + std::to_string(k));
    } else if (sample) {
      bank.columns.col(k) =
          posterior_sample(spec, *lik, bank.columns.col(k), rng);
    } else {
      bank.columns.col(k) = posterior_mode(spec, *lik);
    }
    // Keep the updated side's reduced coordinates current for later columns.
    Matrix& own_red = updating_u ? rc.u_reduced : rc.v_reduced;
    own_red.col(k) = project_columns(
        lr.pp, Matrix(bank.columns.col(k)), updating_u);
  }
  rescale_columns(state, side, cfg.dead_source_threshold, rng, events);
}

// Monitor = log joint at the current sample (negated neg_log_joint); under
// the reduced path the residual energy uses the projected surrogate.
double compute_monitor(const DataMatrix& x, ModelState& state,
                       const LowRankRun* lr, RngHandle& rng,
                       std::vector<std::string>* events) {
  const double mn =
      static_cast<double>(x.rows()) * static_cast<double>(x.cols());
  if (lr) {
    double prior_terms = 0.0;
    for (const FactorBank* bank : {&state.u, &state.v}) {
      for (Index j = 0; j < bank->k(); ++j) {
        prior_terms +=
            log_density(bank->priors[static_cast<size_t>(j)],
                        bank->columns.col(j))
                .sum();
      }
    }
    const double rss = lr->residual_energy(state);
    return -(0.5 * state.alpha * rss - prior_terms -
             0.5 * mn * (std::log(state.alpha) - kLog2Pi));
  }
  NegLogJoint nlj = neg_log_joint(x, state);
  if (nlj.support_violation) {
    // Re-initialise offending columns so the run can continue.
    for (FactorBank* bank : {&state.u, &state.v}) {
      for (Index j = 0; j < bank->k(); ++j) {
        const auto& spec = bank->priors[static_cast<size_t>(j)];
        if (spec.non_negative() && bank->columns.col(j).minCoeff() < 0.0) {
          reinit_column(*bank, j, rng);
          log_event(events, "support_violation k=" + std::to_string(j));
        }
      }
    }
    nlj = neg_log_joint(x, state);
  }
  return -nlj.value;
}

}  // namespace

FitResult fit(const DataMatrix& x, const EngineConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate(x.rows(), x.cols());

  RngHandle rng(cfg.seed);
  ModelState state;
  state.rng_seed = cfg.seed;
  state.alpha = 1.0;

  // Initialise both banks from their priors, U columns first.
  {
    auto priors_u = cfg.expanded_priors(FactorSide::kU);
    auto priors_v = cfg.expanded_priors(FactorSide::kV);
    Matrix u(x.rows(), cfg.k), v(x.cols(), cfg.k);
    for (Index j = 0; j < cfg.k; ++j) {
      u.col(j) = draw_prior(priors_u[static_cast<size_t>(j)], x.rows(), rng);
    }
    for (Index j = 0; j < cfg.k; ++j) {
      v.col(j) = draw_prior(priors_v[static_cast<size_t>(j)], x.cols(), rng);
    }
    state.u = FactorBank::create(std::move(u), std::move(priors_u));
    state.v = FactorBank::create(std::move(v), std::move(priors_v));
  }

  std::optional<LowRankRun> lowrank;
  if (cfg.projections) {
    lowrank.emplace();
    lowrank->pp = build_projection(x, cfg.projections->first,
                                   cfg.projections->second, cfg.oversample,
                                   cfg.power_iters, rng);
  }
  const LowRankRun* lr = lowrank ? &*lowrank : nullptr;
  const Index m_r = lowrank ? lowrank->pp.m_r() : x.rows();
  const Index n_r = lowrank ? lowrank->pp.n_r() : x.cols();
  const std::uint64_t iter_flops = flops::estimate(
      x.rows(), x.cols(), cfg.k, m_r, n_r, lowrank.has_value());

  RunReport report;
  if (lowrank) {
    report.basis_pad_events = lowrank->pp.padded_u + lowrank->pp.padded_v;
  }

  const auto record_iteration = [&](const char* phase, double monitor,
                                    std::vector<std::string> events) {
    IterationRecord rec;
    rec.iteration = state.iteration;
    rec.phase = phase;
    rec.monitor = monitor;
    rec.alpha = state.alpha;
    rec.theta_u = theta_snapshot(state.u);
    rec.theta_v = theta_snapshot(state.v);
    rec.flop_count = iter_flops;
    rec.events = std::move(events);
    report.dead_source_events += static_cast<int>(rec.events.size());
    report.total_flops += iter_flops;
    report.iterations.push_back(std::move(rec));
  };

  const double mn =
      static_cast<double>(x.rows()) * static_cast<double>(x.cols());

  // --- Expectation-maximisation phase ---
  std::vector<double> monitor_history;
  for (Index t = 0; t < cfg.max_em_iters; ++t) {
    state.iteration += 1;
    std::vector<std::string> events;

    if (lowrank) {
      const double rss = lowrank->residual_energy(state);
      state.alpha = std::clamp(rss > 0.0 ? mn / rss : cfg.alpha_max,
                               cfg.alpha_min, cfg.alpha_max);
      sweep_columns_reduced(*lowrank, state, FactorSide::kU, rng, cfg, true,
                            &events);
      sweep_columns_reduced(*lowrank, state, FactorSide::kV, rng, cfg, true,
                            &events);
    } else {
      state.alpha =
          update_noise_precision(x, state, cfg.alpha_min, cfg.alpha_max);
      gibbs_sweep_factor(x, state, FactorSide::kU, rng, cfg, &events);
      gibbs_sweep_factor(x, state, FactorSide::kV, rng, cfg, &events);
    }

    state.monitor = compute_monitor(x, state, lr, rng, &events);
    monitor_history.push_back(state.monitor);
    record_iteration("em", state.monitor, std::move(events));
    report.em_iterations = t + 1;

    const size_t h = monitor_history.size();
    if (h > 10) {
      const double prev = monitor_history[h - 11];
      const double rel =
          std::abs(state.monitor - prev) / std::max(1.0, std::abs(prev));
      if (rel < cfg.tol) break;
    }
  }

  // --- Block-coordinate-descent phase (hyperparameters frozen) ---
  double prev_nlj = std::numeric_limits<double>::infinity();
  for (Index t = 0; t < cfg.max_bcd_iters; ++t) {
    state.iteration += 1;
    std::vector<std::string> events;

    if (lowrank) {
      sweep_columns_reduced(*lowrank, state, FactorSide::kU, rng, cfg, false,
                            &events);
      sweep_columns_reduced(*lowrank, state, FactorSide::kV, rng, cfg, false,
                            &events);
    } else {
      bcd_sweep_factor(x, state, FactorSide::kU, rng, cfg, &events);
      bcd_sweep_factor(x, state, FactorSide::kV, rng, cfg, &events);
    }

    state.monitor = compute_monitor(x, state, lr, rng, &events);
    const double nlj = -state.monitor;
    record_iteration("bcd", state.monitor, std::move(events));
    report.bcd_iterations = t + 1;

    if (std::isfinite(prev_nlj)) {
      const double rel =
          std::abs(nlj - prev_nlj) / std::max(1.0, std::abs(prev_nlj));
      if (rel < cfg.tol) break;
    }
    prev_nlj = nlj;
  }

  report.final_neg_log_joint = neg_log_joint(x, state).value;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(state), std::move(report)};
}

}  // namespace decompose
