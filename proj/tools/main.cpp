#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "decompose/cli.hpp"

namespace {

using decompose::Index;

// "M_R" or "M_R,N_R"; N_R defaults to the data's column count (-1 sentinel).
std::pair<Index, Index> parse_projections(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) {
      return {static_cast<Index>(std::stoll(s)), Index{-1}};
    }
    return {static_cast<Index>(std::stoll(s.substr(0, comma))),
            static_cast<Index>(std::stoll(s.substr(comma + 1)))};
  } catch (const std::exception&) {
    throw decompose::ConfigError("--projections expects M_R or M_R,N_R");
  }
}

std::vector<Index> parse_index_list(const std::string& s) {
  std::vector<Index> out;
  size_t pos = 0;
  while (pos < s.size()) {
    const auto comma = s.find(',', pos);
    const std::string tok =
        s.substr(pos, comma == std::string::npos ? std::string::npos
                                                 : comma - pos);
    try {
      out.push_back(static_cast<Index>(std::stoll(tok)));
    } catch (const std::exception&) {
      throw decompose::ConfigError("expected a comma-separated integer list");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  // Intra-run parallelism cap; the default keeps runs bit-reproducible.
  int threads = 1;
  if (const char* env = std::getenv("DECOMPOSE_THREADS")) {
    threads = std::max(1, std::atoi(env));
  }
  Eigen::setNbThreads(threads);

  CLI::App app{"Probabilistic blind source separation"};
  app.require_subcommand(1);

  std::string config_path, input, out_dir, prior_u, prior_v, projections;
  std::string manifest, score_report, flops_csv, k_list, mr_list;
  long long k = -1, em_iters = -1, bcd_iters = -1, seed = -1, runs = -1;
  long long flops_m = 0, flops_n = 0, flops_nr = 0;
  double tol = -1.0;
  bool shared_hyper = false;
  std::vector<std::string> run_dirs;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "RNG seed");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic data set");
  add_common(synth);

  auto* run = app.add_subcommand("run", "fit a model to a data matrix");
  add_common(run);
  run->add_option("--input", input, "data matrix (CSV or .bin)");
  run->add_option("--k", k, "number of sources");
  run->add_option("--prior-u", prior_u, "prior family for U columns");
  run->add_option("--prior-v", prior_v, "prior family for V columns");
  run->add_flag("--shared-hyperparams", shared_hyper,
                "pool all columns into one hyperparameter fit");
  run->add_option("--projections", projections, "low-rank path: M_R[,N_R]");
  run->add_option("--em-iters", em_iters, "EM iteration cap");
  run->add_option("--bcd-iters", bcd_iters, "BCD iteration cap");
  run->add_option("--tol", tol, "relative convergence tolerance");
  run->add_option("--runs", runs, "repeat count (seeds seed+i)");

  auto* score = app.add_subcommand("score", "score runs against ground truth");
  add_common(score);
  score->add_option("--truth", manifest, "ground-truth manifest.json")
      ->required();
  score->add_option("--report", score_report, "score report output path");
  score->add_option("dirs", run_dirs, "run directories")->required();

  auto* flops_cmd = app.add_subcommand("flops", "FLOP model for a size grid");
  flops_cmd->add_option("--m", flops_m, "data rows")->required();
  flops_cmd->add_option("--n", flops_n, "data cols")->required();
  flops_cmd->add_option("--k", k_list, "source counts (comma list)")->required();
  flops_cmd->add_option("--mr", mr_list, "M_R values (comma list)")->required();
  flops_cmd->add_option("--nr", flops_nr, "N_R (defaults to N)");
  flops_cmd->add_option("--csv", flops_csv, "CSV export path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    decompose::RunConfig cfg = decompose::load_run_config(config_path);
    if (!input.empty()) cfg.input = input;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (k >= 0) cfg.engine.k = k;
    if (seed >= 0) {
      cfg.engine.seed = static_cast<std::uint64_t>(seed);
      cfg.synth.seed = static_cast<std::uint64_t>(seed);
    }
    if (em_iters >= 0) cfg.engine.max_em_iters = em_iters;
    if (bcd_iters >= 0) cfg.engine.max_bcd_iters = bcd_iters;
    if (tol >= 0.0) cfg.engine.tol = tol;
    if (runs >= 0) cfg.runs = static_cast<int>(runs);
    if (shared_hyper) cfg.engine.shared_hyperparams = true;
    if (!projections.empty()) {
      cfg.engine.projections = parse_projections(projections);
    }
    const auto override_prior = [](const std::string& name,
                                   std::vector<decompose::PriorSpec>* priors) {
      const auto family = decompose::family_from_name(name);
      if (!family) {
        throw decompose::ConfigError("unknown prior family: " + name);
      }
      *priors = {decompose::PriorSpec::with_defaults(*family)};
    };
    if (!prior_u.empty()) override_prior(prior_u, &cfg.engine.priors_u);
    if (!prior_v.empty()) override_prior(prior_v, &cfg.engine.priors_v);

    if (synth->parsed()) {
      decompose::cmd_synth(cfg);
    } else if (run->parsed()) {
      decompose::cmd_run(cfg);
    } else if (score->parsed()) {
      decompose::cmd_score(cfg, manifest, run_dirs, score_report);
    } else if (flops_cmd->parsed()) {
      decompose::cmd_flops(flops_m, flops_n, parse_index_list(k_list),
                           parse_index_list(mr_list), flops_nr, flops_csv);
    }
  } catch (const decompose::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
