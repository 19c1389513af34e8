#pragma once

#include <string>
#include <vector>

#include "decompose/datagen.hpp"
#include "decompose/engine.hpp"

namespace decompose {

// Batch-run configuration: engine settings plus I/O locations. Loaded from a
// single JSON document and overridable from the command line; the resolved
// values are materialised into summary.json so runs are self-describing.
struct RunConfig {
  std::string input;
  std::string out_dir = "out";
  EngineConfig engine;
  int runs = 1;
  SyntheticSpec synth;
  ScoreTarget score_target = ScoreTarget::kFull;
  bool binary_output = false;
};

RunConfig load_run_config(const std::string& config_path);

// Subcommand bodies; throw ConfigError for usage problems (exit 2) and
// std::runtime_error for runtime failures (exit 1).
void cmd_synth(const RunConfig& cfg);
void cmd_run(const RunConfig& cfg);
void cmd_score(const RunConfig& cfg, const std::string& manifest_path,
               const std::vector<std::string>& run_dirs,
               const std::string& report_path);
void cmd_flops(Index m, Index n, const std::vector<Index>& ks,
               const std::vector<Index>& m_rs, Index n_r,
               const std::string& csv_path);

// Helpers shared with tests.
std::string run_directory(const RunConfig& cfg, int run_index);
std::vector<Source> load_run_sources(const std::string& run_dir);
std::vector<Source> load_truth_sources(const std::string& manifest_path);

}  // namespace decompose
