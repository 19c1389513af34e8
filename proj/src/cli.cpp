#include "decompose/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "decompose/io.hpp"

namespace decompose {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

PriorSpec parse_prior_entry(const json& j, bool* fit) {
  if (j.is_string()) {
    const auto family = family_from_name(j.get<std::string>());
    if (!family) {
      throw ConfigError("unknown prior family: " + j.get<std::string>());
    }
    return PriorSpec::with_defaults(*family);
  }
  if (!j.is_object()) {
    throw ConfigError("prior entry must be a name or an object");
  }
  const std::string name = j.at("family").get<std::string>();
  const auto family = family_from_name(name);
  if (!family) throw ConfigError("unknown prior family: " + name);
  PriorSpec spec = PriorSpec::with_defaults(*family);
  if (j.contains("theta")) {
    spec.theta = j.at("theta").get<std::vector<double>>();
  }
  if (fit && j.contains("fit")) *fit = j.at("fit").get<bool>();
  spec.validate();
  return spec;
}

std::vector<PriorSpec> parse_priors(const json& j, bool* fit) {
  if (j.is_array()) {
    std::vector<PriorSpec> out;
    for (const auto& entry : j) out.push_back(parse_prior_entry(entry, fit));
    if (out.empty()) throw ConfigError("prior list must not be empty");
    return out;
  }
  return {parse_prior_entry(j, fit)};
}

json prior_to_json(const PriorSpec& spec) {
  return json{{"family", family_name(spec.family)}, {"theta", spec.theta}};
}

json priors_to_json(const std::vector<PriorSpec>& priors) {
  json out = json::array();
  for (const auto& spec : priors) out.push_back(prior_to_json(spec));
  return out;
}

json resolved_config_json(const RunConfig& cfg) {
  const auto& e = cfg.engine;
  json projections = nullptr;
  if (e.projections) {
    projections = json::array({e.projections->first, e.projections->second});
  }
  return json{
      {"input", cfg.input},
      {"out", cfg.out_dir},
      {"runs", cfg.runs},
      {"k", e.k},
      {"seed", e.seed},
      {"em_iters", e.max_em_iters},
      {"bcd_iters", e.max_bcd_iters},
      {"tol", e.tol},
      {"dead_source_threshold", e.dead_source_threshold},
      {"shared_hyperparams", e.shared_hyperparams},
      {"fit_hyperparams_u", e.fit_hyperparams_u},
      {"fit_hyperparams_v", e.fit_hyperparams_v},
      {"prior_u", priors_to_json(e.priors_u)},
      {"prior_v", priors_to_json(e.priors_v)},
      {"projections", projections},
      {"oversample", e.oversample},
      {"power_iters", e.power_iters},
      {"binary", cfg.binary_output},
  };
}

ScoreTarget parse_score_target(const std::string& s) {
  if (s == "full") return ScoreTarget::kFull;
  if (s == "spatial") return ScoreTarget::kSpatial;
  if (s == "temporal") return ScoreTarget::kTemporal;
  throw ConfigError("score_target must be full, spatial or temporal");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string json_line(const json& j) { return j.dump() + "\n"; }

}  // namespace

RunConfig load_run_config(const std::string& config_path) {
  RunConfig cfg;
  if (config_path.empty()) return cfg;
  const json j = load_json_file(config_path);

  cfg.input = j.value("input", cfg.input);
  cfg.out_dir = j.value("out", cfg.out_dir);
  cfg.runs = j.value("runs", cfg.runs);
  cfg.binary_output = j.value("binary", cfg.binary_output);
  if (j.contains("score_target")) {
    cfg.score_target = parse_score_target(j.at("score_target"));
  }

  auto& e = cfg.engine;
  e.k = j.value("k", e.k);
  e.seed = j.value("seed", e.seed);
  e.max_em_iters = j.value("em_iters", e.max_em_iters);
  e.max_bcd_iters = j.value("bcd_iters", e.max_bcd_iters);
  e.tol = j.value("tol", e.tol);
  e.dead_source_threshold =
      j.value("dead_source_threshold", e.dead_source_threshold);
  e.shared_hyperparams = j.value("shared_hyperparams", e.shared_hyperparams);
  e.oversample = j.value("oversample", e.oversample);
  e.power_iters = j.value("power_iters", e.power_iters);
  if (j.contains("prior_u")) {
    e.priors_u = parse_priors(j.at("prior_u"), &e.fit_hyperparams_u);
  }
  if (j.contains("prior_v")) {
    e.priors_v = parse_priors(j.at("prior_v"), &e.fit_hyperparams_v);
  }
  if (j.contains("projections") && !j.at("projections").is_null()) {
    const auto& p = j.at("projections");
    if (p.is_array()) {
      if (p.size() != 2) throw ConfigError("projections must be [M_R, N_R]");
      e.projections = {p[0].get<Index>(), p[1].get<Index>()};
    } else {
      e.projections = {p.get<Index>(), Index{-1}};  // N_R resolved from data
    }
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    cfg.synth.m = s.value("m", cfg.synth.m);
    cfg.synth.n = s.value("n", cfg.synth.n);
    cfg.synth.noise_sigma = s.value("noise_sigma", cfg.synth.noise_sigma);
    cfg.synth.seed = s.value("seed", cfg.synth.seed);
    if (s.contains("sources")) {
      cfg.synth.sources.clear();
      for (const auto& src : s.at("sources")) {
        SourceSpec spec;
        spec.beta = src.at("beta").get<double>();
        if (src.contains("dense_prior")) {
          spec.dense_prior = parse_prior_entry(src.at("dense_prior"), nullptr);
        }
        cfg.synth.sources.push_back(std::move(spec));
      }
    }
  }
  return cfg;
}

std::string run_directory(const RunConfig& cfg, int run_index) {
  if (cfg.runs == 1) return cfg.out_dir;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "run_%04d", run_index);
  return (fs::path(cfg.out_dir) / buf).string();
}

void cmd_synth(const RunConfig& cfg) {
  cfg.synth.validate();
  fs::create_directories(cfg.out_dir);
  const fs::path truth_dir = fs::path(cfg.out_dir) / "truth";
  fs::create_directories(truth_dir);

  auto [data, truth] = generate_synthetic(cfg.synth);
  const std::string data_path =
      (fs::path(cfg.out_dir) / (cfg.binary_output ? "data.bin" : "data.csv"))
          .string();
  write_matrix_auto(data_path, data.values);

  json manifest{{"m", cfg.synth.m},
                {"n", cfg.synth.n},
                {"noise_sigma", cfg.synth.noise_sigma},
                {"seed", cfg.synth.seed},
                {"data", data_path}};
  json sources = json::array();
  for (const auto& s : truth.sources) {
    char spatial_name[32], temporal_name[32];
    std::snprintf(spatial_name, sizeof(spatial_name), "spatial_%03d.csv",
                  static_cast<int>(s.index));
    std::snprintf(temporal_name, sizeof(temporal_name), "temporal_%03d.csv",
                  static_cast<int>(s.index));
    write_vector_csv((truth_dir / spatial_name).string(), s.spatial);
    write_vector_csv((truth_dir / temporal_name).string(), s.temporal);
    sources.push_back(json{
        {"index", s.index},
        {"beta", cfg.synth.sources[static_cast<size_t>(s.index)].beta},
        {"variance", s.variance_explained},
        {"spatial_file", spatial_name},
        {"temporal_file", temporal_name}});
  }
  manifest["sources"] = sources;
  write_text((truth_dir / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "wrote " << data_path << " (" << cfg.synth.m << "x"
            << cfg.synth.n << ") and " << truth.sources.size()
            << "-source manifest\n";
}

void cmd_run(const RunConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("run: --input is required");
  if (cfg.runs < 1) throw ConfigError("run: --runs must be >= 1");
  const DataMatrix x = DataMatrix::create(read_matrix_auto(cfg.input));

  RunConfig resolved = cfg;
  auto& e = resolved.engine;
  if (e.projections && e.projections->second < 0) {
    e.projections->second = x.cols();
  }
  e.validate(x.rows(), x.cols());

  for (int run = 0; run < resolved.runs; ++run) {
    EngineConfig run_cfg = e;
    run_cfg.seed = e.seed + static_cast<std::uint64_t>(run);
    const std::string dir = run_directory(resolved, run);
    fs::create_directories(dir);

    const FitResult result = fit(x, run_cfg);
    const auto& state = result.state;
    const auto& report = result.report;

    write_matrix_csv((fs::path(dir) / "U.csv").string(), state.u.columns);
    write_matrix_csv((fs::path(dir) / "V.csv").string(), state.v.columns);

    json hyper{{"alpha", state.alpha},
               {"u", priors_to_json(state.u.priors)},
               {"v", priors_to_json(state.v.priors)}};
    write_text((fs::path(dir) / "hyperparams.json").string(),
               hyper.dump(2) + "\n");

    std::string lines;
    for (const auto& rec : report.iterations) {
      json r{{"iteration", rec.iteration}, {"phase", rec.phase},
             {"monitor", rec.monitor},     {"alpha", rec.alpha},
             {"theta_u", rec.theta_u},     {"theta_v", rec.theta_v},
             {"flop_count", rec.flop_count}};
      if (!rec.events.empty()) r["events"] = rec.events;
      lines += json_line(r);
    }
    write_text((fs::path(dir) / "report.jsonl").string(), lines);

    auto sources = extract_sources(state);
    std::sort(sources.begin(), sources.end(),
              [](const Source& a, const Source& b) {
                return a.variance_explained > b.variance_explained;
              });
    json source_list = json::array();
    for (const auto& s : sources) {
      source_list.push_back(
          json{{"index", s.index}, {"variance", s.variance_explained}});
    }
    const double total_sq = x.values.squaredNorm();
    const double rss = residual(x, state.u, state.v).squaredNorm();
    RunConfig cfg_for_json = resolved;
    cfg_for_json.engine.seed = run_cfg.seed;
    json summary{
        {"config", resolved_config_json(cfg_for_json)},
        {"rows", x.rows()},
        {"cols", x.cols()},
        {"alpha", state.alpha},
        {"final_neg_log_joint", report.final_neg_log_joint},
        {"variance_explained_total",
         total_sq > 0.0 ? 1.0 - rss / total_sq : 0.0},
        {"sources", source_list},
        {"em_iterations", report.em_iterations},
        {"bcd_iterations", report.bcd_iterations},
        {"flop_total", report.total_flops},
        {"dead_source_events", report.dead_source_events},
        {"basis_pad_events", report.basis_pad_events}};
    write_text((fs::path(dir) / "summary.json").string(),
               summary.dump(2) + "\n");
    write_text((fs::path(dir) / "timing.json").string(),
               json{{"wall_seconds", report.wall_seconds}}.dump(2) + "\n");
    std::cout << dir << ": em=" << report.em_iterations
              << " bcd=" << report.bcd_iterations
              << " neg_log_joint=" << report.final_neg_log_joint << "\n";
  }
}

std::vector<Source> load_run_sources(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::exists(dir / "U.csv") || !fs::exists(dir / "V.csv")) {
    throw ConfigError(run_dir + ": missing U.csv/V.csv");
  }
  const Matrix u = read_matrix_csv((dir / "U.csv").string());
  const Matrix v = read_matrix_csv((dir / "V.csv").string());
  if (u.cols() != v.cols()) {
    throw std::runtime_error(run_dir + ": U/V column counts differ");
  }
  std::vector<Source> sources;
  for (Index k = 0; k < u.cols(); ++k) {
    Source s;
    s.index = k;
    s.spatial = u.col(k);
    s.temporal = v.col(k);
    s.variance_explained = outer_product_variance(s.spatial, s.temporal);
    sources.push_back(std::move(s));
  }
  return sources;
}

std::vector<Source> load_truth_sources(const std::string& manifest_path) {
  const json manifest = load_json_file(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<Source> sources;
  for (const auto& s : manifest.at("sources")) {
    Source src;
    src.index = s.at("index").get<Index>();
    src.spatial =
        read_vector_csv((base / s.at("spatial_file").get<std::string>()).string());
    src.temporal = read_vector_csv(
        (base / s.at("temporal_file").get<std::string>()).string());
    src.variance_explained = outer_product_variance(src.spatial, src.temporal);
    sources.push_back(std::move(src));
  }
  if (sources.empty()) throw ConfigError(manifest_path + ": no sources");
  return sources;
}

void cmd_score(const RunConfig& cfg, const std::string& manifest_path,
               const std::vector<std::string>& run_dirs,
               const std::string& report_path) {
  if (run_dirs.empty()) throw ConfigError("score: no run directories given");

  // A parent directory containing run_* subdirectories expands to them.
  std::vector<std::string> dirs;
  for (const auto& d : run_dirs) {
    if (!fs::is_directory(d)) throw ConfigError(d + ": not a directory");
    if (fs::exists(fs::path(d) / "U.csv")) {
      dirs.push_back(d);
      continue;
    }
    std::vector<std::string> subs;
    for (const auto& entry : fs::directory_iterator(d)) {
      if (entry.is_directory() &&
          entry.path().filename().string().rfind("run_", 0) == 0) {
        subs.push_back(entry.path().string());
      }
    }
    std::sort(subs.begin(), subs.end());
    if (subs.empty()) throw ConfigError(d + ": empty run directory");
    dirs.insert(dirs.end(), subs.begin(), subs.end());
  }

  const auto truth = load_truth_sources(manifest_path);
  std::vector<std::vector<Source>> runs;
  runs.reserve(dirs.size());
  for (const auto& d : dirs) runs.push_back(load_run_sources(d));

  json table = json::array();
  for (size_t c = 0; c < truth.size(); ++c) {
    for (size_t r = 0; r < runs.size(); ++r) {
      double best = 0.0;
      Index best_k = -1;
      for (const auto& rec : runs[r]) {
        const double rho = source_correlation(truth[c], rec, cfg.score_target);
        if (rho > best) {
          best = rho;
          best_k = rec.index;
        }
      }
      table.push_back(json{{"cell", truth[c].index},
                           {"run", dirs[r]},
                           {"best_source", best_k},
                           {"correlation", best}});
    }
  }
  const double score = model_score(truth, runs, cfg.score_target);

  json out{{"score", score}, {"cells", truth.size()},
           {"runs", dirs.size()}, {"table", table}};
  if (!report_path.empty()) {
    write_text(report_path, out.dump(2) + "\n");
  }
  for (const auto& row : table) {
    std::cout << "cell " << row["cell"] << "  run " << row["run"].get<std::string>()
              << "  best_source " << row["best_source"] << "  correlation "
              << row["correlation"] << "\n";
  }
  std::cout << "score " << score << "\n";
}

void cmd_flops(Index m, Index n, const std::vector<Index>& ks,
               const std::vector<Index>& m_rs, Index n_r,
               const std::string& csv_path) {
  if (m < 1 || n < 1) throw ConfigError("flops: need positive dimensions");
  const Index n_r_eff = n_r > 0 ? n_r : n;
  std::string csv = "m,n,k,m_r,n_r,full,reduced,reduction_pct\n";
  std::printf("%8s %8s %8s %16s %16s %10s\n", "k", "m_r", "n_r", "full",
              "reduced", "saving%");
  for (const Index k : ks) {
    for (const Index m_r : m_rs) {
      const auto full = flops::estimate(m, n, k, m_r, n_r_eff, false);
      const auto reduced = flops::estimate(m, n, k, m_r, n_r_eff, true);
      const double pct =
          100.0 * (1.0 - static_cast<double>(reduced) / static_cast<double>(full));
      std::printf("%8lld %8lld %8lld %16llu %16llu %9.2f%%\n",
                  static_cast<long long>(k), static_cast<long long>(m_r),
                  static_cast<long long>(n_r_eff),
                  static_cast<unsigned long long>(full),
                  static_cast<unsigned long long>(reduced), pct);
      csv += std::to_string(m) + "," + std::to_string(n) + "," +
             std::to_string(k) + "," + std::to_string(m_r) + "," +
             std::to_string(n_r_eff) + "," + std::to_string(full) + "," +
             std::to_string(reduced) + "," + std::to_string(pct) + "\n";
    }
  }
  if (!csv_path.empty()) write_text(csv_path, csv);
}

}  // namespace decompose
