#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "decompose/cli.hpp"
#include "decompose/io.hpp"
#include "decompose/rng.hpp"

using namespace decompose;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("decompose_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& capture) {
  const char* bin = std::getenv("DECOMPOSE_CLI_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " > " +
                          capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("matrix csv and binary files round-trip bit-exactly") {
  const auto dir = temp_dir("io");
  RngHandle rng(1);
  Matrix m(7, 5);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 5; ++j) m(i, j) = rng.normal() * 1e-7;
  }
  m(0, 0) = 1.0 / 3.0;
  m(1, 1) = -0.0;
  write_matrix_csv((dir / "m.csv").string(), m);
  const Matrix back = read_matrix_csv((dir / "m.csv").string());
  CHECK(back == m);

  write_matrix_binary((dir / "m.bin").string(), m);
  CHECK(read_matrix_binary((dir / "m.bin").string()) == m);
}

TEST_CASE("csv parse errors carry line and column diagnostics") {
  const auto dir = temp_dir("io_err");
  {
    std::ofstream out(dir / "bad.csv");
    out << "2,2\n1.0,2.0\n3.0,oops\n";
  }
  try {
    read_matrix_csv((dir / "bad.csv").string());
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    CHECK(what.find(":3:") != std::string::npos);  // line 3
  }
}

TEST_CASE("synth output read back equals the in-memory matrix bit-exactly") {
  const auto dir = temp_dir("synth");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  cfg.synth.m = 32;
  cfg.synth.n = 24;
  cfg.synth.seed = 9;
  cfg.synth.sources = {{{}, 2.0}, {{}, 0.5}};
  cfg.synth.noise_sigma = 0.1;
  cmd_synth(cfg);

  const auto [expected, truth] = generate_synthetic(cfg.synth);
  const Matrix from_disk = read_matrix_csv((dir / "data.csv").string());
  CHECK(from_disk == expected.values);

  // Manifest lists every source with resolvable filter files.
  const auto sources = load_truth_sources((dir / "truth" / "manifest.json").string());
  REQUIRE(sources.size() == 2);
  CHECK(sources[0].spatial == truth.sources[0].spatial);
  CHECK(sources[1].temporal == truth.sources[1].temporal);
}

TEST_CASE("noiseless synth writes exactly the source sum") {
  const auto dir = temp_dir("synth0");
  RunConfig cfg;
  cfg.out_dir = dir.string();
  cfg.synth.m = 20;
  cfg.synth.n = 18;
  cfg.synth.seed = 4;
  cfg.synth.noise_sigma = 0.0;
  cfg.synth.sources = {{{}, 1.0}};
  cmd_synth(cfg);
  const Matrix data = read_matrix_csv((dir / "data.csv").string());
  const auto sources = load_truth_sources((dir / "truth" / "manifest.json").string());
  const Matrix sum = sources[0].spatial * sources[0].temporal.transpose();
  CHECK((data - sum).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("run on rank-1 data explains nearly all variance") {
  const auto dir = temp_dir("run_rank1");
  RngHandle rng(2);
  Vector a(25), b(20);
  for (Index i = 0; i < 25; ++i) a[i] = rng.normal();
  for (Index i = 0; i < 20; ++i) b[i] = rng.normal();
  write_matrix_csv((dir / "x.csv").string(), Matrix(a * b.transpose()));

  RunConfig cfg;
  cfg.input = (dir / "x.csv").string();
  cfg.out_dir = (dir / "out").string();
  cfg.engine.k = 1;
  cfg.engine.seed = 3;
  cfg.engine.max_em_iters = 40;
  cfg.engine.max_bcd_iters = 10;
  cmd_run(cfg);

  const json summary = json::parse(slurp(dir / "out" / "summary.json"));
  CHECK(summary.at("variance_explained_total").get<double>() > 0.999);

  // report.jsonl: valid single-line records with increasing iterations.
  std::ifstream report(dir / "out" / "report.jsonl");
  std::string line;
  Index prev = 0;
  size_t records = 0;
  while (std::getline(report, line)) {
    const json rec = json::parse(line);
    const Index it = rec.at("iteration").get<Index>();
    CHECK(it > prev);
    prev = it;
    ++records;
    CHECK(rec.contains("phase"));
    CHECK(rec.contains("monitor"));
    CHECK(rec.contains("alpha"));
    CHECK(rec.contains("flop_count"));
  }
  CHECK(records == summary.at("em_iterations").get<size_t>() +
                       summary.at("bcd_iterations").get<size_t>());
}

TEST_CASE("repeated runs write seed-derived subdirectories scoreable as 1.0") {
  const auto dir = temp_dir("runs");
  RunConfig synth_cfg;
  synth_cfg.out_dir = dir.string();
  synth_cfg.synth.m = 30;
  synth_cfg.synth.n = 26;
  synth_cfg.synth.seed = 5;
  synth_cfg.synth.sources = {{{}, 1.5}, {{}, 0.7}};
  synth_cfg.synth.noise_sigma = 0.02;
  cmd_synth(synth_cfg);

  RunConfig cfg;
  cfg.input = (dir / "data.csv").string();
  cfg.out_dir = (dir / "out").string();
  cfg.runs = 3;
  cfg.engine.k = 2;
  cfg.engine.seed = 11;
  cfg.engine.max_em_iters = 30;
  cfg.engine.max_bcd_iters = 10;
  cfg.engine.priors_u = {{PriorFamily::kNormal, {1.0}}};
  cfg.engine.priors_v = {{PriorFamily::kExponential, {1.0}}};
  cmd_run(cfg);

  for (int i = 0; i < 3; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "run_%04d", i);
    CHECK(fs::exists(dir / "out" / name / "U.csv"));
  }
  // Seeds differ across runs.
  const json s0 = json::parse(slurp(dir / "out" / "run_0000" / "summary.json"));
  const json s1 = json::parse(slurp(dir / "out" / "run_0001" / "summary.json"));
  CHECK(s0.at("config").at("seed").get<int>() + 1 ==
        s1.at("config").at("seed").get<int>());

  // Scoring truth against a run directory holding the truth itself gives 1.
  const auto truth_dir = dir / "perfect";
  fs::create_directories(truth_dir);
  const auto truth =
      load_truth_sources((dir / "truth" / "manifest.json").string());
  Matrix u(30, 2), v(26, 2);
  for (Index k = 0; k < 2; ++k) {
    u.col(k) = truth[static_cast<size_t>(k)].spatial;
    v.col(k) = truth[static_cast<size_t>(k)].temporal;
  }
  write_matrix_csv((truth_dir / "U.csv").string(), u);
  write_matrix_csv((truth_dir / "V.csv").string(), v);

  RunConfig score_cfg;
  const auto report_path = dir / "score.json";
  cmd_score(score_cfg, (dir / "truth" / "manifest.json").string(),
            {truth_dir.string()}, report_path.string());
  const json report = json::parse(slurp(report_path));
  CHECK(report.at("score").get<double>() == doctest::Approx(1.0));
  CHECK(report.at("table").size() == 2);  // cells x runs = 2 x 1

  // Scoring the three fitted runs produces cells x runs table rows.
  cmd_score(score_cfg, (dir / "truth" / "manifest.json").string(),
            {(dir / "out").string()}, report_path.string());
  const json full_report = json::parse(slurp(report_path));
  CHECK(full_report.at("table").size() == 2 * 3);
}

TEST_CASE("score on an empty run directory is a usage error") {
  const auto dir = temp_dir("score_empty");
  fs::create_directories(dir / "empty");
  RunConfig cfg;
  CHECK_THROWS_AS(cmd_score(cfg, (dir / "missing.json").string(),
                            {(dir / "empty").string()}, ""),
                  ConfigError);
}

TEST_CASE("config file round-trips through the resolved summary") {
  const auto dir = temp_dir("config");
  {
    std::ofstream out(dir / "config.json");
    out << R"({
      "k": 2, "seed": 21, "em_iters": 12, "bcd_iters": 4, "tol": 1e-4,
      "prior_u": {"family": "Normal", "theta": [2.0]},
      "prior_v": [{"family": "Exponential", "theta": [0.5]},
                   {"family": "Exponential", "theta": [1.5]}],
      "shared_hyperparams": false,
      "synth": {"m": 24, "n": 20, "noise_sigma": 0.05,
                 "sources": [{"beta": 1.0}, {"beta": 0.25}]}
    })";
  }
  const RunConfig cfg = load_run_config((dir / "config.json").string());
  CHECK(cfg.engine.k == 2);
  CHECK(cfg.engine.seed == 21);
  CHECK(cfg.engine.max_em_iters == 12);
  CHECK(cfg.engine.tol == doctest::Approx(1e-4));
  REQUIRE(cfg.engine.priors_u.size() == 1);
  CHECK(cfg.engine.priors_u[0].family == PriorFamily::kNormal);
  CHECK(cfg.engine.priors_u[0].theta[0] == 2.0);
  REQUIRE(cfg.engine.priors_v.size() == 2);
  CHECK(cfg.engine.priors_v[1].theta[0] == 1.5);
  CHECK(cfg.synth.sources.size() == 2);
  CHECK(cfg.synth.sources[1].beta == 0.25);

  CHECK_THROWS_AS(load_run_config((dir / "nope.json").string()), ConfigError);
}

TEST_CASE("cli subprocess: exit codes and diagnostics") {
  const auto dir = temp_dir("subprocess");
  const auto capture = dir / "cap.txt";

  // Usage error: unknown prior name echoes the token and exits 2.
  {
    std::ofstream out(dir / "x.csv");
    out << "2,2\n1.0,0.0\n0.0,1.0\n";
  }
  int code = run_cli("run --input " + (dir / "x.csv").string() +
                         " --out " + (dir / "o").string() +
                         " --prior-u Gaussianish",
                     capture);
  CHECK(code == 2);
  CHECK(slurp(capture).find("Gaussianish") != std::string::npos);

  // Missing input file is a runtime failure (exit 1).
  code = run_cli("run --input " + (dir / "nothere.csv").string() + " --out " +
                     (dir / "o2").string(),
                 capture);
  CHECK(code == 1);

  // Unknown flag is a parse error (exit 2).
  code = run_cli("run --frobnicate", capture);
  CHECK(code == 2);

  // A well-formed tiny run succeeds (exit 0).
  code = run_cli("run --input " + (dir / "x.csv").string() + " --out " +
                     (dir / "o3").string() +
                     " --k 1 --em-iters 5 --bcd-iters 2 --seed 1",
                 capture);
  CHECK(code == 0);
  CHECK(fs::exists(dir / "o3" / "U.csv"));
}

TEST_CASE("cli subprocess: flops grid export") {
  const auto dir = temp_dir("flops");
  const auto capture = dir / "cap.txt";
  const auto csv = dir / "grid.csv";
  const int code = run_cli(
      "flops --m 16384 --n 500 --k 10,100 --mr 500,16384 --csv " + csv.string(),
      capture);
  CHECK(code == 0);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "m,n,k,m_r,n_r,full,reduced,reduction_pct");
  int rows = 0;
  double k100_mr500 = -1.0, mr_full = 1.0;
  while (std::getline(in, line)) {
    ++rows;
    long long m, n, k, m_r, n_r;
    unsigned long long full, reduced;
    double pct;
    REQUIRE(std::sscanf(line.c_str(), "%lld,%lld,%lld,%lld,%lld,%llu,%llu,%lf",
                        &m, &n, &k, &m_r, &n_r, &full, &reduced, &pct) == 8);
    if (k == 100 && m_r == 500) k100_mr500 = pct;
    if (m_r == 16384) mr_full = std::min(mr_full, pct);
  }
  CHECK(rows == 4);  // one row per grid point
  CHECK(k100_mr500 >= 90.0);
  CHECK(mr_full <= 0.0);  // no reduction saves nothing
}

TEST_CASE("deterministic outputs: identical invocations produce identical bytes") {
  const auto dir = temp_dir("determinism");
  RngHandle rng(3);
  Matrix x(18, 14);
  for (Index i = 0; i < 18; ++i) {
    for (Index j = 0; j < 14; ++j) x(i, j) = rng.normal();
  }
  write_matrix_csv((dir / "x.csv").string(), x);

  RunConfig cfg;
  cfg.input = (dir / "x.csv").string();
  cfg.out_dir = (dir / "out").string();
  cfg.engine.k = 2;
  cfg.engine.seed = 42;
  cfg.engine.max_em_iters = 12;
  cfg.engine.max_bcd_iters = 4;
  cfg.engine.priors_v = {{PriorFamily::kExponential, {1.0}}};

  const char* names[] = {"U.csv", "V.csv", "summary.json", "hyperparams.json",
                         "report.jsonl"};
  cmd_run(cfg);
  std::map<std::string, std::string> first;
  for (const char* name : names) first[name] = slurp(dir / "out" / name);
  cmd_run(cfg);
  for (const char* name : names) {
    CHECK(slurp(dir / "out" / name) == first[name]);
  }
}
