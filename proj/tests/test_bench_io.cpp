#include <gtest/gtest.h>

#include <sys/wait.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cpcp/cpcp.hpp"
#include "test_util.hpp"

using namespace cpcp;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("cpcp_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.m = 30;
  s.n = 20;
  s.r = 3;
  s.sparse_fraction = 0.05;
  s.sparse_amplitude = 100.0;
  s.noise_std = 1.0;
  s.rho = 0.7;
  s.seed = seed;
  return s;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CPCP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic data

TEST(GenSynthetic, DeterministicGivenSeed) {
  const auto a = gen_synthetic(small_spec(3));
  const auto b = gen_synthetic(small_spec(3));
  EXPECT_EQ(a.L0, b.L0);
  EXPECT_EQ(a.S0, b.S0);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.observed, b.observed);
  const auto c = gen_synthetic(small_spec(4));
  EXPECT_NE(a.L0, c.L0);
}

TEST(GenSynthetic, ObservedIsSumOnMaskAndNoiseIsIndependentOfMask) {
  auto spec = small_spec(5);
  spec.noise_std = 0.0;
  const auto gt = gen_synthetic(spec);
  const Matrix full = gt.L0 + gt.S0_dense();
  for (std::size_t e = 0; e < gt.mask.size(); ++e) EXPECT_EQ(gt.observed[e], full(gt.mask.row(e), gt.mask.col(e)));

  // Same seed at a different rho: the ground truth and the noise at shared entries agree.
  auto s1 = small_spec(6), s2 = small_spec(6);
  s2.rho = 1.0;
  const auto g1 = gen_synthetic(s1), g2 = gen_synthetic(s2);
  EXPECT_EQ(g1.L0, g2.L0);
  EXPECT_EQ(g1.S0, g2.S0);
  for (std::size_t e = 0; e < g1.mask.size(); ++e)
    EXPECT_EQ(g1.observed[e], g2.observed[g2.mask.find(g1.mask.row(e), g1.mask.col(e))]);
}

TEST(GenSynthetic, TrueNormsMatchSvdOracle) {
  const auto gt = gen_synthetic(small_spec(7));
  const double ref = testutil::nuclear_norm(gt.L0);
  EXPECT_NEAR(gt.tau_L_true, ref, 1e-8 * ref);
  EXPECT_NEAR(gt.tau_S_true, gt.S0_dense().cwiseAbs().sum(), 1e-10 * gt.tau_S_true);
  EXPECT_LE(testutil::singular_values(gt.L0)(3), 1e-10 * ref);
}

TEST(GenSynthetic, EdgeCasesAndValidation) {
  auto spec = small_spec(8);
  spec.sparse_fraction = 0.0;
  EXPECT_TRUE(gen_synthetic(spec).S0.empty());
  spec.r = 0;
  EXPECT_EQ(gen_synthetic(spec).tau_L_true, 0.0);
  spec = small_spec(8);
  spec.sparse_fraction = 1.5;
  EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
  spec = small_spec(8);
  spec.r = 21;
  EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
  spec = small_spec(8);
  spec.rho = 0.0;
  EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
}

TEST(GenSynthetic, SparseSupportFollowsTheBinomial) {
  auto spec = small_spec(0);
  spec.m = 100;
  spec.n = 100;
  const double p = spec.sparse_fraction, n = 1e4;
  const double sd = std::sqrt(n * p * (1 - p));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    spec.seed = seed;
    const double count = static_cast<double>(gen_synthetic(spec).S0.size());
    EXPECT_LE(std::abs(count - n * p), 3 * sd) << "seed " << seed;
  }
}

TEST(SampleMask, CountsAndValidation) {
  EXPECT_TRUE(sample_mask(7, 5, 1.0, 1).is_full());
  EXPECT_EQ(sample_mask(10, 10, 0.5, 2).size(), 50u);
  EXPECT_EQ(sample_mask(10, 10, 0.5, 2), sample_mask(10, 10, 0.5, 2));
  EXPECT_THROW(sample_mask(10, 10, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(sample_mask(10, 10, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(sample_mask(2, 2, 0.01, 1), std::invalid_argument);
}

TEST(SampleMask, UniformInclusion) {
  const Index m = 5, n = 4;
  const double rho = 0.3;
  const int seeds = 2000;
  Matrix hits = Matrix::Zero(m, n);
  for (int s = 0; s < seeds; ++s) {
    const auto mask = sample_mask(m, n, rho, static_cast<std::uint64_t>(s));
    for (std::size_t e = 0; e < mask.size(); ++e) hits(mask.row(e), mask.col(e)) += 1;
  }
  const double sd = std::sqrt(rho * (1 - rho) / seeds);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) EXPECT_LE(std::abs(hits(i, j) / seeds - rho), 3 * sd) << i << "," << j;
}

TEST(DefaultWeights, Formulas) {
  // ||P_Omega M||_F = 50 on a full 100 x 40 mask.
  const auto mask = ObservationMask::full(100, 40);
  std::vector<double> obs(mask.size(), 0.0);
  obs[0] = 30.0;
  obs[1] = 40.0;
  const auto w = default_weights(mask, obs, 0.01);
  EXPECT_DOUBLE_EQ(w.lambda_L, 0.5);
  EXPECT_DOUBLE_EQ(w.lambda_S, 0.05);
  EXPECT_THROW(default_weights(mask, obs, 0.0), std::invalid_argument);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto mk = sample_mask(20 + t, 35 - t, 0.1 + 0.08 * t, static_cast<std::uint64_t>(t));
    const auto o = testutil::randn_values(mk.size(), rng);
    const auto ww = default_weights(mk, o, 0.02);
    EXPECT_NEAR(ww.lambda_L / ww.lambda_S, std::sqrt(mk.rho() * std::max(mk.rows(), mk.cols())), 1e-12 * ww.lambda_L / ww.lambda_S);
  }
  const auto half = sample_mask(100, 40, 0.5, 1);
  const std::vector<double> ones(half.size(), 1.0);
  const double norm = std::sqrt(static_cast<double>(half.size()));
  EXPECT_NEAR(default_weights(half, ones, 0.01).lambda_L, 0.5 * 0.01 * norm, 1e-15);
}

TEST(RelativeError, Basic) {
  Matrix a = Matrix::Ones(2, 2);
  EXPECT_DOUBLE_EQ(relative_error(2 * a, a), 1.0);
  EXPECT_THROW(relative_error(a, Matrix::Zero(2, 2)), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Files

TEST(MatrixMarket, MaskedRoundTripIsBitIdentical) {
  TempDir dir;
  std::mt19937_64 rng(10);
  const auto mask = testutil::random_mask(9, 7, 25, rng);
  auto values = testutil::randn_values(mask.size(), rng, 1e3);
  values[0] = 1.0 / 3.0;
  values[1] = -0.0;
  values[2] = 1e-300;
  save_masked((dir / "a.mtx").string(), mask, values);
  const auto back = load_masked((dir / "a.mtx").string());
  EXPECT_EQ(back.mask, mask);
  ASSERT_EQ(back.values.size(), values.size());
  for (std::size_t e = 0; e < values.size(); ++e) EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[e]), std::bit_cast<std::uint64_t>(values[e]));
}

TEST(MatrixMarket, OneBasedIndicesAndComments) {
  TempDir dir;
  write_file(dir / "a.mtx", "%%MatrixMarket matrix coordinate real general\n% note\n2 3 2\n2 3 -1.5\n1 1 3.0\n");
  const auto m = load_masked((dir / "a.mtx").string());
  ASSERT_EQ(m.mask.size(), 2u);
  EXPECT_EQ(m.mask.row(0), 0);
  EXPECT_EQ(m.mask.col(0), 0);
  EXPECT_EQ(m.values[0], 3.0);
  EXPECT_EQ(m.mask.row(1), 1);
  EXPECT_EQ(m.mask.col(1), 2);
  EXPECT_EQ(m.values[1], -1.5);
}

TEST(MatrixMarket, MalformedFilesReportLine) {
  TempDir dir;
  const std::string banner = "%%MatrixMarket matrix coordinate real general\n";
  const std::vector<std::pair<std::string, std::string>> cases{
      {"", ":1:"},
      {"%%MatrixMarket matrix array real general\n2 2\n", ":1:"},
      {banner + "2 2\n", ":2:"},
      {banner + "2 2 1\n3 1 1.0\n", ":3:"},
      {banner + "2 2 1\n1 1 abc\n", ":3:"},
      {banner + "2 2 2\n1 1 1.0\n1 1 2.0\n", "duplicate"},
      {banner + "2 2 2\n1 1 1.0\n", "expected 2 entries"},
      {banner + "2 2 1\n1 1 1.0\n2 2 1.0\n", ":4:"},
      {banner + "99999999999999999999 2 1\n", "overflow"},
  };
  for (const auto& [text, needle] : cases) {
    write_file(dir / "bad.mtx", text);
    try {
      load_masked((dir / "bad.mtx").string());
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(load_masked((dir / "missing.mtx").string()), std::runtime_error);
}

TEST(MatrixMarket, DenseRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(11);
  const Matrix a = testutil::randn(6, 4, rng);
  save_dense((dir / "d.mtx").string(), a);
  EXPECT_EQ(load_dense((dir / "d.mtx").string()), a);
  write_file(dir / "short.mtx", "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n");
  EXPECT_THROW(load_dense((dir / "short.mtx").string()), ParseError);
}

TEST(Trace, CsvRoundTrip) {
  SolverTrace t;
  for (std::size_t k = 0; k < 5; ++k) {
    TraceRecord r;
    r.k = k;
    r.objective = 1.0 / (k + 3.0);
    if (k % 2 == 0) r.dual_gap = 0.1 * k;
    r.step_a = 2.0 / (k + 2.0);
    if (k > 1) r.step_b = 0.25;
    r.rank = k;
    r.nnz = 2 * k;
    r.wall_nanos = 1000 * static_cast<std::int64_t>(k);
    if (k == 3) {
      r.U_L = 7.5;
      r.U_S = 1e10;
    }
    t.push(r);
  }
  std::stringstream ss;
  write_trace_csv(ss, t);
  EXPECT_EQ(ss.str().substr(0, kTraceHeader.size()), kTraceHeader);
  EXPECT_EQ(read_trace_csv(ss), t);

  std::stringstream jl;
  write_trace_jsonl(jl, t);
  std::string line;
  std::size_t n = 0;
  while (std::getline(jl, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["k"].get<std::size_t>(), n);
    EXPECT_EQ(j["objective"].get<double>(), t[n].objective);
    EXPECT_EQ(j["dual_gap"].is_null(), !t[n].dual_gap.has_value());
    ++n;
  }
  EXPECT_EQ(n, t.size());

  std::stringstream bad(std::string(kTraceHeader) + "\n0,1,,,,0,0,0,,\n0,1,,,,0,0,0,,\n");
  EXPECT_THROW(read_trace_csv(bad), ParseError);
}

TEST(JsonConfig, RoundTripAndStrictKeys) {
  PenalizedConfig c;
  c.lambda_L = 0.5;
  c.lambda_S = 0.01;
  c.max_iter = 77;
  c.epsilon = 1e-4;
  c.stop_on_stall = false;
  const nlohmann::json j = c;
  const auto back = j.get<PenalizedConfig>();
  EXPECT_EQ(back.lambda_L, c.lambda_L);
  EXPECT_EQ(back.max_iter, c.max_iter);
  EXPECT_EQ(back.stop_on_stall, false);

  ConstrainedConfig cc;
  cc.tau_L = 3;
  cc.tau_S = 4;
  cc.gap_tol = 1e-3;
  EXPECT_EQ(nlohmann::json(cc).get<ConstrainedConfig>().gap_tol, cc.gap_tol);
  IstaConfig ic;
  ic.lambda_L = 1;
  ic.lambda_S = 2;
  EXPECT_FALSE(nlohmann::json(ic).get<IstaConfig>().target_objective.has_value());
  const auto spec = small_spec(42);
  const auto sb = nlohmann::json(spec).get<SyntheticSpec>();
  EXPECT_EQ(sb.seed, 42u);
  EXPECT_EQ(sb.rho, spec.rho);

  EXPECT_THROW((nlohmann::json{{"lambda_L", 1.0}, {"lambda_S", 1.0}, {"lamda", 2}}.get<PenalizedConfig>()),
               std::invalid_argument);
  EXPECT_THROW((nlohmann::json{{"lambda_L", 1.0}}.get<PenalizedConfig>()), std::invalid_argument);
  EXPECT_ANY_THROW((nlohmann::json{{"tau_L", "x"}, {"tau_S", 1.0}}.get<ConstrainedConfig>()));
}

TEST(GroundTruthFiles, WrittenAndReadable) {
  TempDir dir;
  const auto spec = small_spec(12);
  const auto gt = gen_synthetic(spec);
  save_ground_truth(dir.path().string(), spec, gt);
  const auto obs = load_masked((dir / "observed.mtx").string());
  EXPECT_EQ(obs.mask, gt.mask);
  EXPECT_EQ(obs.values, gt.observed);
  EXPECT_EQ(load_dense((dir / "L0.mtx").string()), gt.L0);
  EXPECT_EQ(load_masked((dir / "S0.mtx").string()).values.size(), gt.S0.size());
  const auto meta = load_json((dir / "truth.json").string());
  EXPECT_EQ(meta["tau_L_true"].get<double>(), gt.tau_L_true);
}

// ---------------------------------------------------------------------------
// Benchmark harness

TEST(Bench, SweepParsing) {
  const auto s = parse_sweep("10000x250,10000x500");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].m, 10000);
  EXPECT_EQ(s[1].n, 500);
  EXPECT_TRUE(parse_sweep("").empty());
  EXPECT_THROW(parse_sweep("10x"), std::invalid_argument);
  EXPECT_THROW(parse_sweep("10x5y"), std::invalid_argument);
  EXPECT_THROW(parse_sweep("0x5"), std::invalid_argument);
  EXPECT_EQ(parse_solver_id("fw-pen"), SolverId::fw_pen);
  EXPECT_THROW(parse_solver_id("admm"), std::invalid_argument);
}

TEST(Bench, MedianAndDurations) {
  EXPECT_EQ(median({5, 1, 3}), 3);
  EXPECT_EQ(median({4, 1, 3, 2}), 2);
  EXPECT_THROW(median({}), std::invalid_argument);
  SolverTrace t;
  for (std::size_t k = 0; k < 4; ++k) {
    TraceRecord r;
    r.k = k;
    r.wall_nanos = static_cast<std::int64_t>(k * k * 10);
    t.push(r);
  }
  // Iteration 0 spans records 0 -> 1 and is left out.
  EXPECT_EQ(iteration_durations(t), (std::vector<std::int64_t>{30, 50}));
}

TEST(Bench, ReportShape) {
  BenchOptions opt;
  opt.iterations = 3;
  EXPECT_TRUE(bench_per_iteration(SolverId::fwt, {}, opt).empty());
  const auto rows = bench_per_iteration(SolverId::fwt, {{40, 10}, {40, 20}}, opt);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].solver, "fwt");
  EXPECT_EQ(rows[1].n, 20);
  EXPECT_GT(rows[0].median_iter_nanos, 0);
  for (SolverId id : {SolverId::fw, SolverId::fwp, SolverId::fw_pen, SolverId::ista, SolverId::fista})
    EXPECT_EQ(bench_per_iteration(id, {{20, 10}}, opt).size(), 1u);
  EXPECT_THROW(bench_per_iteration(SolverId::fwt, {{40, 20}, {40, 10}}, opt), std::invalid_argument);
  std::stringstream ss;
  write_bench_csv(ss, rows);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "solver,m,n,rho,median_iter_nanos");
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, GenerateSolveAndExitCodes) {
  TempDir dir;
  const auto spec = small_spec(13);
  write_file(dir / "spec.json", nlohmann::json(spec).dump());
  const std::string inst = (dir / "inst").string();
  ASSERT_EQ(run_cli("generate --spec " + (dir / "spec.json").string() + " --out " + inst), 0);
  ASSERT_TRUE(fs::exists(dir / "inst" / "observed.mtx"));

  const auto gt = gen_synthetic(spec);
  const auto w = default_weights(gt.mask, gt.observed, 0.01);
  write_file(dir / "con.json", nlohmann::json{{"tau_L", gt.tau_L_true}, {"tau_S", gt.tau_S_true}, {"max_iter", 20}}.dump());
  write_file(dir / "pen.json", nlohmann::json{{"lambda_L", w.lambda_L}, {"lambda_S", w.lambda_S}, {"max_iter", 20},
                                              {"stop_on_stall", false}}.dump());
  write_file(dir / "ista.json", nlohmann::json{{"lambda_L", w.lambda_L}, {"lambda_S", w.lambda_S}, {"max_iter", 5}}.dump());
  const std::vector<std::pair<std::string, std::string>> runs{
      {"fw", "con.json"}, {"fwp", "con.json"}, {"fw-pen", "pen.json"},
      {"fwt", "pen.json"}, {"ista", "ista.json"}, {"fista", "ista.json"}};
  for (const auto& [algo, cfg] : runs) {
    const auto trace = dir / (algo + ".csv");
    const auto out = dir / (algo + "_out");
    EXPECT_EQ(run_cli("solve --algo " + algo + " --problem " + inst + " --config " + (dir / cfg).string() + " --trace " +
                      trace.string() + " --trace-jsonl " + (dir / (algo + ".jsonl")).string() + " --out " + out.string()),
              0)
        << algo;
    const auto t = load_trace(trace.string());
    EXPECT_GT(t.size(), 1u) << algo;
    EXPECT_EQ(load_dense((out / "L.mtx").string()).rows(), spec.m);
    EXPECT_EQ(load_masked((out / "S.mtx").string()).mask, gt.mask);
  }

  // The library and the CLI agree on the same run.
  PenalizedConfig pc;
  pc.lambda_L = w.lambda_L;
  pc.lambda_S = w.lambda_S;
  pc.max_iter = 20;
  pc.stop_on_stall = false;
  const auto lib = solve_fwt(CpcpProblem(gt.mask, gt.observed, w), pc);
  const auto cli = load_trace((dir / "fwt.csv").string());
  ASSERT_EQ(cli.size(), lib.trace.size());
  for (std::size_t k = 0; k < cli.size(); ++k) EXPECT_EQ(cli[k].objective, lib.trace[k].objective);

  // Gap tolerance out of reach: results are written, exit code 3.
  write_file(dir / "tight.json",
             nlohmann::json{{"tau_L", gt.tau_L_true}, {"tau_S", gt.tau_S_true}, {"max_iter", 3}, {"gap_tol", 0.0}}.dump());
  EXPECT_EQ(run_cli("solve --algo fw --problem " + inst + " --config " + (dir / "tight.json").string() + " --out " +
                    (dir / "tight_out").string()),
            3);
  EXPECT_TRUE(fs::exists(dir / "tight_out" / "L.mtx"));

  // Bad input of every kind maps to 2.
  write_file(dir / "typo.json", R"({"lambda_L": 1, "lambda_S": 1, "max_iters": 3})");
  write_file(dir / "broken.json", "{");
  write_file(dir / "neg.json", R"({"lambda_L": -1, "lambda_S": 1})");
  EXPECT_EQ(run_cli("solve --algo fwt --problem " + inst + " --config " + (dir / "typo.json").string()), 2);
  EXPECT_EQ(run_cli("solve --algo fwt --problem " + inst + " --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("solve --algo fwt --problem " + inst + " --config " + (dir / "neg.json").string()), 2);
  EXPECT_EQ(run_cli("solve --algo admm --problem " + inst + " --config " + (dir / "pen.json").string()), 2);
  EXPECT_EQ(run_cli("solve --algo fwt --problem " + (dir / "nowhere").string() + " --config " + (dir / "pen.json").string()), 2);
  EXPECT_EQ(run_cli("solve --algo fwt"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("bench --algo fwt --sweep 10x"), 2);
  write_file(dir / "budget.json",
             nlohmann::json{{"lambda_L", 1.0}, {"lambda_S", 1.0}, {"memory_budget_entries", 10}}.dump());
  EXPECT_EQ(run_cli("solve --algo ista --problem " + inst + " --config " + (dir / "budget.json").string()), 2);
  EXPECT_EQ(run_cli("bench --algo fwt --sweep 20x10 --iterations 3"), 0);
  EXPECT_EQ(std::system(("CPCP_THREADS=zero " + std::string(CPCP_CLI_PATH) + " bench --algo fwt --sweep 20x10 >/dev/null 2>&1").c_str()) >> 8, 2);
  EXPECT_EQ(run_cli("--help"), 0);
}
