// Command-line front end: instance generation, solves, per-iteration benchmarks.
//
//   cpcp generate --spec spec.json --out dir/
//   cpcp solve --algo {fw,fwp,fw-pen,fwt,ista,fista} --problem dir/ --config cfg.json --trace out.csv
//   cpcp bench --algo fwt --sweep 10000x250,10000x500,10000x1000
//
// Exit codes: 0 success, 2 bad input, 3 solver stopped at max_iter without
// meeting its tolerance (results are still written).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cpcp/cpcp.hpp"

namespace {

constexpr int kBadInput = 2;
constexpr int kNotConverged = 3;

struct BadInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void apply_thread_setting() {
  const char* env = std::getenv("CPCP_THREADS");
  int threads = 1;
  if (env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      threads = std::stoi(env, &used);
      if (used != std::string(env).size() || threads < 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw BadInput(std::string("CPCP_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  Eigen::setNbThreads(threads);
}

int cmd_generate(const std::string& spec_path, const std::string& out_dir) {
  const auto spec = cpcp::load_json(spec_path).get<cpcp::SyntheticSpec>();
  const auto gt = cpcp::gen_synthetic(spec);
  cpcp::save_ground_truth(out_dir, spec, gt);
  std::cout << "wrote " << spec.m << "x" << spec.n << " instance with " << gt.mask.size() << " observed entries to "
            << out_dir << "\n";
  return 0;
}

void write_solution(const std::string& dir, const cpcp::CpcpProblem& problem, const cpcp::SolveResult& res) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  cpcp::save_dense((d / "L.mtx").string(), res.low_rank.to_dense());
  cpcp::save_masked((d / "S.mtx").string(), problem.mask(), res.sparse.values);
}

int cmd_solve(const std::string& algo, const std::string& problem_dir, const std::string& config_path,
              const std::string& trace_path, const std::string& trace_jsonl, const std::string& out_dir) {
  const auto id = cpcp::parse_solver_id(algo);
  const auto data = cpcp::load_masked((std::filesystem::path(problem_dir) / "observed.mtx").string());
  const auto cfg = cpcp::load_json(config_path);
  auto mask = std::make_shared<const cpcp::ObservationMask>(data.mask);

  cpcp::SolveResult res;
  std::optional<cpcp::CpcpProblem> problem;
  switch (id) {
    case cpcp::SolverId::fw:
    case cpcp::SolverId::fwp: {
      const auto c = cfg.get<cpcp::ConstrainedConfig>();
      problem.emplace(mask, data.values, cpcp::Constrained{c.tau_L, c.tau_S});
      res = id == cpcp::SolverId::fw ? cpcp::solve_fw_constrained(*problem, c) : cpcp::solve_fwp(*problem, c);
      break;
    }
    case cpcp::SolverId::fw_pen:
    case cpcp::SolverId::fwt: {
      const auto c = cfg.get<cpcp::PenalizedConfig>();
      problem.emplace(mask, data.values, cpcp::Penalized{c.lambda_L, c.lambda_S});
      res = id == cpcp::SolverId::fwt ? cpcp::solve_fwt(*problem, c) : cpcp::solve_fw_penalized(*problem, c);
      break;
    }
    case cpcp::SolverId::ista:
    case cpcp::SolverId::fista: {
      const auto c = cfg.get<cpcp::IstaConfig>();
      problem.emplace(mask, data.values, cpcp::Penalized{c.lambda_L, c.lambda_S});
      res = id == cpcp::SolverId::ista ? cpcp::solve_ista(*problem, c) : cpcp::solve_fista(*problem, c);
      break;
    }
  }

  if (!trace_path.empty()) cpcp::export_trace(trace_path, res.trace);
  if (!trace_jsonl.empty()) cpcp::export_trace_jsonl(trace_jsonl, res.trace);
  if (!out_dir.empty()) write_solution(out_dir, *problem, res);

  std::cout.precision(17);
  std::cout << "solver=" << algo << " iterations=" << res.iterations << " objective=" << res.objective
            << " rank=" << res.low_rank.rank() << " nnz=" << res.sparse.nnz()
            << " converged=" << (res.converged ? "yes" : "no") << "\n";
  if (res.lmo_warnings > 0) std::cerr << "warning: " << res.lmo_warnings << " SVD calls hit their iteration cap\n";
  return res.converged ? 0 : kNotConverged;
}

int cmd_bench(const std::string& algo, const std::string& sweep, const cpcp::BenchOptions& opt, const std::string& out) {
  const auto id = cpcp::parse_solver_id(algo);
  const auto sizes = cpcp::parse_sweep(sweep);
  const auto rows = cpcp::bench_per_iteration(id, sizes, opt);
  if (out.empty()) {
    cpcp::write_bench_csv(std::cout, rows);
  } else {
    std::ofstream f(out);
    if (!f) throw BadInput("cannot open '" + out + "' for writing");
    cpcp::write_bench_csv(f, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank plus sparse recovery from partial observations"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic instance");
  gen->add_option("--spec", spec_path, "SyntheticSpec JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string algo, problem_dir, config_path, trace_path, trace_jsonl, solution_dir;
  auto* solve = app.add_subcommand("solve", "Run a solver on an instance directory");
  solve->add_option("--algo", algo, "fw, fwp, fw-pen, fwt, ista or fista")->required();
  solve->add_option("--problem", problem_dir, "Directory containing observed.mtx")->required();
  solve->add_option("--config", config_path, "Solver config JSON")->required();
  solve->add_option("--trace", trace_path, "Trace CSV output");
  solve->add_option("--trace-jsonl", trace_jsonl, "Trace JSON-lines output");
  solve->add_option("--out", solution_dir, "Directory for L.mtx and S.mtx");

  std::string bench_algo, sweep, bench_out;
  cpcp::BenchOptions bench_opt;
  auto* bench = app.add_subcommand("bench", "Median per-iteration time over a size sweep");
  bench->add_option("--algo", bench_algo, "Solver id")->required();
  bench->add_option("--sweep", sweep, "Comma-separated MxN sizes, ascending")->required();
  bench->add_option("--repetitions", bench_opt.repetitions, "Runs per size");
  bench->add_option("--iterations", bench_opt.iterations, "Iterations per run (the first is discarded)");
  bench->add_option("--seed", bench_opt.seed, "Instance seed");
  bench->add_option("--rho", bench_opt.rho, "Sampling ratio");
  bench->add_option("--out", bench_out, "CSV output (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadInput;
  }

  try {
    apply_thread_setting();
    if (*gen) return cmd_generate(spec_path, out_dir);
    if (*solve) return cmd_solve(algo, problem_dir, config_path, trace_path, trace_jsonl, solution_dir);
    if (*bench) return cmd_bench(bench_algo, sweep, bench_opt, bench_out);
  } catch (const cpcp::MemoryBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::logic_error& e) {
    // invalid_argument and out_of_range are input problems; other logic errors are bugs.
    std::cerr << "error: " << e.what() << "\n";
    if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::out_of_range*>(&e)) return kBadInput;
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::runtime_error& e) {
    // File access and parse failures.
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
  return 0;
}
