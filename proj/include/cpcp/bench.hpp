#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpcp/baselines.hpp"
#include "cpcp/fw.hpp"
#include "cpcp/fwt.hpp"
#include "cpcp/synthetic.hpp"

namespace cpcp {

enum class SolverId { fw, fwp, fw_pen, fwt, ista, fista };

inline SolverId parse_solver_id(std::string_view s) {
  if (s == "fw") return SolverId::fw;
  if (s == "fwp") return SolverId::fwp;
  if (s == "fw-pen") return SolverId::fw_pen;
  if (s == "fwt") return SolverId::fwt;
  if (s == "ista") return SolverId::ista;
  if (s == "fista") return SolverId::fista;
  throw std::invalid_argument("unknown solver '" + std::string(s) + "' (expected fw, fwp, fw-pen, fwt, ista or fista)");
}

inline std::string to_string(SolverId id) {
  switch (id) {
    case SolverId::fw: return "fw";
    case SolverId::fwp: return "fwp";
    case SolverId::fw_pen: return "fw-pen";
    case SolverId::fwt: return "fwt";
    case SolverId::ista: return "ista";
    case SolverId::fista: return "fista";
  }
  return "?";
}

inline bool is_constrained_solver(SolverId id) { return id == SolverId::fw || id == SolverId::fwp; }

struct BenchSize {
  Index m = 0;
  Index n = 0;
};

/// "10000x250,10000x500" -> {{10000, 250}, {10000, 500}}. Empty input gives an empty sweep.
inline std::vector<BenchSize> parse_sweep(std::string_view s) {
  std::vector<BenchSize> out;
  std::size_t start = 0;
  while (start < s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string_view::npos) end = s.size();
    const std::string item(s.substr(start, end - start));
    const auto x = item.find('x');
    std::size_t used_m = 0, used_n = 0;
    try {
      if (x == std::string::npos) throw std::invalid_argument("");
      const long long m = std::stoll(item.substr(0, x), &used_m);
      const long long n = std::stoll(item.substr(x + 1), &used_n);
      if (used_m != x || used_n != item.size() - x - 1 || m <= 0 || n <= 0) throw std::invalid_argument("");
      out.push_back({static_cast<Index>(m), static_cast<Index>(n)});
    } catch (const std::exception&) {
      throw std::invalid_argument("bad sweep item '" + item + "' (expected MxN)");
    }
    start = end + 1;
  }
  return out;
}

struct BenchOptions {
  std::size_t repetitions = 1;
  std::size_t iterations = 6;  // per run, including the discarded first one
  std::uint64_t seed = 1;
  double rho = 1.0;
  // Instance recipe: rank-r plus sparse outliers plus noise, default weights.
  Index r = 5;
  double sparse_fraction = 0.01;
  double sparse_amplitude = 100.0;
  double noise_std = 0.1;
  double delta = 0.005;
};

struct BenchRow {
  std::string solver;
  Index m = 0;
  Index n = 0;
  double rho = 1.0;
  std::int64_t median_iter_nanos = 0;
};

inline std::int64_t median(std::vector<std::int64_t> v) {
  if (v.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : (v[h - 1] + v[h]) / 2;
}

/// Per-iteration durations of one run, from consecutive trace timestamps,
/// with iteration 0 left out.
inline std::vector<std::int64_t> iteration_durations(const SolverTrace& trace) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 2; i < trace.size(); ++i) out.push_back(trace[i].wall_nanos - trace[i - 1].wall_nanos);
  return out;
}

inline SolveResult run_solver(SolverId id, const CpcpProblem& problem, std::size_t max_iter, double tau_L,
                              double tau_S) {
  switch (id) {
    case SolverId::fw:
    case SolverId::fwp: {
      ConstrainedConfig c;
      c.tau_L = tau_L;
      c.tau_S = tau_S;
      c.max_iter = max_iter;
      const auto p = problem.with(Constrained{tau_L, tau_S});
      return id == SolverId::fw ? solve_fw_constrained(p, c) : solve_fwp(p, c);
    }
    case SolverId::fw_pen:
    case SolverId::fwt: {
      const auto& w = problem.penalized();
      PenalizedConfig c;
      c.lambda_L = w.lambda_L;
      c.lambda_S = w.lambda_S;
      c.max_iter = max_iter;
      c.stop_on_stall = false;
      return id == SolverId::fwt ? solve_fwt(problem, c) : solve_fw_penalized(problem, c);
    }
    case SolverId::ista:
    case SolverId::fista: {
      const auto& w = problem.penalized();
      IstaConfig c;
      c.lambda_L = w.lambda_L;
      c.lambda_S = w.lambda_S;
      c.max_iter = max_iter;
      return id == SolverId::ista ? solve_ista(problem, c) : solve_fista(problem, c);
    }
  }
  throw std::logic_error("run_solver: unhandled solver");
}

/// Median per-iteration wall time of `solver` on synthetic instances of each
/// size. Sizes must be ascending in m * n.
inline std::vector<BenchRow> bench_per_iteration(SolverId solver, const std::vector<BenchSize>& sweep,
                                                 const BenchOptions& opt = {}) {
  if (opt.repetitions < 1) throw std::invalid_argument("bench_per_iteration: repetitions must be at least 1");
  if (opt.iterations < 2) throw std::invalid_argument("bench_per_iteration: need at least 2 iterations per run");
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (sweep[i].m * sweep[i].n < sweep[i - 1].m * sweep[i - 1].n)
      throw std::invalid_argument("bench_per_iteration: sizes must be ascending");
  std::vector<BenchRow> rows;
  for (const auto& size : sweep) {
    SyntheticSpec spec;
    spec.m = size.m;
    spec.n = size.n;
    spec.r = std::min<Index>(opt.r, std::min(size.m, size.n));
    spec.sparse_fraction = opt.sparse_fraction;
    spec.sparse_amplitude = opt.sparse_amplitude;
    spec.noise_std = opt.noise_std;
    spec.rho = opt.rho;
    spec.seed = opt.seed;
    const GroundTruth gt = gen_synthetic(spec);
    const Penalized w = default_weights(gt.mask, gt.observed, opt.delta);
    const CpcpProblem problem(gt.mask, gt.observed, w);
    std::vector<std::int64_t> samples;
    for (std::size_t rep = 0; rep < opt.repetitions; ++rep) {
      const SolveResult res = run_solver(solver, problem, opt.iterations, std::max(gt.tau_L_true, 1e-12),
                                         std::max(gt.tau_S_true, 1e-12));
      const auto d = iteration_durations(res.trace);
      samples.insert(samples.end(), d.begin(), d.end());
    }
    rows.push_back({to_string(solver), size.m, size.n, opt.rho, median(samples)});
  }
  return rows;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "solver,m,n,rho,median_iter_nanos\n";
  for (const auto& r : rows) out << r.solver << ',' << r.m << ',' << r.n << ',' << r.rho << ',' << r.median_iter_nanos << '\n';
}

}  // namespace cpcp
