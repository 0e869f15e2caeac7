#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcp/iterates.hpp"
#include "cpcp/oracles.hpp"
#include "cpcp/problem.hpp"
#include "cpcp/result.hpp"
#include "cpcp/trace.hpp"

namespace cpcp {

struct IstaConfig {
  double lambda_L = 0.0;
  double lambda_S = 0.0;
  std::size_t max_iter = 1000;
  /// Stop as soon as f(x^k) <= target.
  std::optional<double> target_objective;
  /// Largest m * n the dense iterates may occupy.
  double memory_budget_entries = 4e8;
  std::uint64_t seed = 0x13198A2E03707344ULL;  // partial-SVD start block
};

class MemoryBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void validate(const IstaConfig& c, const CpcpProblem& problem) {
  if (!(c.lambda_L > 0.0) || !(c.lambda_S > 0.0)) throw std::invalid_argument("IstaConfig: weights must be positive");
  if (c.max_iter < 1) throw std::invalid_argument("IstaConfig: max_iter must be at least 1");
  const double entries = static_cast<double>(problem.rows()) * static_cast<double>(problem.cols());
  if (entries > c.memory_budget_entries)
    throw MemoryBudgetError("dense baseline needs " + std::to_string(problem.rows()) + "x" +
                            std::to_string(problem.cols()) + " iterates, over the budget of " +
                            std::to_string(static_cast<long long>(c.memory_budget_entries)) + " entries");
}

/// Proximal gradient with step 1/2 (the loss gradient is 2-Lipschitz in (L, S)).
/// L is dense; S lives on the mask because its prox keeps off-mask entries at 0.
/// With `accelerate`, the prox steps are taken at the FISTA extrapolated point.
inline SolveResult solve_proximal(const CpcpProblem& problem, const IstaConfig& config, bool accelerate) {
  problem.penalized();
  validate(config, problem);
  const Stopwatch clock;
  const auto& mask = problem.mask();
  const auto observed = problem.observed();
  const std::size_t n_obs = mask.size();
  const auto rows = mask.row_indices();
  const auto cols = mask.col_indices();
  const double lambda_L = config.lambda_L, lambda_S = config.lambda_S;
  const Index d = std::min(problem.rows(), problem.cols());

  SolveResult out;
  out.low_rank = LowRankIterate(problem.rows(), problem.cols(), false);
  out.sparse = SparseIterate::zeros(mask);
  Matrix l = Matrix::Zero(problem.rows(), problem.cols());
  std::vector<double>& s = out.sparse.values;
  double l_nuclear = 0.0;

  // Extrapolated point (FISTA) or the iterate itself (ISTA).
  Matrix l_hat;
  std::vector<double> s_hat;
  double t = 1.0;

  Index sv = initial_sv(d);
  Matrix warm;
  std::vector<double> g(n_obs), r(n_obs);

  auto objective_at_iterate = [&]() {
    for (std::size_t e = 0; e < n_obs; ++e) r[e] = l(rows[e], cols[e]) + s[e] - observed[e];
    return 0.5 * squared_norm(r) + lambda_L * l_nuclear + lambda_S * l1_norm(s);
  };

  std::size_t k = 0;
  double f = objective_at_iterate();
  for (; k < config.max_iter; ++k) {
    TraceRecord rec = make_record(k, f, out.low_rank, out.sparse, clock);
    rec.step_a = 0.5;
    rec.step_b = 0.5;
    out.trace.push(rec);
    if (config.target_objective && f <= *config.target_objective) {
      out.converged = true;
      break;
    }

    const Matrix& lb = accelerate && k > 0 ? l_hat : l;
    const std::vector<double>& sb = accelerate && k > 0 ? s_hat : s;
    for (std::size_t e = 0; e < n_obs; ++e) g[e] = lb(rows[e], cols[e]) + sb[e] - observed[e];

    Matrix y = lb;
    for (std::size_t e = 0; e < n_obs; ++e) y(rows[e], cols[e]) -= 0.5 * g[e];
    PartialSvdOptions popt;
    popt.seed = config.seed;
    if (warm.size() > 0) popt.start = &warm;
    SvtResult svt = singular_value_threshold(y, 0.5 * lambda_L, sv, popt);
    if (!svt.converged) ++out.lmo_warnings;
    sv = sv_heuristic(std::min(sv, d), svt.svp, d);
    warm = std::move(svt.right_vectors);

    std::vector<double> s_next(n_obs);
    for (std::size_t e = 0; e < n_obs; ++e) s_next[e] = soft_threshold(sb[e] - 0.5 * g[e], 0.5 * lambda_S);
    Matrix l_next = svt.low_rank.to_dense();

    if (accelerate) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      l_hat = l_next + beta * (l_next - l);
      s_hat.resize(n_obs);
      for (std::size_t e = 0; e < n_obs; ++e) s_hat[e] = s_next[e] + beta * (s_next[e] - s[e]);
      t = t_next;
    }
    l = std::move(l_next);
    s = std::move(s_next);
    out.low_rank = std::move(svt.low_rank);
    l_nuclear = svt.nuclear_norm;
    f = objective_at_iterate();
  }

  if (k == config.max_iter) {
    out.trace.push(make_record(k, f, out.low_rank, out.sparse, clock));
    out.converged = !config.target_objective.has_value();
  }
  out.iterations = k;
  out.objective = f;
  return out;
}

}  // namespace detail

/// L <- D_{lambda_L/2}[L - G/2], S <- T_{lambda_S/2}[S - G/2] with G = P_Omega[L + S - M].
inline SolveResult solve_ista(const CpcpProblem& problem, const IstaConfig& config) {
  return detail::solve_proximal(problem, config, false);
}

/// ISTA steps at extrapolated points with t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2, t_0 = 1.
inline SolveResult solve_fista(const CpcpProblem& problem, const IstaConfig& config) {
  return detail::solve_proximal(problem, config, true);
}

}  // namespace cpcp
