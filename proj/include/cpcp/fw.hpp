#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcp/iterates.hpp"
#include "cpcp/oracles.hpp"
#include "cpcp/problem.hpp"
#include "cpcp/result.hpp"
#include "cpcp/trace.hpp"

namespace cpcp {

struct ConstrainedConfig {
  double tau_L = 0.0;
  double tau_S = 0.0;
  std::size_t max_iter = 1000;
  std::optional<double> gap_tol;
  std::size_t record_gap_every = 1;
  std::uint64_t seed = 0x243F6A8885A308D3ULL;  // power-iteration start
};

/// gamma_k = 2 / (k + 2)
inline double fw_step_size(std::size_t k) { return 2.0 / (static_cast<double>(k) + 2.0); }

/// <L - V_L, G> + <S - V_S, G> with every matrix given by its values on the mask.
inline double duality_gap(std::span<const double> grad, std::span<const double> low_rank_on_mask,
                          std::span<const double> sparse, std::span<const double> dir_low_rank_on_mask,
                          std::span<const double> dir_sparse) {
  if (low_rank_on_mask.size() != grad.size() || sparse.size() != grad.size() ||
      dir_low_rank_on_mask.size() != grad.size() || dir_sparse.size() != grad.size())
    throw std::invalid_argument("duality_gap: value count does not match gradient");
  KahanSum s;
  for (std::size_t e = 0; e < grad.size(); ++e)
    s += (low_rank_on_mask[e] - dir_low_rank_on_mask[e] + sparse[e] - dir_sparse[e]) * grad[e];
  return s.value();
}

namespace detail {

inline void validate(const ConstrainedConfig& c) {
  if (!(c.tau_L > 0.0) || !(c.tau_S > 0.0)) throw std::invalid_argument("ConstrainedConfig: radii must be positive");
  if (c.max_iter < 1) throw std::invalid_argument("ConstrainedConfig: max_iter must be at least 1");
  if (c.record_gap_every < 1) throw std::invalid_argument("ConstrainedConfig: record_gap_every must be at least 1");
  if (c.gap_tol && !(*c.gap_tol >= 0.0)) throw std::invalid_argument("ConstrainedConfig: gap_tol must be non-negative");
}

/// Shared loop of the two norm-constrained solvers. With `project` set, each
/// FW step is followed by a unit-step projected gradient step on S.
inline SolveResult solve_constrained(const CpcpProblem& problem, const ConstrainedConfig& config, bool project) {
  problem.constrained();
  validate(config);
  const Stopwatch clock;
  const auto& mask = problem.mask();
  const auto observed = problem.observed();
  const std::size_t n_obs = mask.size();
  const double tau_L = config.tau_L, tau_S = config.tau_S;

  SolveResult out;
  out.low_rank = LowRankIterate::zeros(problem.rows(), problem.cols());
  out.sparse = SparseIterate::zeros(mask);
  LowRankIterate& l = out.low_rank;
  std::vector<double>& s = out.sparse.values;
  std::vector<double> l_omega(n_obs, 0.0);
  std::vector<double> r(n_obs);
  Vector warm;

  std::size_t k = 0;
  for (; k < config.max_iter; ++k) {
    assemble_residual(l_omega, s, observed, r);
    const double objective = 0.5 * squared_norm(r);

    PowerOptions popt;
    popt.seed = config.seed;
    if (warm.size() > 0) popt.start = &warm;
    SingularTriplet pair;
    std::size_t e_star = 0;
    try {
      pair = leading_singular_pair(MaskedOperator(mask, r), popt);
      e_star = argmax_abs(r);
    } catch (const std::exception& ex) {
      throw std::runtime_error("FW iteration " + std::to_string(k) + ": " + ex.what());
    }
    if (!pair.converged) ++out.lmo_warnings;
    out.lmo_iterations += static_cast<std::size_t>(pair.iterations);
    warm = pair.v;
    const double s_weight = -tau_S * sign(r[e_star]);

    TraceRecord rec = detail::make_record(k, objective, l, out.sparse, clock);
    const double gamma = fw_step_size(k);
    rec.step_a = gamma;
    rec.step_b = gamma;
    // <V_L, R> = -tau_L sigma and <V_S, R> = -tau_S |R_e*|, so no extra pass is needed.
    const double gap = dot(l_omega, r) + dot(s, r) + tau_L * pair.sigma + tau_S * std::abs(r[e_star]);
    const bool gap_due = k % config.record_gap_every == 0;
    if (gap_due || config.gap_tol) rec.dual_gap = gap;
    out.trace.push(rec);
    if (config.gap_tol && gap <= *config.gap_tol) {
      out.converged = true;
      break;
    }

    // x^{k+1/2} = (1 - gamma) x^k + gamma V
    l.scale(1.0 - gamma);
    l.append(-gamma * tau_L, pair.u, pair.v);
    l.recompress();
    for (double& x : l_omega) x *= 1.0 - gamma;
    residual_apply_rank_one(std::span<double>(l_omega), mask, gamma, -tau_L, pair.u, pair.v);
    for (double& x : s) x *= 1.0 - gamma;
    s[e_star] += gamma * s_weight;

    if (project) {
      assemble_residual(l_omega, s, observed, r);
      out.half_objectives.push_back(0.5 * squared_norm(r));
      std::vector<double> y(n_obs);
      for (std::size_t e = 0; e < n_obs; ++e) y[e] = s[e] - r[e];
      s = project_l1(y, tau_S);
    }
    if ((k + 1) % kResidualCheckEvery == 0) check_low_rank_samples(problem, l, l_omega, s, k + 1);
  }

  assemble_residual(l_omega, s, observed, r);
  out.objective = 0.5 * squared_norm(r);
  out.iterations = k;
  if (k == config.max_iter) {
    out.trace.push(detail::make_record(k, out.objective, l, out.sparse, clock));
    out.converged = !config.gap_tol.has_value();
  }
  return out;
}

}  // namespace detail

/// Plain Frank-Wolfe on min l(L, S) s.t. ||L||_* <= tau_L, ||S||_1 <= tau_S.
/// The radii are taken from the config; the problem must be constrained.
inline SolveResult solve_fw_constrained(const CpcpProblem& problem, const ConstrainedConfig& config) {
  return detail::solve_constrained(problem, config, false);
}

/// Frank-Wolfe step followed by S <- P_{||.||_1 <= tau_S}[S - grad_S l].
inline SolveResult solve_fwp(const CpcpProblem& problem, const ConstrainedConfig& config) {
  return detail::solve_constrained(problem, config, true);
}

}  // namespace cpcp
