#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcp/fw.hpp"
#include "cpcp/iterates.hpp"
#include "cpcp/oracles.hpp"
#include "cpcp/problem.hpp"
#include "cpcp/result.hpp"
#include "cpcp/trace.hpp"

namespace cpcp {

struct PenalizedConfig {
  double lambda_L = 0.0;
  double lambda_S = 0.0;
  std::size_t max_iter = 1000;
  double epsilon = 1e-3;
  std::size_t stall_window = 5;
  /// FW-T only. When false the run always lasts max_iter iterations.
  bool stop_on_stall = true;
  std::uint64_t seed = 0x243F6A8885A308D3ULL;
};

/// Upper bounds on the epigraph variables t_L, t_S.
struct BoundState {
  double U_L = 0.0;
  double U_S = 0.0;
};

/// U = g(0, 0, 0, 0) / lambda = 1/2 ||P_Omega M||_F^2 / lambda.
inline BoundState initial_bounds(const CpcpProblem& problem) {
  const auto& w = problem.penalized();
  const double g0 = 0.5 * problem.observed_squared_norm();
  return {g0 / w.lambda_L, g0 / w.lambda_S};
}

/// Result of the linear subproblem over the bounded epigraph set:
///   V_L = U_L D_L, V_tL = U_L  if <G, D_L> + lambda_L < 0, else (0, 0),
/// with D_L = -u v^T, and likewise on the sparse side with D_S = -sign(G_e*) e_e*.
struct PenalizedDirection {
  bool low_rank_active = false;
  SingularTriplet pair;  // leading pair of the gradient
  double V_tL = 0.0;
  double low_rank_scale = 0.0;  // V_L = -low_rank_scale u v^T

  bool sparse_active = false;
  std::size_t entry = 0;
  double sparse_value = 0.0;  // V_S at `entry`
  double V_tS = 0.0;

  double g_hat_L = 0.0;  // <G, D_L> + lambda_L
  double g_hat_S = 0.0;  // <G, D_S> + lambda_S
};

inline PenalizedDirection fw_direction_penalized(const ObservationMask& mask, std::span<const double> grad,
                                                 double lambda_L, double lambda_S, const BoundState& bounds,
                                                 const PowerOptions& opt = {}) {
  if (!(bounds.U_L > 0.0) || !(bounds.U_S > 0.0))
    throw std::invalid_argument("fw_direction_penalized: bounds must be positive");
  PenalizedDirection d;
  d.pair = leading_singular_pair(MaskedOperator(mask, grad), opt);
  d.g_hat_L = -d.pair.sigma + lambda_L;
  if (d.g_hat_L < 0.0) {
    d.low_rank_active = true;
    d.low_rank_scale = bounds.U_L;
    d.V_tL = bounds.U_L;
  }
  d.entry = argmax_abs(grad);
  d.g_hat_S = -std::abs(grad[d.entry]) + lambda_S;
  if (d.g_hat_S < 0.0) {
    d.sparse_active = true;
    d.sparse_value = -bounds.U_S * sign(grad[d.entry]);
    d.V_tS = bounds.U_S;
  }
  return d;
}

/// q(a, b) = constant + ga a + gb b + 1/2 (pp a^2 + 2 pq a b + qq b^2).
struct BoxQp {
  double pp = 0.0, pq = 0.0, qq = 0.0;
  double ga = 0.0, gb = 0.0;
  double constant = 0.0;

  double value(double a, double b) const {
    return constant + ga * a + gb * b + 0.5 * (pp * a * a + 2.0 * pq * a * b + qq * b * b);
  }
};

struct LineSearchResult {
  double a = 0.0;
  double b = 0.0;
  double value = 0.0;
};

namespace detail {
/// argmin over [0, 1] of 1/2 c x^2 + g x
inline double clamped_minimizer(double c, double g) {
  if (c > 0.0) return std::clamp(-g / c, 0.0, 1.0);
  return g < 0.0 ? 1.0 : 0.0;
}
}  // namespace detail

/// Exact minimizer of a convex quadratic over the unit box. Tries the
/// stationary point, then the minimizers along the four edges (which include
/// the corners), and keeps the best.
inline LineSearchResult minimize_box_qp(const BoxQp& q) {
  std::array<std::pair<double, double>, 5> cand{};
  std::size_t n = 0;
  const double det = q.pp * q.qq - q.pq * q.pq;
  if (det > 1e-14 * q.pp * q.qq && det > 0.0) {
    const double a = (-q.ga * q.qq + q.gb * q.pq) / det;
    const double b = (-q.gb * q.pp + q.ga * q.pq) / det;
    if (a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0) cand[n++] = {a, b};
  }
  cand[n++] = {0.0, detail::clamped_minimizer(q.qq, q.gb)};
  cand[n++] = {1.0, detail::clamped_minimizer(q.qq, q.gb + q.pq)};
  cand[n++] = {detail::clamped_minimizer(q.pp, q.ga), 0.0};
  cand[n++] = {detail::clamped_minimizer(q.pp, q.ga + q.pq), 1.0};
  LineSearchResult best{cand[0].first, cand[0].second, q.value(cand[0].first, cand[0].second)};
  for (std::size_t i = 1; i < n; ++i) {
    const double v = q.value(cand[i].first, cand[i].second);
    if (v < best.value) best = {cand[i].first, cand[i].second, v};
  }
  return best;
}

/// Forms q(a, b) = 1/2 ||R + a P + b Q||^2 + lambda_L (t_L + a dt_L) + lambda_S (t_S + b dt_S)
/// from mask-aligned R, P = P_Omega[V_L - L], Q = P_Omega[V_S - S].
inline BoxQp line_search_model(std::span<const double> r, std::span<const double> p, std::span<const double> q,
                               double t_L, double t_S, double dt_L, double dt_S, double lambda_L, double lambda_S) {
  if (p.size() != r.size() || q.size() != r.size())
    throw std::invalid_argument("line_search_model: value count mismatch");
  BoxQp m;
  m.pp = squared_norm(p);
  m.qq = squared_norm(q);
  m.pq = dot(p, q);
  m.ga = dot(r, p) + lambda_L * dt_L;
  m.gb = dot(r, q) + lambda_S * dt_S;
  m.constant = 0.5 * squared_norm(r) + lambda_L * t_L + lambda_S * t_S;
  return m;
}

inline LineSearchResult exact_line_search(std::span<const double> r, std::span<const double> p,
                                          std::span<const double> q, double t_L, double t_S, double dt_L,
                                          double dt_S, double lambda_L, double lambda_S) {
  return minimize_box_qp(line_search_model(r, p, q, t_L, t_S, dt_L, dt_S, lambda_L, lambda_S));
}

/// S^{k+1} = T_{lambda_S}[S^{k+1/2} - R^{k+1/2}] on the mask.
inline std::vector<double> prox_step_sparse(std::span<const double> s_half, std::span<const double> r_half,
                                            double lambda_S) {
  if (s_half.size() != r_half.size()) throw std::invalid_argument("prox_step_sparse: value count mismatch");
  if (!(lambda_S >= 0.0)) throw std::invalid_argument("prox_step_sparse: lambda_S must be non-negative");
  std::vector<double> out(s_half.size());
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = soft_threshold(s_half[e] - r_half[e], lambda_S);
  return out;
}

/// U = g / lambda. An objective increase beyond 1e-10 relative is a bug.
inline BoundState update_bounds(const BoundState& state, double g_value, double lambda_L, double lambda_S) {
  const double previous = state.U_L * lambda_L;
  if (g_value > previous + 1e-10 * std::abs(previous))
    throw std::logic_error("update_bounds: objective increased from " + std::to_string(previous) + " to " +
                           std::to_string(g_value));
  return {g_value / lambda_L, g_value / lambda_S};
}

/// True when every consecutive step in `recent_g` decreased g by at most
/// epsilon relative to the earlier value. The window is recent_g.size() - 1.
inline bool stopping_check(std::span<const double> recent_g, double epsilon) {
  if (recent_g.size() < 2) return false;
  for (std::size_t i = 1; i < recent_g.size(); ++i) {
    const double prev = recent_g[i - 1];
    const double drop = prev != 0.0 ? (prev - recent_g[i]) / std::abs(prev) : 0.0;
    if (drop > epsilon) return false;
  }
  return true;
}

namespace detail {

inline void validate(const PenalizedConfig& c) {
  if (!(c.lambda_L > 0.0) || !(c.lambda_S > 0.0)) throw std::invalid_argument("PenalizedConfig: weights must be positive");
  if (c.max_iter < 1) throw std::invalid_argument("PenalizedConfig: max_iter must be at least 1");
  if (!(c.epsilon > 0.0)) throw std::invalid_argument("PenalizedConfig: epsilon must be positive");
  if (c.stall_window < 1) throw std::invalid_argument("PenalizedConfig: stall_window must be at least 1");
}

inline double penalized_value(const LowRankIterate& l, std::span<const double> loss_residual, std::span<const double> s,
                              double lambda_L, double lambda_S) {
  return 0.5 * squared_norm(loss_residual) + lambda_L * nuclear_norm(l) + lambda_S * l1_norm(s);
}

/// Shared loop of the epigraph solvers. `tighten` selects FW-T (exact line
/// search, prox step on S, adaptive bounds, stopping rule) over the plain
/// fixed-step variant with static bounds.
inline SolveResult solve_epigraph(const CpcpProblem& problem, const PenalizedConfig& config, bool tighten) {
  problem.penalized();
  validate(config);
  const Stopwatch clock;
  const auto& mask = problem.mask();
  const auto observed = problem.observed();
  const std::size_t n_obs = mask.size();
  const double lambda_L = config.lambda_L, lambda_S = config.lambda_S;

  SolveResult out;
  out.low_rank = LowRankIterate::zeros(problem.rows(), problem.cols());
  out.sparse = SparseIterate::zeros(mask);
  LowRankIterate& l = out.low_rank;
  std::vector<double>& s = out.sparse.values;
  double& t_L = out.t_L;
  double& t_S = out.t_S;

  const double g0 = 0.5 * problem.observed_squared_norm();
  BoundState bounds{g0 / lambda_L, g0 / lambda_S};
  if (g0 == 0.0) {
    // x^0 = 0 is optimal.
    TraceRecord rec = make_record(0, 0.0, l, out.sparse, clock);
    rec.U_L = 0.0;
    rec.U_S = 0.0;
    out.trace.push(rec);
    out.converged = true;
    return out;
  }

  std::vector<double> l_omega(n_obs, 0.0), r(n_obs), p(n_obs), q(n_obs);
  assemble_residual(l_omega, s, observed, r);
  double g = g0;
  std::vector<double> history{g};
  Vector warm;

  std::size_t k = 0;
  bool stopped = false;
  for (; k < config.max_iter; ++k) {
    PowerOptions popt;
    popt.seed = config.seed;
    if (warm.size() > 0) popt.start = &warm;
    PenalizedDirection dir;
    try {
      dir = fw_direction_penalized(mask, r, lambda_L, lambda_S, bounds, popt);
    } catch (const std::exception& ex) {
      throw std::runtime_error("FW iteration " + std::to_string(k) + ": " + ex.what());
    }
    if (!dir.pair.converged) ++out.lmo_warnings;
    out.lmo_iterations += static_cast<std::size_t>(dir.pair.iterations);
    warm = dir.pair.v;

    // P = P_Omega[V_L - L], Q = P_Omega[V_S - S]
    const auto rows = mask.row_indices();
    const auto cols = mask.col_indices();
    const Vector& u = dir.pair.u;
    const Vector& v = dir.pair.v;
    for (std::size_t e = 0; e < n_obs; ++e) {
      const double vl = dir.low_rank_active ? -dir.low_rank_scale * u(rows[e]) * v(cols[e]) : 0.0;
      p[e] = vl - l_omega[e];
      q[e] = -s[e];
    }
    if (dir.sparse_active) q[dir.entry] += dir.sparse_value;
    const double dt_L = dir.V_tL - t_L;
    const double dt_S = dir.V_tS - t_S;

    // <x - V, grad g> with grad g = (R, lambda_L, R, lambda_S)
    const double gap = -dot(r, p) - dot(r, q) - lambda_L * dt_L - lambda_S * dt_S;

    double a, b;
    if (tighten) {
      const LineSearchResult ls = exact_line_search(r, p, q, t_L, t_S, dt_L, dt_S, lambda_L, lambda_S);
      a = ls.a;
      b = ls.b;
    } else {
      a = b = fw_step_size(k);
    }

    TraceRecord rec = make_record(k, g, l, out.sparse, clock);
    rec.dual_gap = gap;
    rec.step_a = a;
    rec.step_b = b;
    rec.U_L = bounds.U_L;
    rec.U_S = bounds.U_S;
    out.trace.push(rec);

    l.scale(1.0 - a);
    if (dir.low_rank_active) l.append(-a * dir.low_rank_scale, u, v);
    l.recompress();
    for (std::size_t e = 0; e < n_obs; ++e) {
      l_omega[e] += a * p[e];
      s[e] += b * q[e];
    }
    t_L += a * dt_L;
    t_S += b * dt_S;
    assemble_residual(l_omega, s, observed, r);
    const double g_half = 0.5 * squared_norm(r) + lambda_L * t_L + lambda_S * t_S;
    out.half_objectives.push_back(g_half);

    if (tighten) {
      s = prox_step_sparse(s, r, lambda_S);
      t_S = l1_norm(s);
      assemble_residual(l_omega, s, observed, r);
      const double g_next = 0.5 * squared_norm(r) + lambda_L * t_L + lambda_S * t_S;
      bounds = update_bounds(bounds, g_next, lambda_L, lambda_S);
      g = g_next;
    } else {
      g = g_half;
    }
    if ((k + 1) % kResidualCheckEvery == 0) check_low_rank_samples(problem, l, l_omega, s, k + 1);

    if (tighten) {
      history.push_back(g);
      if (g < 1e-14 * g0) stopped = true;
      if (config.stop_on_stall && history.size() > config.stall_window &&
          stopping_check(std::span<const double>(history).last(config.stall_window + 1), config.epsilon))
        stopped = true;
      if (stopped) {
        ++k;
        break;
      }
    }
  }

  TraceRecord last = make_record(k, g, l, out.sparse, clock);
  last.U_L = bounds.U_L;
  last.U_S = bounds.U_S;
  out.trace.push(last);
  out.iterations = k;
  out.converged = !tighten || stopped || !config.stop_on_stall;
  out.objective = penalized_value(l, r, s, lambda_L, lambda_S);
  return out;
}

}  // namespace detail

/// Frank-Wolfe on the bounded epigraph problem with gamma = 2/(k+2) and the
/// bounds fixed at their initial values. Runs for max_iter iterations.
inline SolveResult solve_fw_penalized(const CpcpProblem& problem, const PenalizedConfig& config) {
  return detail::solve_epigraph(problem, config, false);
}

/// FW-T: FW direction, exact line search over (a, b), soft-thresholding step
/// on S, and bounds tightened to g / lambda after every iteration.
inline SolveResult solve_fwt(const CpcpProblem& problem, const PenalizedConfig& config) {
  return detail::solve_epigraph(problem, config, true);
}

}  // namespace cpcp
