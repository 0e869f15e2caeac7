#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcp/iterates.hpp"
#include "cpcp/problem.hpp"
#include "cpcp/trace.hpp"

namespace cpcp {

struct SolveResult {
  LowRankIterate low_rank;
  SparseIterate sparse;
  SolverTrace trace;
  std::size_t iterations = 0;  // steps taken; the returned point is x^iterations
  bool converged = false;
  double t_L = 0.0;  // epigraph variables (penalized FW solvers only)
  double t_S = 0.0;
  double objective = 0.0;  // l for constrained runs, f (exact nuclear norm) for penalized runs
  /// Objective right after the FW half-step, one per iteration (FW-P: l, FW-T: g).
  std::vector<double> half_objectives;
  std::size_t lmo_warnings = 0;  // power iterations that hit max_iter
  std::size_t lmo_iterations = 0;  // total power-iteration steps
};

namespace detail {

#ifdef NDEBUG
inline constexpr std::size_t kResidualCheckEvery = 100;
#else
inline constexpr std::size_t kResidualCheckEvery = 1;
#endif

/// Verifies the incrementally maintained L on the mask against a recomputation
/// from the factors. A mismatch means the bookkeeping is broken.
inline void check_low_rank_samples(const CpcpProblem& problem, const LowRankIterate& l,
                                   std::span<const double> low_rank_on_mask, std::span<const double> sparse,
                                   std::size_t k) {
  const auto fresh = l.sample_from_factors(problem.mask());
  double diff = 0.0;
  for (std::size_t e = 0; e < fresh.size(); ++e) diff += (fresh[e] - low_rank_on_mask[e]) * (fresh[e] - low_rank_on_mask[e]);
  const double scale = std::sqrt(squared_norm(fresh)) + std::sqrt(squared_norm(sparse)) +
                       std::sqrt(problem.observed_squared_norm());
  if (std::sqrt(diff) > 1e-9 * scale)
    throw std::logic_error("residual drift at iteration " + std::to_string(k) + ": " + std::to_string(std::sqrt(diff)));
}

inline TraceRecord make_record(std::size_t k, double objective, const LowRankIterate& l, const SparseIterate& s,
                               const Stopwatch& clock) {
  TraceRecord r;
  r.k = k;
  r.objective = objective;
  r.rank = static_cast<std::size_t>(l.rank());
  r.nnz = s.nnz();
  r.wall_nanos = clock.nanos();
  return r;
}

}  // namespace detail
}  // namespace cpcp
