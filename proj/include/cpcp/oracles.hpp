#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cpcp/iterates.hpp"
#include "cpcp/svd.hpp"
#include "cpcp/types.hpp"

namespace cpcp {

// ---------------------------------------------------------------------------
// Linear minimization over the nuclear-norm ball

struct NuclearLmo {
  LowRankIterate direction;  // -tau u v^T
  double linear_value = 0.0;  // <G, direction> = -tau sigma
  SingularTriplet pair;
};

/// argmin_{||X||_* <= tau} <G, X> = -tau u v^T for the leading pair of G.
template <LinearOperator Op>
NuclearLmo lmo_nuclear(const Op& grad, double tau, const PowerOptions& opt = {}) {
  if (!(tau >= 0.0)) throw std::invalid_argument("lmo_nuclear: tau must be non-negative");
  NuclearLmo out;
  out.direction = LowRankIterate(grad.rows(), grad.cols(), false);
  if (tau == 0.0) return out;
  out.pair = leading_singular_pair(grad, opt);
  out.direction.append(-tau, out.pair.u, out.pair.v);
  out.linear_value = -tau * out.pair.sigma;
  return out;
}

// ---------------------------------------------------------------------------
// Linear minimization over the l1 ball

/// Position of the largest |g_e|; the first one in mask (row-major) order on ties.
inline std::size_t argmax_abs(std::span<const double> g) {
  if (g.empty()) throw std::invalid_argument("argmax_abs: empty gradient");
  std::size_t best = 0;
  double best_abs = std::abs(g[0]);
  for (std::size_t e = 1; e < g.size(); ++e) {
    const double a = std::abs(g[e]);
    if (a > best_abs) {
      best_abs = a;
      best = e;
    }
  }
  return best;
}

struct L1Lmo {
  SparseIterate direction;  // one-sparse
  std::size_t entry = 0;
  double weight = 0.0;  // direction value at `entry`: -tau sign(g_entry)
  double linear_value = 0.0;
};

/// argmin_{||X||_1 <= tau} <G, X> = -tau sign(G_e*) e_e* with e* = argmax |G_e|.
inline L1Lmo lmo_l1(std::span<const double> grad, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("lmo_l1: tau must be non-negative");
  L1Lmo out;
  out.entry = argmax_abs(grad);
  out.weight = -tau * sign(grad[out.entry]);
  out.linear_value = -tau * std::abs(grad[out.entry]);
  out.direction.values.assign(grad.size(), 0.0);
  out.direction.values[out.entry] = out.weight;
  return out;
}

// ---------------------------------------------------------------------------
// Euclidean projection onto the l1 ball

/// argmin_{||X||_1 <= beta} 1/2 ||X - Y||^2 by sort-then-threshold. Entries
/// with |y| below a lower bound on the threshold are filtered out before the
/// sort since they are zeroed either way.
inline std::vector<double> project_l1(std::span<const double> y, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("project_l1: beta must be non-negative");
  std::vector<double> out(y.size(), 0.0);
  if (beta == 0.0) return out;
  const double total = l1_norm(y);
  if (total <= beta) {
    std::copy(y.begin(), y.end(), out.begin());
    return out;
  }
  // theta >= (sum|y| - beta) / N since sum max(|y| - t, 0) >= sum |y| - N t.
  const double lower = (total - beta) / static_cast<double>(y.size());
  std::vector<double> mags;
  mags.reserve(y.size());
  for (double v : y)
    if (std::abs(v) > lower) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mags.size(); ++j) {
    cumulative += mags[j];
    const double t = (cumulative - beta) / static_cast<double>(j + 1);
    if (mags[j] > t) theta = t;
    else break;
  }
  theta = std::max(theta, 0.0);
  for (std::size_t e = 0; e < y.size(); ++e) out[e] = sign(y[e]) * std::max(std::abs(y[e]) - theta, 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Soft thresholding

inline double soft_threshold(double y, double lambda) { return sign(y) * std::max(std::abs(y) - lambda, 0.0); }

inline std::vector<double> soft_threshold(std::span<const double> y, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("soft_threshold: lambda must be non-negative");
  std::vector<double> out(y.size());
  for (std::size_t e = 0; e < y.size(); ++e) out[e] = soft_threshold(y[e], lambda);
  return out;
}

inline Matrix soft_threshold(const Matrix& y, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("soft_threshold: lambda must be non-negative");
  return y.unaryExpr([lambda](double v) { return soft_threshold(v, lambda); });
}

// ---------------------------------------------------------------------------
// Singular value thresholding with a partial SVD

struct SvtResult {
  LowRankIterate low_rank;  // U (Sigma - tau)_+ V^T, factored
  Index svp = 0;             // singular values kept (> tau)
  Index computed = 0;        // width of the SVD actually computed
  double nuclear_norm = 0.0;  // sum of kept (sigma - tau)
  Matrix right_vectors;      // computed right singular vectors, for warm starts
  bool converged = true;
};

/// D_tau(Y) = U T_tau(Sigma) V^T. Computes the top sv_hint triplets first and
/// falls back to the full spectrum when all of them exceed tau.
inline SvtResult singular_value_threshold(const Matrix& y, double tau, Index sv_hint, const PartialSvdOptions& opt = {}) {
  if (y.rows() == 0 || y.cols() == 0) throw std::invalid_argument("singular_value_threshold: empty matrix");
  if (!(tau >= 0.0)) throw std::invalid_argument("singular_value_threshold: tau must be non-negative");
  if (sv_hint < 1) throw std::invalid_argument("singular_value_threshold: sv_hint must be at least 1");
  const Index d = std::min(y.rows(), y.cols());
  const Index k = std::min(sv_hint, d);
  PartialSvd ps = partial_svd(y, k, opt);
  auto count_above = [&](const Vector& s) {
    Index c = 0;
    while (c < s.size() && s(c) > tau) ++c;
    return c;
  };
  Index svp = count_above(ps.svd.sigma);
  if (svp == k && k < d) {
    ps = detail::truncated_dense(y, d);
    svp = count_above(ps.svd.sigma);
  }
  SvtResult out;
  out.svp = svp;
  out.computed = ps.computed;
  out.converged = ps.converged;
  out.low_rank = LowRankIterate(y.rows(), y.cols(), false);
  for (Index i = 0; i < svp; ++i) {
    const double c = ps.svd.sigma(i) - tau;
    out.low_rank.append(c, ps.svd.U.col(i), ps.svd.V.col(i));
    out.nuclear_norm += c;
  }
  out.right_vectors = std::move(ps.svd.V);
  return out;
}

/// Width of the next partial SVD given the current width sv and the number
/// svp of values that survived the threshold, for d = min(m, n).
inline Index sv_heuristic(Index sv, Index svp, Index d) {
  if (svp < sv) return std::min(svp + 1, d);
  return std::min(svp + static_cast<Index>(std::lround(0.05 * static_cast<double>(d))), d);
}

inline Index initial_sv(Index d) { return std::max<Index>(1, std::lround(static_cast<double>(d) / 10.0)); }

}  // namespace cpcp
