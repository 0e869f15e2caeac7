#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcp/iterates.hpp"
#include "cpcp/mask.hpp"
#include "cpcp/problem.hpp"
#include "cpcp/random.hpp"
#include "cpcp/types.hpp"

namespace cpcp {

/// M0 = L0 + S0 + N0 with L0 = A B (A: m x r, B: r x n, standard normal),
/// S0 = amplitude * randn on a Bernoulli(sparse_fraction) support,
/// N0 = noise_std * randn, observed on a uniform mask of ratio rho.
struct SyntheticSpec {
  Index m = 0;
  Index n = 0;
  Index r = 0;
  double sparse_fraction = 0.0;
  double sparse_amplitude = 0.0;
  double noise_std = 0.0;
  double rho = 1.0;
  std::uint64_t seed = 0;
};

struct SparseEntry {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

struct GroundTruth {
  Matrix L0;
  std::vector<SparseEntry> S0;  // row-major order
  ObservationMask mask;
  std::vector<double> observed;  // M0 on the mask
  double tau_L_true = 0.0;       // ||L0||_*
  double tau_S_true = 0.0;       // ||S0||_1

  Matrix S0_dense() const {
    Matrix out = Matrix::Zero(L0.rows(), L0.cols());
    for (const auto& e : S0) out(e.i, e.j) = e.value;
    return out;
  }
};

/// Substream ids, one per random quantity.
enum class SyntheticStream : std::uint64_t { factors = 0, sparse_support = 1, sparse_values = 2, noise = 3, mask = 4 };

inline SplitMix64 synthetic_stream(std::uint64_t seed, SyntheticStream s) {
  return SplitMix64::stream(seed, static_cast<std::uint64_t>(s));
}

/// Exactly round(rho m n) distinct entries chosen uniformly without
/// replacement (selection sampling, one pass in row-major order).
inline ObservationMask sample_mask(Index m, Index n, double rho, std::uint64_t seed) {
  if (m <= 0 || n <= 0) throw std::invalid_argument("sample_mask: dimensions must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("sample_mask: rho must lie in (0, 1]");
  const std::int64_t total = static_cast<std::int64_t>(m) * n;
  const auto want = static_cast<std::int64_t>(std::llround(rho * static_cast<double>(total)));
  if (want <= 0) throw std::invalid_argument("sample_mask: rho * m * n rounds to zero entries");
  std::vector<std::int64_t> linear;
  linear.reserve(static_cast<std::size_t>(want));
  if (want == total) {
    for (std::int64_t t = 0; t < total; ++t) linear.push_back(t);
  } else {
    SplitMix64 rng = synthetic_stream(seed, SyntheticStream::mask);
    std::int64_t needed = want;
    for (std::int64_t t = 0; t < total && needed > 0; ++t) {
      if (static_cast<double>(total - t) * rng.uniform() < static_cast<double>(needed)) {
        linear.push_back(t);
        --needed;
      }
    }
  }
  return ObservationMask::from_sorted_linear(m, n, linear);
}

/// ||A B||_* from an r x r core: A = Qa Ra, B^T = Qb Rb gives the singular
/// values of Ra Rb^T.
inline double factored_nuclear_norm(const Matrix& a, const Matrix& b) {
  if (a.cols() == 0) return 0.0;
  Eigen::HouseholderQR<Matrix> qa(a);
  Eigen::HouseholderQR<Matrix> qb{Matrix(b.transpose())};
  const Index r = a.cols();
  const Index ka = std::min(r, a.rows()), kb = std::min(r, b.cols());
  const Matrix ra = qa.matrixQR().topRows(ka).triangularView<Eigen::Upper>();
  const Matrix rb = qb.matrixQR().topRows(kb).triangularView<Eigen::Upper>();
  return jacobi_svd(ra * rb.transpose()).sigma.sum();
}

inline GroundTruth gen_synthetic(const SyntheticSpec& spec) {
  if (spec.m <= 0 || spec.n <= 0) throw std::invalid_argument("gen_synthetic: dimensions must be positive");
  if (spec.r < 0 || spec.r > std::min(spec.m, spec.n)) throw std::invalid_argument("gen_synthetic: r must lie in [0, min(m, n)]");
  if (!(spec.sparse_fraction >= 0.0 && spec.sparse_fraction <= 1.0))
    throw std::invalid_argument("gen_synthetic: sparse_fraction must lie in [0, 1]");
  if (!(spec.noise_std >= 0.0)) throw std::invalid_argument("gen_synthetic: noise_std must be non-negative");
  if (!std::isfinite(spec.sparse_amplitude)) throw std::invalid_argument("gen_synthetic: sparse_amplitude must be finite");

  GroundTruth gt;
  GaussianSource factors(synthetic_stream(spec.seed, SyntheticStream::factors));
  const Matrix a = factors.matrix(spec.m, spec.r);
  const Matrix b = factors.matrix(spec.r, spec.n);
  gt.L0 = spec.r > 0 ? Matrix(a * b) : Matrix::Zero(spec.m, spec.n);
  gt.tau_L_true = factored_nuclear_norm(a, b);

  SplitMix64 support = synthetic_stream(spec.seed, SyntheticStream::sparse_support);
  GaussianSource values(synthetic_stream(spec.seed, SyntheticStream::sparse_values));
  KahanSum s_l1;
  for (Index i = 0; i < spec.m; ++i)
    for (Index j = 0; j < spec.n; ++j)
      if (support.uniform() < spec.sparse_fraction) {
        const double v = spec.sparse_amplitude * values.next();
        gt.S0.push_back({i, j, v});
        s_l1 += std::abs(v);
      }
  gt.tau_S_true = s_l1.value();

  gt.mask = sample_mask(spec.m, spec.n, spec.rho, spec.seed);

  // Noise is drawn for every entry in row-major order so that it does not
  // depend on the mask; only the observed entries are kept.
  GaussianSource noise(synthetic_stream(spec.seed, SyntheticStream::noise));
  gt.observed.assign(gt.mask.size(), 0.0);
  std::size_t e = 0, next_sparse = 0;
  for (Index i = 0; i < spec.m; ++i)
    for (Index j = 0; j < spec.n; ++j) {
      const double nz = spec.noise_std * noise.next();
      double sv = 0.0;
      if (next_sparse < gt.S0.size() && gt.S0[next_sparse].i == i && gt.S0[next_sparse].j == j)
        sv = gt.S0[next_sparse++].value;
      if (e < gt.mask.size() && gt.mask.row(e) == i && gt.mask.col(e) == j) gt.observed[e++] = gt.L0(i, j) + sv + nz;
    }
  return gt;
}

/// lambda_L = delta rho ||P_Omega M||_F, lambda_S = delta sqrt(rho) ||P_Omega M||_F / sqrt(max(m, n)).
inline Penalized default_weights(const ObservationMask& mask, std::span<const double> observed, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("default_weights: delta must be positive");
  if (observed.size() != mask.size()) throw std::invalid_argument("default_weights: value count does not match mask");
  const double norm = std::sqrt(squared_norm(observed));
  const double rho = mask.rho();
  const double big = static_cast<double>(std::max(mask.rows(), mask.cols()));
  return {delta * rho * norm, delta * std::sqrt(rho) * norm / std::sqrt(big)};
}

/// ||X - X0||_F / ||X0||_F
inline double relative_error(const Matrix& x, const Matrix& x0) {
  const double base = x0.norm();
  if (base == 0.0) throw std::invalid_argument("relative_error: zero reference");
  return (x - x0).norm() / base;
}

}  // namespace cpcp
