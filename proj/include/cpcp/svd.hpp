#pragma once

#include <algorithm>
#include <concepts>
#include <limits>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/SVD>

#include "cpcp/mask.hpp"
#include "cpcp/random.hpp"
#include "cpcp/types.hpp"

namespace cpcp {

/// Thin SVD A = U diag(sigma) V^T with sigma sorted in decreasing order.
/// U is m x d and V is n x d, d = min(m, n).
struct Svd {
  Vector sigma;
  Matrix U;
  Matrix V;
};

namespace detail {

// Rotates columns p and q of a column-major matrix in place.
inline void rotate_columns(Matrix& a, Index p, Index q, double c, double s) {
  double* x = a.col(p).data();
  double* y = a.col(q).data();
  for (Index i = 0; i < a.rows(); ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// Completes the zero columns of `u` (listed in `zero_cols`) to an orthonormal
// set by Gram-Schmidt against the canonical basis.
inline void complete_basis(Matrix& u, const std::vector<Index>& zero_cols) {
  Index candidate = 0;
  for (Index c : zero_cols) {
    while (candidate < u.rows()) {
      Vector e = Vector::Unit(u.rows(), candidate++);
      for (int pass = 0; pass < 2; ++pass)
        for (Index k = 0; k < u.cols(); ++k)
          if (k != c && u.col(k).squaredNorm() > 0.0) e -= u.col(k).dot(e) * u.col(k);
      const double nrm = e.norm();
      if (nrm > 0.5) {
        u.col(c) = e / nrm;
        break;
      }
    }
  }
}

}  // namespace detail

/// One-sided (Hestenes) Jacobi SVD. Columns are orthogonalised by plane
/// rotations until every pair satisfies |<a_p, a_q>| <= tol ||a_p|| ||a_q||.
/// Slow but self-contained and accurate to high relative precision; used as
/// the dense kernel and as the reference for the iterative methods.
inline Svd jacobi_svd(const Matrix& a, double tol = 1e-15, int max_sweeps = 80) {
  if (a.rows() == 0 || a.cols() == 0) throw std::invalid_argument("jacobi_svd: empty matrix");
  if (a.rows() < a.cols()) {
    Svd t = jacobi_svd(a.transpose(), tol, max_sweeps);
    std::swap(t.U, t.V);
    return t;
  }
  const Index n = a.cols();
  Matrix w = a;
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        detail::rotate_columns(w, p, q, c, s);
        detail::rotate_columns(v, p, q, c, s);
      }
    }
    if (!rotated) break;
  }

  Vector sigma(n);
  for (Index j = 0; j < n; ++j) sigma(j) = w.col(j).norm();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return sigma(x) > sigma(y); });

  Svd out;
  out.sigma.resize(n);
  out.U.resize(a.rows(), n);
  out.V.resize(n, n);
  std::vector<Index> zero_cols;
  const double floor = sigma.maxCoeff() * 1e-300;
  for (Index k = 0; k < n; ++k) {
    const Index j = order[static_cast<std::size_t>(k)];
    out.sigma(k) = sigma(j);
    out.V.col(k) = v.col(j);
    if (sigma(j) > floor && sigma(j) > 0.0) {
      out.U.col(k) = w.col(j) / sigma(j);
    } else {
      out.U.col(k).setZero();
      out.sigma(k) = 0.0;
      zero_cols.push_back(k);
    }
  }
  if (!zero_cols.empty()) detail::complete_basis(out.U, zero_cols);
  return out;
}

/// Matrices with min(m, n) above this go to Eigen's divide-and-conquer SVD;
/// smaller ones use the Jacobi kernel.
inline constexpr Index kJacobiMaxDim = 128;

/// Dense thin SVD through the kernel suited to the size.
inline Svd dense_svd(const Matrix& a) {
  if (std::min(a.rows(), a.cols()) <= kJacobiMaxDim) return jacobi_svd(a);
  Eigen::BDCSVD<Matrix> bdc(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {bdc.singularValues(), bdc.matrixU(), bdc.matrixV()};
}

/// Matrix-free linear operator: y = A x and x = A^T y on caller buffers.
template <class Op>
concept LinearOperator = requires(const Op& op, std::span<const double> in, std::span<double> out) {
  { op.rows() } -> std::convertible_to<Index>;
  { op.cols() } -> std::convertible_to<Index>;
  op.apply(in, out);
  op.apply_transpose(in, out);
};

class DenseOperator {
 public:
  explicit DenseOperator(const Matrix& a) : a_(a) {}
  Index rows() const { return a_.rows(); }
  Index cols() const { return a_.cols(); }
  void apply(std::span<const double> x, std::span<double> y) const {
    Eigen::Map<Vector>(y.data(), rows()).noalias() = a_ * Eigen::Map<const Vector>(x.data(), cols());
  }
  void apply_transpose(std::span<const double> y, std::span<double> x) const {
    Eigen::Map<Vector>(x.data(), cols()).noalias() = a_.transpose() * Eigen::Map<const Vector>(y.data(), rows());
  }

 private:
  const Matrix& a_;
};

/// Mask-supported matrix given by values aligned with an ObservationMask.
/// Each application costs O(|Omega|).
class MaskedOperator {
 public:
  MaskedOperator(const ObservationMask& mask, std::span<const double> values) : mask_(mask), values_(values) {
    if (values.size() != mask.size()) throw std::invalid_argument("MaskedOperator: value count does not match mask");
  }
  Index rows() const { return mask_.rows(); }
  Index cols() const { return mask_.cols(); }
  void apply(std::span<const double> x, std::span<double> y) const {
    if (mask_.is_full()) {
      // Full masks store values in row-major dense order.
      Eigen::Map<Vector>(y.data(), rows()).noalias() = dense() * Eigen::Map<const Vector>(x.data(), cols());
      return;
    }
    std::fill(y.begin(), y.end(), 0.0);
    const auto r = mask_.row_indices();
    const auto c = mask_.col_indices();
    for (std::size_t e = 0; e < values_.size(); ++e) y[static_cast<std::size_t>(r[e])] += values_[e] * x[static_cast<std::size_t>(c[e])];
  }
  void apply_transpose(std::span<const double> y, std::span<double> x) const {
    if (mask_.is_full()) {
      Eigen::Map<Vector>(x.data(), cols()).noalias() = dense().transpose() * Eigen::Map<const Vector>(y.data(), rows());
      return;
    }
    std::fill(x.begin(), x.end(), 0.0);
    const auto r = mask_.row_indices();
    const auto c = mask_.col_indices();
    for (std::size_t e = 0; e < values_.size(); ++e) x[static_cast<std::size_t>(c[e])] += values_[e] * y[static_cast<std::size_t>(r[e])];
  }

  /// y = A x and z = A^T y in one sweep over the rows, so each stored value
  /// is read once per power step.
  void apply_normal(std::span<const double> x, std::span<double> y, std::span<double> z) const {
    std::fill(z.begin(), z.end(), 0.0);
    if (mask_.is_full()) {
      const auto a = dense();
      const Eigen::Map<const Vector> xv(x.data(), cols());
      Eigen::Map<Vector> zv(z.data(), cols());
      for (Index i = 0; i < rows(); ++i) {
        const double t = a.row(i).dot(xv.transpose());
        y[static_cast<std::size_t>(i)] = t;
        zv.noalias() += t * a.row(i).transpose();
      }
      return;
    }
    std::fill(y.begin(), y.end(), 0.0);
    const auto r = mask_.row_indices();
    const auto c = mask_.col_indices();
    std::size_t e = 0;
    while (e < values_.size()) {
      const auto i = r[e];
      std::size_t end = e;
      double t = 0.0;
      for (; end < values_.size() && r[end] == i; ++end) t += values_[end] * x[static_cast<std::size_t>(c[end])];
      y[static_cast<std::size_t>(i)] = t;
      for (; e < end; ++e) z[static_cast<std::size_t>(c[e])] += values_[e] * t;
    }
  }

 private:
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> dense() const { return {values_.data(), rows(), cols()}; }

  const ObservationMask& mask_;
  std::span<const double> values_;
};

struct SingularTriplet {
  double sigma = 0.0;
  Vector u;
  Vector v;
  bool converged = false;
  bool zero_operator = false;
  int iterations = 0;
};

struct PowerOptions {
  double tol = 1e-9;
  int max_iter = 1000;
  std::uint64_t seed = 0x243F6A8885A308D3ULL;
  /// Optional starting right vector (e.g. the previous solver iteration's).
  const Vector* start = nullptr;
};

/// Leading singular triplet by power iteration on A^T A. Stops when
/// |sigma_t - sigma_{t-1}| <= tol * max(1, sigma_t). On hitting max_iter the
/// best iterate is returned with converged = false. A zero operator yields
/// sigma = 0 with arbitrary unit vectors and zero_operator = true.
template <LinearOperator Op>
SingularTriplet leading_singular_pair(const Op& op, const PowerOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("leading_singular_pair: tol must be positive");
  const Index m = op.rows(), n = op.cols();
  SingularTriplet out;
  Vector v;
  bool reseeded = false;
  if (opt.start != nullptr && opt.start->size() == n && opt.start->norm() > 0.0) {
    v = opt.start->normalized();
  } else {
    v = GaussianSource(SplitMix64(opt.seed)).vector(n).normalized();
    reseeded = true;
  }
  Vector u(m), w(n);
  double prev = -1.0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    out.iterations = it;
    const std::span<const double> vs(v.data(), static_cast<std::size_t>(n));
    const std::span<double> us(u.data(), static_cast<std::size_t>(m));
    const std::span<double> ws(w.data(), static_cast<std::size_t>(n));
    constexpr bool fused = requires { op.apply_normal(vs, us, ws); };
    if constexpr (fused) op.apply_normal(vs, us, ws);
    else op.apply(vs, us);
    const double su = u.norm();
    if (su == 0.0) {
      if (!reseeded) {
        // The warm start fell into the null space; retry from a random vector.
        v = GaussianSource(SplitMix64(opt.seed)).vector(n).normalized();
        reseeded = true;
        continue;
      }
      out.sigma = 0.0;
      out.u = Vector::Unit(m, 0);
      out.v = Vector::Unit(n, 0);
      out.zero_operator = true;
      out.converged = true;
      return out;
    }
    u /= su;
    if constexpr (fused) w /= su;
    else op.apply_transpose(std::span<const double>(u.data(), static_cast<std::size_t>(m)), ws);
    const double sigma = w.norm();
    v = w / sigma;
    if (std::abs(sigma - prev) <= opt.tol * std::max(1.0, sigma)) {
      out.converged = true;
      break;
    }
    prev = sigma;
  }
  op.apply(std::span<const double>(v.data(), static_cast<std::size_t>(n)), std::span<double>(u.data(), static_cast<std::size_t>(m)));
  out.sigma = u.norm();
  if (out.sigma == 0.0) {
    out.u = Vector::Unit(m, 0);
    out.zero_operator = true;
  } else {
    out.u = u / out.sigma;
  }
  out.v = v;
  return out;
}

struct PartialSvdOptions {
  double tol = 1e-11;
  int max_iter = 500;
  std::uint64_t seed = 0x13198A2E03707344ULL;
  /// Optional block of starting right vectors (n x anything).
  const Matrix* start = nullptr;
  /// Dense fallback is allowed when m * n stays below this.
  double dense_fallback_entries = 4e6;
};

struct PartialSvd {
  Svd svd;  // top `computed` triplets
  Index computed = 0;
  bool converged = true;
  int iterations = 0;
};

namespace detail {
inline Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

inline PartialSvd truncated_dense(const Matrix& a, Index k) {
  Svd full = dense_svd(a);
  PartialSvd out;
  out.computed = k;
  out.svd.sigma = full.sigma.head(k);
  out.svd.U = full.U.leftCols(k);
  out.svd.V = full.V.leftCols(k);
  return out;
}
}  // namespace detail

/// Top-k singular triplets of a dense matrix by block subspace iteration with
/// a Rayleigh-Ritz step, converged when every kept triplet satisfies
/// ||A v_i - sigma_i u_i|| <= tol * sigma_1. Uses the dense Jacobi kernel
/// when the block would cover most of the spectrum anyway.
inline PartialSvd partial_svd(const Matrix& a, Index k, const PartialSvdOptions& opt = {}) {
  const Index m = a.rows(), n = a.cols();
  const Index d = std::min(m, n);
  if (d == 0) throw std::invalid_argument("partial_svd: empty matrix");
  if (k < 1 || k > d) throw std::invalid_argument("partial_svd: k out of range");
  const Index block = std::min(d, k + std::max<Index>(5, k / 10));
  if (2 * block >= d) return detail::truncated_dense(a, k);

  Matrix q(n, block);
  Index filled = 0;
  if (opt.start != nullptr && opt.start->rows() == n) {
    filled = std::min(block, opt.start->cols());
    q.leftCols(filled) = opt.start->leftCols(filled);
  }
  if (filled < block) {
    GaussianSource g(SplitMix64(opt.seed));
    q.rightCols(block - filled) = g.matrix(n, block - filled);
  }
  q = detail::orthonormal_basis(q);

  PartialSvd out;
  out.computed = k;
  Matrix u_prev;
  Vector s_prev;
  for (int it = 1; it <= opt.max_iter; ++it) {
    out.iterations = it;
    Matrix y = a * q;
    if (it > 1) {
      double worst = 0.0;
      for (Index i = 0; i < k; ++i) worst = std::max(worst, (y.col(i) - s_prev(i) * u_prev.col(i)).norm());
      if (worst <= opt.tol * std::max(s_prev(0), std::numeric_limits<double>::min())) {
        out.svd.sigma = s_prev.head(k);
        out.svd.U = u_prev.leftCols(k);
        out.svd.V = q.leftCols(k);
        return out;
      }
    }
    const Matrix w = detail::orthonormal_basis(y);
    const Matrix z = a.transpose() * w;  // = (W^T A)^T
    Svd small = dense_svd(z);            // z = Uz S Vz^T  =>  W^T A = Vz S Uz^T
    u_prev = w * small.V;
    s_prev = small.sigma;
    q = small.U;
  }
  if (static_cast<double>(m) * static_cast<double>(n) <= opt.dense_fallback_entries) return detail::truncated_dense(a, k);
  out.converged = false;
  out.svd.sigma = s_prev.head(k);
  out.svd.U = u_prev.leftCols(k);
  out.svd.V = q.leftCols(k);
  return out;
}

}  // namespace cpcp
