#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcp/mask.hpp"
#include "cpcp/svd.hpp"
#include "cpcp/types.hpp"

namespace cpcp {

/// Low-rank term kept as an accumulation of rank-one pieces,
///   L = sum_i c_i u_i v_i^T,  ||u_i|| = ||v_i|| = 1,
/// with an optional dense copy maintained alongside. The factored form is
/// the source of truth; the dense cache only makes entry access O(1).
class LowRankIterate {
 public:
  /// Problems at or below this many entries keep a dense cache by default.
  static constexpr double kDenseCacheEntries = 4e6;

  LowRankIterate() = default;
  LowRankIterate(Index rows, Index cols, bool dense_cache) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("LowRankIterate: dimensions must be positive");
    if (dense_cache) dense_ = Matrix::Zero(rows, cols);
  }
  static LowRankIterate zeros(Index rows, Index cols) {
    return LowRankIterate(rows, cols, static_cast<double>(rows) * static_cast<double>(cols) <= kDenseCacheEntries);
  }

  /// Rank-one matrix c * u v^T.
  static LowRankIterate rank_one(double c, const Vector& u, const Vector& v, bool dense_cache = false) {
    LowRankIterate out(u.size(), v.size(), dense_cache);
    out.append(c, u, v);
    return out;
  }

  /// Builds from thin factors; columns of `u` and `v` must be unit vectors.
  static LowRankIterate from_factors(const Matrix& u, std::span<const double> c, const Matrix& v, bool dense_cache) {
    LowRankIterate out(u.rows(), v.rows(), dense_cache);
    for (Index k = 0; k < u.cols(); ++k) out.append(c[static_cast<std::size_t>(k)], u.col(k), v.col(k));
    return out;
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index rank() const { return static_cast<Index>(coeffs_.size()); }
  std::span<const double> coeffs() const { return coeffs_; }
  Eigen::Map<const Matrix> left() const { return {left_.data(), rows_, rank()}; }
  Eigen::Map<const Matrix> right() const { return {right_.data(), cols_, rank()}; }
  bool has_dense_cache() const { return dense_.has_value(); }
  const Matrix& dense_cache() const { return *dense_; }

  /// sum_i |c_i|, an upper bound on the nuclear norm.
  double coeff_l1() const { return l1_norm(coeffs_); }

  /// L <- a L.
  void scale(double a) {
    if (a == 0.0) {
      clear();
      return;
    }
    for (double& c : coeffs_) c *= a;
    if (dense_) *dense_ *= a;
  }

  /// L <- L + c u v^T.
  template <class DerivedU, class DerivedV>
  void append(double c, const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
    if (u.size() != rows_ || v.size() != cols_)
      throw std::invalid_argument("LowRankIterate::append: factor dimensions do not match " + std::to_string(rows_) +
                                  "x" + std::to_string(cols_));
    if (c == 0.0) return;
    const Vector uu = u;
    const Vector vv = v;
    left_.insert(left_.end(), uu.data(), uu.data() + rows_);
    right_.insert(right_.end(), vv.data(), vv.data() + cols_);
    coeffs_.push_back(c);
    if (dense_) dense_->noalias() += c * uu * vv.transpose();
  }

  void clear() {
    left_.clear();
    right_.clear();
    coeffs_.clear();
    if (dense_) dense_->setZero();
  }

  /// Entry from the factors, O(rank).
  double factor_entry(Index i, Index j) const {
    KahanSum s;
    for (Index k = 0; k < rank(); ++k)
      s += coeffs_[static_cast<std::size_t>(k)] * left_[static_cast<std::size_t>(k * rows_ + i)] *
           right_[static_cast<std::size_t>(k * cols_ + j)];
    return s.value();
  }

  double entry(Index i, Index j) const { return dense_ ? (*dense_)(i, j) : factor_entry(i, j); }

  /// Dense matrix assembled from the factors.
  Matrix to_dense() const {
    if (rank() == 0) return Matrix::Zero(rows_, cols_);
    Eigen::Map<const Vector> c(coeffs_.data(), rank());
    return left() * c.asDiagonal() * right().transpose();
  }

  /// Values at the mask entries, from the cache if present.
  std::vector<double> sample(const ObservationMask& mask) const {
    check_mask(mask);
    if (dense_) return project_onto_mask(mask, *dense_);
    return sample_from_factors(mask);
  }

  /// Values at the mask entries recomputed from the factors, O(|Omega| rank).
  std::vector<double> sample_from_factors(const ObservationMask& mask) const {
    check_mask(mask);
    std::vector<double> out(mask.size(), 0.0);
    // Row-scaled copy of the left factor makes the inner loop a dot product.
    const Index r = rank();
    if (r == 0) return out;
    Matrix lc = left() * Eigen::Map<const Vector>(coeffs_.data(), r).asDiagonal();
    Matrix lct = lc.transpose();
    Matrix rt = right().transpose();
    for (std::size_t e = 0; e < mask.size(); ++e) out[e] = lct.col(mask.row(e)).dot(rt.col(mask.col(e)));
    return out;
  }

  void enable_dense_cache() {
    if (!dense_) dense_ = to_dense();
  }

  /// Drops pieces with |c_i| < 1e-14 max|c|. With a dense cache present and
  /// rank above twice min(m, n), re-factors the cache by SVD so that the
  /// stored rank stays bounded by min(m, n).
  void recompress() {
    if (coeffs_.empty()) return;
    double cmax = 0.0;
    for (double c : coeffs_) cmax = std::max(cmax, std::abs(c));
    const double cut = 1e-14 * cmax;
    if (std::any_of(coeffs_.begin(), coeffs_.end(), [&](double c) { return std::abs(c) < cut; })) {
      std::vector<double> l, r, c;
      for (std::size_t k = 0; k < coeffs_.size(); ++k) {
        if (std::abs(coeffs_[k]) < cut) continue;
        l.insert(l.end(), left_.begin() + static_cast<std::ptrdiff_t>(k * rows_), left_.begin() + static_cast<std::ptrdiff_t>((k + 1) * rows_));
        r.insert(r.end(), right_.begin() + static_cast<std::ptrdiff_t>(k * cols_), right_.begin() + static_cast<std::ptrdiff_t>((k + 1) * cols_));
        c.push_back(coeffs_[k]);
      }
      left_ = std::move(l);
      right_ = std::move(r);
      coeffs_ = std::move(c);
    }
    if (dense_ && rank() > 2 * std::min(rows_, cols_)) refactor_from_dense();
  }

 private:
  void check_mask(const ObservationMask& mask) const {
    if (mask.rows() != rows_ || mask.cols() != cols_)
      throw std::invalid_argument("LowRankIterate: mask dimensions do not match");
  }

  void refactor_from_dense() {
    Svd svd = dense_svd(*dense_);
    left_.clear();
    right_.clear();
    coeffs_.clear();
    const double cut = 1e-14 * (svd.sigma.size() ? svd.sigma(0) : 0.0);
    for (Index k = 0; k < svd.sigma.size(); ++k) {
      if (!(svd.sigma(k) > cut)) break;
      left_.insert(left_.end(), svd.U.col(k).data(), svd.U.col(k).data() + rows_);
      right_.insert(right_.end(), svd.V.col(k).data(), svd.V.col(k).data() + cols_);
      coeffs_.push_back(svd.sigma(k));
    }
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> left_;   // m x r, column-major
  std::vector<double> right_;  // n x r, column-major
  std::vector<double> coeffs_;
  std::optional<Matrix> dense_;
};

/// Exact nuclear norm. Reduces the factors to an r x r core through thin QR
/// when the rank is below min(m, n); otherwise takes the SVD of the dense form.
inline double nuclear_norm(const LowRankIterate& l) {
  const Index r = l.rank();
  if (r == 0) return 0.0;
  if (r >= std::min(l.rows(), l.cols())) {
    const Matrix dense = l.has_dense_cache() ? l.dense_cache() : l.to_dense();
    return dense_svd(dense).sigma.sum();
  }
  Eigen::HouseholderQR<Matrix> qu{Matrix(l.left())};
  Eigen::HouseholderQR<Matrix> qv{Matrix(l.right())};
  const Matrix ru = qu.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix rv = qv.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Matrix core = ru * Eigen::Map<const Vector>(l.coeffs().data(), r).asDiagonal() * rv.transpose();
  return dense_svd(core).sigma.sum();
}

inline double nuclear_norm(const Matrix& a) { return dense_svd(a).sigma.sum(); }

/// Sparse term, stored as values aligned with the mask (zeros allowed but
/// counted out of nnz). Support is inside Omega by construction.
struct SparseIterate {
  std::vector<double> values;

  static SparseIterate zeros(const ObservationMask& mask) { return {std::vector<double>(mask.size(), 0.0)}; }
  std::size_t nnz() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double x) { return x != 0.0; }));
  }
  double l1() const { return l1_norm(values); }
};

/// R = P_Omega[L + S - M], aligned with the mask.
struct Residual {
  std::vector<double> values;
};

/// (L, S, t_L, t_S) for the epigraph form of the penalized problem.
struct EpigraphIterate {
  LowRankIterate low_rank;
  SparseIterate sparse;
  double t_L = 0.0;
  double t_S = 0.0;
};

/// values[e] += gamma * scale * u_i v_j for each mask entry e = (i, j).
/// The caller applies any (1 - gamma) contraction of the prior term.
inline void residual_apply_rank_one(std::span<double> values, const ObservationMask& mask, double gamma, double scale,
                                    const Vector& u, const Vector& v) {
  if (values.size() != mask.size() || u.size() != mask.rows() || v.size() != mask.cols())
    throw std::invalid_argument("residual_apply_rank_one: dimension mismatch");
  if (std::abs(u.norm() - 1.0) > 1e-8 || std::abs(v.norm() - 1.0) > 1e-8)
    throw std::invalid_argument("residual_apply_rank_one: factors must be unit vectors");
  const double w = gamma * scale;
  if (w == 0.0) return;
  const auto r = mask.row_indices();
  const auto c = mask.col_indices();
  for (std::size_t e = 0; e < values.size(); ++e) values[e] += w * u(r[e]) * v(c[e]);
}

inline void residual_apply_rank_one(Residual& residual, const ObservationMask& mask, double gamma, double scale,
                                    const Vector& u, const Vector& v) {
  residual_apply_rank_one(std::span<double>(residual.values), mask, gamma, scale, u, v);
}

/// values[entry] += delta, the one-sparse counterpart.
inline void residual_apply_sparse(std::span<double> values, std::size_t entry, double delta) {
  if (entry >= values.size()) throw std::out_of_range("residual_apply_sparse: entry outside mask");
  values[entry] += delta;
}

/// R = L_Omega + S - M computed elementwise.
inline void assemble_residual(std::span<const double> low_rank_on_mask, std::span<const double> sparse,
                              std::span<const double> observed, std::span<double> out) {
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = low_rank_on_mask[e] + sparse[e] - observed[e];
}

}  // namespace cpcp
