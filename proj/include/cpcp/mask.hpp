#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpcp/types.hpp"

namespace cpcp {

/// Set of observed entries Omega of an m x n matrix, stored as a row-major
/// sorted coordinate list. Every mask-supported quantity in the library
/// (observations, sparse iterate, residual) is a value array aligned with
/// these coordinates.
class ObservationMask {
 public:
  ObservationMask() = default;

  /// Builds a mask from arbitrary-order index pairs. Rejects out-of-range
  /// and duplicate pairs, and the empty set.
  ObservationMask(Index rows, Index cols, std::vector<std::pair<Index, Index>> entries)
      : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("ObservationMask: dimensions must be positive");
    if (entries.empty()) throw std::invalid_argument("ObservationMask: empty observation set");
    for (auto [i, j] : entries) {
      if (i < 0 || i >= rows || j < 0 || j >= cols)
        throw std::out_of_range("ObservationMask: index (" + std::to_string(i) + "," + std::to_string(j) +
                                ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    std::sort(entries.begin(), entries.end());
    if (std::adjacent_find(entries.begin(), entries.end()) != entries.end())
      throw std::invalid_argument("ObservationMask: duplicate index pair");
    row_.reserve(entries.size());
    col_.reserve(entries.size());
    for (auto [i, j] : entries) {
      row_.push_back(static_cast<std::int32_t>(i));
      col_.push_back(static_cast<std::int32_t>(j));
    }
  }

  /// Builds a mask from flat row-major linear indices that are already
  /// strictly increasing (as produced by the samplers).
  static ObservationMask from_sorted_linear(Index rows, Index cols, const std::vector<std::int64_t>& linear) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("ObservationMask: dimensions must be positive");
    if (linear.empty()) throw std::invalid_argument("ObservationMask: empty observation set");
    ObservationMask mask;
    mask.rows_ = rows;
    mask.cols_ = cols;
    mask.row_.reserve(linear.size());
    mask.col_.reserve(linear.size());
    std::int64_t prev = -1;
    for (std::int64_t t : linear) {
      if (t <= prev || t >= static_cast<std::int64_t>(rows) * cols)
        throw std::invalid_argument("ObservationMask: linear indices must be strictly increasing and in range");
      prev = t;
      mask.row_.push_back(static_cast<std::int32_t>(t / cols));
      mask.col_.push_back(static_cast<std::int32_t>(t % cols));
    }
    return mask;
  }

  static ObservationMask full(Index rows, Index cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("ObservationMask: dimensions must be positive");
    ObservationMask mask;
    mask.rows_ = rows;
    mask.cols_ = cols;
    mask.row_.resize(static_cast<std::size_t>(rows * cols));
    mask.col_.resize(static_cast<std::size_t>(rows * cols));
    std::size_t e = 0;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j, ++e) {
        mask.row_[e] = static_cast<std::int32_t>(i);
        mask.col_[e] = static_cast<std::int32_t>(j);
      }
    return mask;
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t size() const { return row_.size(); }
  double rho() const { return static_cast<double>(size()) / (static_cast<double>(rows_) * static_cast<double>(cols_)); }
  bool is_full() const { return static_cast<Index>(size()) == rows_ * cols_; }

  Index row(std::size_t e) const { return row_[e]; }
  Index col(std::size_t e) const { return col_[e]; }
  std::span<const std::int32_t> row_indices() const { return row_; }
  std::span<const std::int32_t> col_indices() const { return col_; }

  /// Position of (i, j) in the coordinate list, or size() if unobserved.
  std::size_t find(Index i, Index j) const {
    const auto key = std::pair<std::int32_t, std::int32_t>(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
    std::size_t lo = 0, hi = size();
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (std::pair(row_[mid], col_[mid]) < key)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < size() && row_[lo] == key.first && col_[lo] == key.second) return lo;
    return size();
  }

  bool contains(Index i, Index j) const { return find(i, j) != size(); }

  friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<std::int32_t> row_;
  std::vector<std::int32_t> col_;
};

/// P_Omega: samples a dense matrix on the mask. Off-mask entries are zero by
/// construction since they are not stored.
inline std::vector<double> project_onto_mask(const ObservationMask& mask, const Matrix& dense) {
  if (dense.rows() != mask.rows() || dense.cols() != mask.cols())
    throw std::invalid_argument("project_onto_mask: matrix is " + std::to_string(dense.rows()) + "x" +
                                std::to_string(dense.cols()) + ", mask is " + std::to_string(mask.rows()) + "x" +
                                std::to_string(mask.cols()));
  std::vector<double> out(mask.size());
  for (std::size_t e = 0; e < mask.size(); ++e) out[e] = dense(mask.row(e), mask.col(e));
  return out;
}

/// Inverse of project_onto_mask: scatters mask-aligned values into a dense
/// matrix that is zero off the mask.
inline Matrix scatter_to_dense(const ObservationMask& mask, std::span<const double> values) {
  if (values.size() != mask.size()) throw std::invalid_argument("scatter_to_dense: value count does not match mask");
  Matrix out = Matrix::Zero(mask.rows(), mask.cols());
  for (std::size_t e = 0; e < mask.size(); ++e) out(mask.row(e), mask.col(e)) = values[e];
  return out;
}

}  // namespace cpcp
