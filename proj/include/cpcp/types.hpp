#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include <Eigen/Dense>

namespace cpcp {

using Index = std::ptrdiff_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Neumaier-compensated accumulator. Reductions over the observation set go
/// through this so that descent checks can be asserted at tight tolerances.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  KahanSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  KahanSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s.value();
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double l1_norm(std::span<const double> a) {
  KahanSum s;
  for (double x : a) s += std::abs(x);
  return s.value();
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace cpcp
