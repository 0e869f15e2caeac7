#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cpcp {

struct TraceRecord {
  std::size_t k = 0;
  double objective = 0.0;
  std::optional<double> dual_gap;
  std::optional<double> step_a;
  std::optional<double> step_b;
  std::size_t rank = 0;
  std::size_t nnz = 0;
  std::int64_t wall_nanos = 0;
  std::optional<double> U_L;
  std::optional<double> U_S;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// Per-iteration log. Record k describes iterate x^k: its objective, its
/// gap (when computed), and the step taken from it. wall_nanos is the time
/// elapsed since the solve started.
class SolverTrace {
 public:
  void push(const TraceRecord& r) {
    if (records_.empty() ? r.k != 0 : r.k <= records_.back().k)
      throw std::logic_error("SolverTrace: iteration indices must increase strictly from 0");
    records_.push_back(r);
  }
  const std::vector<TraceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const TraceRecord& back() const { return records_.back(); }
  const TraceRecord& operator[](std::size_t i) const { return records_[i]; }
  TraceRecord& operator[](std::size_t i) { return records_[i]; }

  friend bool operator==(const SolverTrace&, const SolverTrace&) = default;

 private:
  std::vector<TraceRecord> records_;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  std::int64_t nanos() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace cpcp
