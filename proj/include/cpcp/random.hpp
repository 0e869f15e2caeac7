#pragma once

#include <cmath>
#include <cstdint>

#include "cpcp/types.hpp"

namespace cpcp {

/// SplitMix64: 64-bit state advanced by the golden-ratio increment, output
/// passed through the standard finalizer. Small, portable and reproducible
/// across languages, which is all the generators here need.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)); }

  /// Independent substream: the seed and stream id are mixed through one
  /// SplitMix step so that neighbouring ids give unrelated states.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t stream_id) {
    SplitMix64 mixer(seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1)));
    return SplitMix64(mixer.next());
  }

 private:
  std::uint64_t state_;
};

/// Standard normal draws by the polar Box-Muller method. Each accepted pair
/// yields two variates; the second is cached.
class GaussianSource {
 public:
  explicit GaussianSource(SplitMix64 rng) : rng_(rng) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * rng_.uniform() - 1.0;
      v = 2.0 * rng_.uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  Matrix matrix(Index rows, Index cols) {
    Matrix out(rows, cols);
    // Row-major fill so the stream order matches the mask order.
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) out(i, j) = next();
    return out;
  }

  Vector vector(Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out(i) = next();
    return out;
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cpcp
