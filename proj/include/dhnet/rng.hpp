// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace dhnet {

/// Counter-based splitmix64 generator.  The entire state is one u64, which
/// makes checkpointing trivial and lets us derive independent streams from a
/// root seed without coupling the consumers to a draw order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n).  n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller.  No caching: two u64 draws per sample,
  /// so the stream position stays a pure function of the sample count.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Derive a decorrelated child stream.  Used so that e.g. every tensor
  /// initialization gets its own stream keyed by a stable ordinal.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    Rng mixer(seed ^ (0x632be59bd9b4e019ull * (stream_id + 1)));
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace dhnet
