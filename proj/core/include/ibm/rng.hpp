#pragma once

#include <cstdint>
#include <random>

namespace ibm {

/// SplitMix64 finalizer. Used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Splitting rule for replica fan-out: replica r of base seed s draws from
/// an independent stream seeded with s ^ splitmix64(r + 1).
inline std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica) {
  return seed ^ splitmix64(replica + 1);
}

/// Deterministic uniform-(0,1) stream. One stream per simulation replica;
/// (seed, replica) fully determines every draw.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  static RngStream for_replica(std::uint64_t seed, std::uint64_t replica) {
    return RngStream(replica_seed(seed, replica));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on the 2^53 grid midpoints of (0,1); never returns 0 or 1.
  double uniform01() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1p-53;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace ibm
