#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace stackrl {

// Small self-contained generator (splitmix64 core) so that sampled values
// are pinned by this code alone, independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Index sampled according to `probs` (assumed to sum to ~1).
  int categorical(std::span<const double> probs) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Standard normal via Box-Muller (polar form avoided to keep the
  // consumption of the stream fixed at two draws per call).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derived stream for worker/trajectory `index`; mixing both words keeps
  // streams decorrelated for adjacent indices.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    Rng mixer(seed ^ (0x2545f4914f6cdd1dULL * (index + 1)));
    mixer.next_u64();
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace stackrl
