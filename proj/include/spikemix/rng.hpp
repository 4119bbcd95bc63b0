#pragma once

#include <cstdint>
#include <random>

namespace spikemix {

// mt19937_64 with hand-rolled value conversions. The standard distributions
// are implementation-defined, so rolling our own keeps streams bit-identical
// across standard libraries and therefore keeps runs reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  int64_t below(int64_t n) {
    if (n <= 1) return 0;
    uint64_t span = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<int64_t>(x % span);
  }

  bool coin() { return (next_u64() & 1u) != 0; }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spikemix
