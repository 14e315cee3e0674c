#ifndef TES_RNG_HPP
#define TES_RNG_HPP

// Reproducible per-trace random streams. Raw 64-bit output comes from
// std::mt19937_64 (bit-exact across platforms by standard); every
// variate conversion is done explicitly here because the distribution
// adapters in <random> are implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>

namespace tes {

inline std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27; z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

class TraceRng {
public:
  explicit TraceRng(std::uint64_t seed) : gen_(seed) {}

  // independent stream per trace index; identical regardless of generation order
  static TraceRng for_trace(std::uint64_t batch_seed, std::uint64_t index) {
    return TraceRng(splitmix64(batch_seed + (index + 1) * 0x9E3779B97F4A7C15ull));
  }

  std::uint64_t raw() { return gen_(); }

  // (0, 1]: safe for log
  double uniform() {
    return ((raw() >> 11) + 1) * 0x1.0p-53;
  }

  // [0, 1)
  double uniform_half_open() {
    return (raw() >> 11) * 0x1.0p-53;
  }

  // Box-Muller pair, one value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform_half_open();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559005768 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // exponential with mean tau
  double expo(double tau) {
    return -tau * std::log(uniform());
  }

  // Knuth product method conditioned on result <= cap (whole draw repeated)
  int poisson_capped(double mean, int cap) {
    const double limit = std::exp(-mean);
    for (;;) {
      int k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform();
      } while (p > limit);
      if (k - 1 <= cap) return k - 1;
    }
  }

private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0;
};

} // namespace tes

#endif
