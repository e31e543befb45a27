#ifndef BCAE_RNG_HPP
#define BCAE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace bcae {

// Independent random streams are derived from one user seed by mixing in a
// purpose tag and an index (SplitMix64 finalizer). Every stochastic consumer
// gets its own stream, so e.g. changing the SER trial count never perturbs
// training.
enum class Stream : std::uint64_t {
  Init = 1,
  Training = 2,
  Ser = 3,
  Sweep = 4,
  Restart = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(purpose))) + index);
}

// mt19937_64 has a standard-mandated output sequence; the distributions below
// are written out by hand because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream purpose, std::uint64_t index = 0)
      : engine_(derive_seed(seed, purpose, index)) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform integer in [0, 2^k).
  std::uint64_t uniform_pow2(unsigned k) { return k == 0 ? 0 : engine_() >> (64 - k); }

  // Uniform in the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  // Standard normal, Marsaglia's polar form of Box–Muller. The second
  // variate of each accepted pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bcae

#endif  // BCAE_RNG_HPP
