// Reproducible random numbers. std::mt19937_64 is fully specified by the
// standard, but the std distributions are not, so the uniform and Gaussian
// transforms are spelled out here; identical seeds give identical streams on
// every platform. Independent substreams for different purposes (core draw,
// factor n draw, noise, mask, ...) are derived by mixing the seed with a
// stream tag through splitmix64.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sntd {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // substream for an independent purpose; same (seed, tag) -> same stream
  static Rng substream(std::uint64_t seed, std::uint64_t tag) {
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(tag)));
  }

  std::uint64_t bits() { return engine_(); }

  // uniform on [0, 1) with 53-bit resolution
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // standard normal via Box-Muller; the pair is cached
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n), n >= 1; rejection keeps it unbiased
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sntd
