#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace prw {

// splitmix64, used to derive independent stream seeds from (seed, salt...) tuples.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ b); }
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b) ^ c);
}

// Deterministic RNG wrapper. All sampling helpers are hand-rolled so results
// are identical across standard library implementations (std::shuffle and the
// distribution classes are not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Unbiased draw from [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double real01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (one value per call; the pair's second
  // half is cached).
  double gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u <= 1e-300) u = real01();
    const double v = real01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace prw
