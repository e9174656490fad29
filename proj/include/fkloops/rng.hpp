#pragma once
// Counter-based random numbers: every draw is a pure function of
// (seed, stream, counter), so replicas get independent streams and
// results do not depend on scheduling.

#include <cmath>
#include <cstdint>
#include <limits>

namespace fkl {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed) ^ (0xd1b54a32d192ed03ULL * (stream + 1)))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ ^ mix64(ctr_++)); }

  // uniform in [0,1) with 53 random bits
  double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller; the spare value is kept
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t below(std::uint64_t n) { return (*this)() % n; }

  std::uint64_t counter() const { return ctr_; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fkl
