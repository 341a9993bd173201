#ifndef SBIOS_RNG_HPP
#define SBIOS_RNG_HPP

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace sbios {

// Counter-based generator keyed by (seed, chain, iteration, block).
// Each sampler phase opens its own stream, so region-parallel execution
// produces the same draws regardless of scheduling order.
namespace rngdetail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace rngdetail

class KeyedRng {
 public:
  KeyedRng(uint64_t seed, uint64_t chain, uint64_t iteration, uint64_t block) {
    using rngdetail::splitmix64;
    key_ = splitmix64(seed);
    key_ = splitmix64(key_ ^ (0xd2b74407b1ce6e93ULL * (chain + 1)));
    key_ = splitmix64(key_ ^ (0xca5a826395121157ULL * (iteration + 1)));
    key_ = splitmix64(key_ ^ (0x9e6c63d0a4e0f8c7ULL * (block + 1)));
  }

  uint64_t next_u64() {
    return rngdetail::splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
  }

  // uniform on (0, 1); never returns 0 so log() is safe
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normals(Eigen::Index k) {
    Eigen::VectorXd z(k);
    for (Eigen::Index i = 0; i < k; ++i) z[i] = normal();
    return z;
  }

  // Marsaglia–Tsang; shape may be < 1
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  // IG(shape, rate): 1/X with X ~ Gamma(shape, 1/rate)
  double inverse_gamma(double shape, double rate) {
    return 1.0 / gamma(shape, 1.0 / rate);
  }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// Block ids per iteration; keeps streams disjoint across sampler phases.
namespace rngblock {
constexpr uint64_t kInit = 1;
constexpr uint64_t kSubsample = 2;
constexpr uint64_t kGamma = 3;
constexpr uint64_t kDelta = 4;
constexpr uint64_t kVariances = 5;
constexpr uint64_t kBetaBase = 1000;    // + region index
constexpr uint64_t kEtaBase = 100000;   // + batch index
constexpr uint64_t kImputeBase = 200000;  // + batch index
}  // namespace rngblock

}  // namespace sbios

#endif
