#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace osplit {

// Deterministic random stream: a fixed algorithm identified by `algorithm()`,
// fully reproducible from a 64-bit seed on any platform.  Uniform doubles are
// built from raw mt19937_64 output (std::uniform_real_distribution is not
// portable across standard libraries); normals use the Box-Muller transform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  static constexpr std::string_view algorithm() { return "mt19937_64/box-muller/v1"; }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on (0, 1]: 53 random bits, never zero so log() is safe.
  double uniform01() {
    return static_cast<double>((gen_() >> 11) + 1) * 0x1p-53;
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    double u = static_cast<double>(gen_() >> 11) * 0x1p-53;
    return lo + (hi - lo) * u;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  // Standard normal via Box-Muller; pairs are generated together and the
  // second value is cached so consecutive calls consume one pair per two.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Gamma(alpha, 1) via Marsaglia-Tsang squeeze, with the Ahrens-Dieter boost
  // for alpha < 1.  Deterministic given the stream state.
  double gamma(double alpha);

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace osplit
