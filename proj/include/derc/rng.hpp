#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "derc/errors.hpp"

namespace derc {

// Counter-based pseudo-random stream. Output i is a pure function of
// (seed, i), so a stream replays bit-identically on any platform and child
// streams can be split off without coordination. The mixer is splitmix64
// applied to a Weyl sequence keyed by the seed.
//
// Standard-library distributions are deliberately avoided: their output is
// unspecified across implementations, which would break the byte-identical
// reproducibility contract.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "splitmix64-weyl";

  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draw_count() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * ++counter_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) throw UsageError("RngStream::index: n must be positive");
    return next_u64() % n;
  }

  // Standard normal via Box-Muller. One deviate per call (no carry), two
  // uniform draws consumed.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang squeeze; shapes below one are lifted
  // with the standard boost Gamma(a) = Gamma(a+1) * U^{1/a}.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw UsageError("RngStream::gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform_open();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
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
      const double u = uniform_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      out[k] = gamma(alpha[k]);
      total += out[k];
    }
    for (double& v : out) v /= total;
    return out;
  }

  // Draw an index from a categorical distribution given by probs.
  std::size_t categorical(const std::vector<double>& probs) {
    const double u = uniform();
    double cum = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      cum += probs[k];
      if (u < cum) return k;
    }
    return probs.size() - 1;  // rounding slack
  }

  // Independent child stream; decorrelated from the parent and from other ids.
  RngStream derive(std::uint64_t stream_id) const {
    std::uint64_t z = seed_ ^ (0xD1B54A32D192ED03ULL * (stream_id + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return RngStream(z ^ (z >> 31));
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace derc
