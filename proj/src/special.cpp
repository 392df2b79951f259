#include "derc/special.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace derc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ln(2*pi)/2

// Lanczos g = 7, 9-term coefficient set.
constexpr double kLanczos[9] = {
    0.99999999999980993,    676.5203681218851,     -1259.1392167224028,
    771.32342877765313,     -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,   9.9843695780195716e-6, 1.5056327351493116e-7};

void check_domain(double z, const char* fn) {
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw std::domain_error(std::string(fn) + ": argument must be a positive finite real, got " +
                            std::to_string(z));
  }
}

}  // namespace

double lgamma_pos(double z) {
  check_domain(z, "lgamma_pos");
  if (z < 0.5) {
    // Reflection: ln G(z) = ln(pi / sin(pi z)) - ln G(1 - z).
    return std::log(kPi / std::sin(kPi * z)) - lgamma_pos(1.0 - z);
  }
  const double x = z - 1.0;
  double acc = kLanczos[0];
  for (int i = 1; i < 9; ++i) acc += kLanczos[i] / (x + static_cast<double>(i));
  const double t = x + 7.5;  // g + 1/2
  return kHalfLog2Pi + (x + 0.5) * std::log(t) - t + std::log(acc);
}

double digamma_pos(double z) {
  check_domain(z, "digamma_pos");
  double shift = 0.0;
  while (z < 6.0) {
    shift -= 1.0 / z;
    z += 1.0;
  }
  const double inv = 1.0 / z;
  const double inv2 = inv * inv;
  // Bernoulli tail: 1/(12 z^2) - 1/(120 z^4) + ... - 691/(32760 z^12).
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return shift + std::log(z) - 0.5 * inv - tail;
}

}  // namespace derc
