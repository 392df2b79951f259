#pragma once

namespace derc {

// ln Gamma(z) for z > 0. Lanczos approximation (g = 7, 9 coefficients),
// reflection below 0.5. Throws std::domain_error for z <= 0 or non-finite z.
double lgamma_pos(double z);

// d/dz ln Gamma(z) for z > 0. Recurrence lifts the argument to >= 6, then an
// asymptotic Bernoulli series. Same domain contract as lgamma_pos.
double digamma_pos(double z);

}  // namespace derc
