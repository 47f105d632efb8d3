#include "arflow/rng.hpp"

#include <cmath>

namespace arflow {

void gaussian_pair(RngState& rng, double& g0, double& g1) {
    // Box-Muller. u0 is mapped into (0, 1] so the log stays finite without
    // a rejection loop; every call consumes exactly two counter steps.
    const double u0 =
        static_cast<double>((rng.next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u1 = rng.next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u0));
    const double theta = 6.283185307179586476925286766559 * u1;
    g0 = r * std::cos(theta);
    g1 = r * std::sin(theta);
}

} // namespace arflow
