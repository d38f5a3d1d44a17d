// exp() constants shared by the scalar reference and the SIMD variants.
// Both evaluate the same Cody-Waite reduction and degree-12 polynomial in the
// same operation order, which keeps the backends bit-identical.

#pragma once

namespace airsplat::kernels::expdet {

constexpr double kInvLn2 = 1.4426950408889634073599246810019;
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kC[13] = {
    1.0,
    1.0,
    1.0 / 2,
    1.0 / 6,
    1.0 / 24,
    1.0 / 120,
    1.0 / 720,
    1.0 / 5040,
    1.0 / 40320,
    1.0 / 362880,
    1.0 / 3628800,
    1.0 / 39916800,
    1.0 / 479001600,
};

}  // namespace airsplat::kernels::expdet
