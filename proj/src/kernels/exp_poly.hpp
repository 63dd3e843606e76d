// SPDX-License-Identifier: Apache-2.0
#pragma once

// Constants for the vectorized exp and log used by the SIMD kernels.
//
// exp(x) = 2^n * exp(r), n = round(x / ln2), r = x - n*ln2 split into a high
// and low part so the reduction is exact to ~1e-20. exp(r) on |r| <= ln2/2 is
// the degree-13 Taylor polynomial (truncation error < 5e-18 relative).
// Inputs are clamped to [kExpMin, kExpMax]; anything below kExpMin returns 0.

namespace sla::kernels::detail {

inline constexpr double kLog2e = 1.4426950408889634074;
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kExpMax = 709.0;
inline constexpr double kExpMin = -708.0;

// 1/j! for j = 13 down to 0, Horner order.
inline constexpr double kExpCoeffs[14] = {
    1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
    1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
    1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        0.5,
    1.0,                1.0,
};

// log(x) for normal x > 0: x = 2^e * f with f in [sqrt(1/2), sqrt(2)),
// log f = 2 atanh(z), z = (f - 1) / (f + 1), |z| <= 0.1716. The odd series
// 2 z sum z^(2j) / (2j + 1) to j = 11 has truncation error < 1e-18.
inline constexpr double kSqrt2 = 1.41421356237309504880;

// 2 / (2j + 1) for j = 11 down to 0, Horner order in z^2.
inline constexpr double kLogCoeffs[12] = {
    2.0 / 23.0, 2.0 / 21.0, 2.0 / 19.0, 2.0 / 17.0, 2.0 / 15.0, 2.0 / 13.0,
    2.0 / 11.0, 2.0 / 9.0,  2.0 / 7.0,  2.0 / 5.0,  2.0 / 3.0,  2.0,
};

}  // namespace sla::kernels::detail
