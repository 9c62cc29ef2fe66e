#pragma once

#include <cmath>

// Transcendentals with a fixed evaluation order so results are reproducible
// across platforms and libm versions. sqrt is correctly rounded by IEEE-754
// and needs no replacement; exp/log are not, so we evaluate them ourselves.

namespace feddah {

namespace detail {
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kInvLn2 = 1.44269504088896338700e+00;
}  // namespace detail

// exp(x) via argument reduction x = k*ln2 + r and a fixed-degree Taylor
// polynomial in r, |r| <= ln2/2. Relative error ~1e-16.
inline double det_exp(double x) {
    if (x != x) return x;
    if (x > 709.782712893384) return HUGE_VAL;
    if (x < -745.133219101941) return 0.0;
    double kd = std::floor(x * detail::kInvLn2 + 0.5);
    int k = static_cast<int>(kd);
    double r = (x - kd * detail::kLn2Hi) - kd * detail::kLn2Lo;
    // Horner evaluation of sum_{n=0..13} r^n / n!
    double p = 1.0 / 6227020800.0;  // 1/13!
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    return std::ldexp(p, k);
}

// ln(x) via frexp normalization to m in [sqrt(1/2), sqrt(2)) and the atanh
// series ln(m) = 2*atanh((m-1)/(m+1)). Relative error ~1e-16.
inline double det_log(double x) {
    if (x != x) return x;
    if (x < 0.0) return NAN;
    if (x == 0.0) return -HUGE_VAL;
    if (x == HUGE_VAL) return x;
    int e = 0;
    double m = std::frexp(x, &e);  // m in [0.5, 1)
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    double t = (m - 1.0) / (m + 1.0);
    double t2 = t * t;
    double p = 1.0 / 23.0;
    p = p * t2 + 1.0 / 21.0;
    p = p * t2 + 1.0 / 19.0;
    p = p * t2 + 1.0 / 17.0;
    p = p * t2 + 1.0 / 15.0;
    p = p * t2 + 1.0 / 13.0;
    p = p * t2 + 1.0 / 11.0;
    p = p * t2 + 1.0 / 9.0;
    p = p * t2 + 1.0 / 7.0;
    p = p * t2 + 1.0 / 5.0;
    p = p * t2 + 1.0 / 3.0;
    p = p * t2 + 1.0;
    double lnm = 2.0 * t * p;
    return e * detail::kLn2Hi + (lnm + e * detail::kLn2Lo);
}

inline double det_log2(double x) { return det_log(x) * detail::kInvLn2; }

// Numerically stable logistic; finite for all finite inputs.
inline double det_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + det_exp(-x));
    }
    double e = det_exp(x);
    return e / (1.0 + e);
}

}  // namespace feddah
