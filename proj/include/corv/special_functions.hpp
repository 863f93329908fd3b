#pragma once

namespace corv {

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

/// Exponential integral Ei(x) = -E1(-x) on the negative axis.
/// Accurate to ~1e-14 relative for x in [-700, -1e-300]; below -745 the
/// result underflows to -0. Throws DomainError for x >= 0 or NaN.
double exponential_integral_ei(double x);

/// E1(u) = int_u^inf e^-t / t dt for u > 0.
double exponential_integral_e1(double u);

/// Entire exponential integral Ein(u) = int_0^u (1 - e^-t) / t dt
/// = sum_{k>=1} (-1)^{k+1} u^k / (k k!). Defined for u >= 0.
double exponential_integral_ein(double u);

}  // namespace corv
