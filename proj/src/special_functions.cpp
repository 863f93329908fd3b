#include "corv/special_functions.hpp"

#include <cmath>
#include <limits>

#include "corv/errors.hpp"

namespace corv {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Power series for Ein, used for u <= 1 where every term is smaller than the
// previous one and the alternation costs no precision.
double ein_series(double u) {
  double term = u;  // u^k / k!
  double sum = u;
  for (int k = 2; k < 200; ++k) {
    term *= -u / k;
    const double add = term / k;
    sum += add;
    if (std::abs(add) <= kEps * std::abs(sum)) break;
  }
  return sum;
}

// Modified Lentz evaluation of the continued fraction
// E1(u) = e^-u / (u + 1 - 1 / (u + 3 - 4 / (u + 5 - ...))), valid for u > 1.
double e1_continued_fraction(double u) {
  if (u > 745.0) return 0.0;  // below the smallest subnormal
  constexpr double tiny = 1e-300;
  double b = u + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) <= kEps) break;
  }
  return h * std::exp(-u);
}

}  // namespace

double exponential_integral_ein(double u) {
  if (!(u >= 0.0)) throw DomainError("Ein(u) requires u >= 0");
  if (u == 0.0) return 0.0;
  if (u <= 1.0) return ein_series(u);
  if (std::isinf(u)) return u;
  return kEulerGamma + std::log(u) + e1_continued_fraction(u);
}

double exponential_integral_e1(double u) {
  if (!(u > 0.0)) throw DomainError("E1(u) requires u > 0");
  if (u <= 1.0) return -kEulerGamma - std::log(u) + ein_series(u);
  return e1_continued_fraction(u);
}

double exponential_integral_ei(double x) {
  if (!(x < 0.0)) throw DomainError("Ei(x) is only supported for x < 0");
  return -exponential_integral_e1(-x);
}

}  // namespace corv
