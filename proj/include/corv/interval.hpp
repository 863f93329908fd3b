#pragma once

#include <cmath>
#include <limits>
#include <string>

namespace corv {

/// Open interval (lower, upper) on the extended real line.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  static Interval real_line() { return {}; }
  static Interval positive() { return {0.0, std::numeric_limits<double>::infinity()}; }
  static Interval unit() { return {0.0, 1.0}; }

  bool valid() const { return lower < upper && !std::isnan(lower) && !std::isnan(upper); }
  bool has_finite_lower() const { return std::isfinite(lower); }
  bool has_finite_upper() const { return std::isfinite(upper); }
  bool bounded() const { return has_finite_lower() && has_finite_upper(); }
  bool unconstrained() const { return !has_finite_lower() && !has_finite_upper(); }

  bool contains_open(double x) const { return x > lower && x < upper; }
  bool contains_closed(double x) const { return x >= lower && x <= upper; }
  double width() const { return upper - lower; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

inline std::string to_string(const Interval& i) {
  auto side = [](double v) {
    if (std::isinf(v)) return std::string(v < 0 ? "-inf" : "inf");
    std::string s = std::to_string(v);
    return s;
  };
  return "(" + side(i.lower) + ", " + side(i.upper) + ")";
}

}  // namespace corv
