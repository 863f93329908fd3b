#include "corv/transform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "corv/errors.hpp"
#include "corv/special_functions.hpp"

namespace corv {
namespace {

constexpr double kClamp = 700.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp_phi(double phi) { return std::clamp(phi, -kClamp, kClamp); }
// softplus and icll grow linearly, only the lower tail needs guarding
double clamp_below(double phi) { return std::max(phi, -kClamp); }

// sigma(p) together with e = exp(-|p|), without overflow at either tail.
struct Logistic {
  double e;
  double s;       // sigma(p)
  double s_comp;  // 1 - sigma(p)
};

Logistic logistic(double p) {
  const double e = std::exp(-std::abs(p));
  const double inv = 1.0 / (1.0 + e);
  if (p >= 0.0) return {e, inv, e * inv};
  return {e, e * inv, inv};
}

TransformPoint point_identity(double phi) { return {phi, 1.0, 0.0}; }

TransformPoint point_sigmoid(double phi) {
  const double p = clamp_phi(phi);
  const Logistic l = logistic(p);
  const double d1 = l.e / ((1.0 + l.e) * (1.0 + l.e));
  return {l.s, d1, -std::tanh(0.5 * p)};
}

TransformPoint point_arctan(double phi) {
  const double a = std::abs(phi);
  // atan(phi)/pi + 1/2 written without cancellation in the lower tail.
  const double value = phi < -1.0 ? std::atan(-1.0 / phi) / std::numbers::pi
                                  : std::atan(phi) / std::numbers::pi + 0.5;
  const double d1 = a > 1e150 ? 0.0 : 1.0 / (std::numbers::pi * (1.0 + phi * phi));
  const double ratio = a > 1.0 ? -2.0 / (phi + 1.0 / phi) : -2.0 * phi / (1.0 + phi * phi);
  return {value, d1, ratio};
}

TransformPoint point_softsign(double phi) {
  const double a1 = 1.0 + std::abs(phi);
  const double value = phi < 0.0 ? 0.5 / a1 : 1.0 - 0.5 / a1;
  const double sgn = phi > 0.0 ? 1.0 : (phi < 0.0 ? -1.0 : 0.0);
  return {value, 0.5 / (a1 * a1), -2.0 * sgn / a1};
}

TransformPoint point_exp(double phi) {
  const double v = std::exp(clamp_phi(phi));
  return {v, v, 1.0};
}

TransformPoint point_softplus(double phi) {
  const double p = clamp_below(phi);
  const Logistic l = logistic(p);
  return {std::max(p, 0.0) + std::log1p(l.e), l.s, l.s_comp};
}

TransformPoint point_icll(double phi) {
  const double p = clamp_below(phi);
  const double u = std::exp(p);
  // phi - Ei(-e^phi) + gamma == Ein(e^phi)
  const double value =
      u <= 1.0 ? exponential_integral_ein(u) : p + kEulerGamma + exponential_integral_e1(u);
  return {value, -std::expm1(-u), u > 700.0 ? 0.0 : u / std::expm1(u)};
}

TransformPoint base_point(TransformKind kind, double phi) {
  switch (kind) {
    case TransformKind::identity: return point_identity(phi);
    case TransformKind::sigmoid: return point_sigmoid(phi);
    case TransformKind::arctan: return point_arctan(phi);
    case TransformKind::softsign: return point_softsign(phi);
    case TransformKind::exp: return point_exp(phi);
    case TransformKind::softplus: return point_softplus(phi);
    case TransformKind::icll: return point_icll(phi);
  }
  return {0.0, 0.0, 0.0};
}

template <TransformPoint (*Point)(double)>
void batch_loop(const double* phi, double* value, double* d1, double* ratio, std::size_t n,
                double offset, double scale) {
  if (scale == 1.0 && offset == 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const TransformPoint p = Point(phi[i]);
      value[i] = p.value;
      d1[i] = p.deriv1;
      ratio[i] = p.log_deriv_ratio;
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const TransformPoint p = Point(phi[i]);
    value[i] = offset + scale * p.value;
    d1[i] = p.deriv1 * scale;
    ratio[i] = p.log_deriv_ratio;
  }
}

double base_deriv2(TransformKind kind, double phi) {
  switch (kind) {
    case TransformKind::identity:
      return 0.0;
    case TransformKind::sigmoid: {
      const double p = clamp_phi(phi);
      const double e = std::exp(-std::abs(p));
      const double d = (1.0 + e);
      // sigma(1 - sigma)(1 - 2 sigma), sign follows -p
      const double mag = e * (1.0 - e) / (d * d * d);
      return p >= 0.0 ? -mag : mag;
    }
    case TransformKind::arctan: {
      if (std::abs(phi) > 1e100) return 0.0;
      const double q = 1.0 + phi * phi;
      return -2.0 * phi / (std::numbers::pi * q * q);
    }
    case TransformKind::softsign: {
      const double a1 = 1.0 + std::abs(phi);
      const double sgn = phi > 0.0 ? 1.0 : (phi < 0.0 ? -1.0 : 0.0);
      return -sgn / (a1 * a1 * a1);
    }
    case TransformKind::exp:
      return std::exp(clamp_phi(phi));
    case TransformKind::softplus: {
      const double e = std::exp(-std::abs(clamp_below(phi)));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case TransformKind::icll: {
      const double p = clamp_below(phi);
      return std::exp(p - std::exp(p));
    }
  }
  return 0.0;
}

double icll_inverse(double theta) {
  if (theta == 0.0) return -kInf;
  if (std::isinf(theta)) return kInf;
  // f is increasing and convex, so after the first Newton step the iterates
  // approach the root monotonically from the right.
  double phi = std::max(theta - kEulerGamma, std::log(theta) + theta);
  for (int it = 0; it < 200; ++it) {
    const TransformPoint p = base_point(TransformKind::icll, phi);
    const double step = (p.value - theta) / p.deriv1;
    phi -= step;
    if (!std::isfinite(phi)) break;
    if (std::abs(step) <= 4e-16 * (1.0 + std::abs(phi))) break;
  }
  return phi;
}

double base_inverse(TransformKind kind, double theta) {
  switch (kind) {
    case TransformKind::identity:
      return theta;
    case TransformKind::sigmoid:
      return std::log(theta) - std::log1p(-theta);
    case TransformKind::arctan:
      if (theta == 0.0) return -kInf;
      if (theta == 1.0) return kInf;
      return theta < 0.5 ? -1.0 / std::tan(std::numbers::pi * theta)
                         : 1.0 / std::tan(std::numbers::pi * (1.0 - theta));
    case TransformKind::softsign:
      return theta < 0.5 ? 1.0 - 0.5 / theta : 0.5 / (1.0 - theta) - 1.0;
    case TransformKind::exp:
      return std::log(theta);
    case TransformKind::softplus:
      return theta + std::log(-std::expm1(-theta));
    case TransformKind::icll:
      return icll_inverse(theta);
  }
  return 0.0;
}

bool unit_codomain(TransformKind k) {
  return k == TransformKind::sigmoid || k == TransformKind::arctan ||
         k == TransformKind::softsign;
}

}  // namespace

const std::vector<std::string>& Transform::catalog_names() {
  static const std::vector<std::string> names = {"identity", "sigmoid",  "arctan", "softsign",
                                                 "exp",      "softplus", "icll"};
  return names;
}

Transform Transform::make(std::string_view name) {
  if (name == "identity") return {TransformKind::identity, "identity", Interval::real_line(), 1.0};
  if (name == "sigmoid") return {TransformKind::sigmoid, "sigmoid", Interval::unit(), 0.25};
  if (name == "arctan")
    return {TransformKind::arctan, "arctan", Interval::unit(), 1.0 / std::numbers::pi};
  if (name == "softsign") return {TransformKind::softsign, "softsign", Interval::unit(), 0.5};
  if (name == "exp") return {TransformKind::exp, "exp", Interval::positive(), kInf};
  if (name == "softplus") return {TransformKind::softplus, "softplus", Interval::positive(), 1.0};
  if (name == "icll") return {TransformKind::icll, "icll", Interval::positive(), 1.0};
  throw ConfigError("unknown transform '" + std::string(name) + "'");
}

Transform Transform::fitted_to(const Interval& domain) const {
  if (domain == codomain_) return *this;
  if (!domain.valid()) throw ConfigError("invalid target domain " + to_string(domain));
  Transform out = *this;
  if (unit_codomain(kind_) && domain.bounded()) {
    // Compose with the current affine map: base -> codomain -> domain.
    const double s = domain.width() / codomain_.width();
    out.scale_ = scale_ * s;
    out.offset_ = domain.lower + (offset_ - codomain_.lower) * s;
    out.lipschitz_ = lipschitz_ * s;
    out.codomain_ = domain;
    return out;
  }
  if (!unit_codomain(kind_) && kind_ != TransformKind::identity && domain.has_finite_lower() &&
      !domain.has_finite_upper()) {
    out.offset_ = offset_ + (domain.lower - codomain_.lower);
    out.codomain_ = domain;
    return out;
  }
  throw ConfigError("transform '" + name_ + "' with codomain " + to_string(codomain_) +
                    " cannot be fitted to domain " + to_string(domain));
}

TransformPoint Transform::evaluate(double phi) const {
  TransformPoint p = base_point(kind_, phi);
  if (scale_ != 1.0 || offset_ != 0.0) {
    p.value = offset_ + scale_ * p.value;
    p.deriv1 *= scale_;
  }
  return p;
}

void Transform::evaluate_batch(const double* phi, double* value, double* deriv1, double* ratio,
                               std::size_t n) const {
  switch (kind_) {
    case TransformKind::identity:
      return batch_loop<point_identity>(phi, value, deriv1, ratio, n, offset_, scale_);
    case TransformKind::sigmoid:
      return batch_loop<point_sigmoid>(phi, value, deriv1, ratio, n, offset_, scale_);
    case TransformKind::arctan:
      return batch_loop<point_arctan>(phi, value, deriv1, ratio, n, offset_, scale_);
    case TransformKind::softsign:
      return batch_loop<point_softsign>(phi, value, deriv1, ratio, n, offset_, scale_);
    case TransformKind::exp:
      return batch_loop<point_exp>(phi, value, deriv1, ratio, n, offset_, scale_);
    case TransformKind::softplus:
      return batch_loop<point_softplus>(phi, value, deriv1, ratio, n, offset_, scale_);
    case TransformKind::icll:
      return batch_loop<point_icll>(phi, value, deriv1, ratio, n, offset_, scale_);
  }
}

double Transform::deriv2(double phi) const { return scale_ * base_deriv2(kind_, phi); }

double Transform::inverse(double theta) const {
  if (!codomain_.contains_closed(theta))
    throw DomainError("inverse of '" + name_ + "' evaluated outside " + to_string(codomain_));
  const double base = (scale_ != 1.0 || offset_ != 0.0) ? (theta - offset_) / scale_ : theta;
  return base_inverse(kind_, base);
}

Assumption2Report check_assumption2(const Transform& t, const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("assumption check grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw ConfigError("assumption check grid must be sorted");
  if (!(grid.front() >= -50.0 && grid.back() <= 50.0))
    throw ConfigError("assumption check grid must lie within [-50, 50]");

  std::vector<double> d(grid.size());
  std::transform(grid.begin(), grid.end(), d.begin(), [&](double x) { return t.deriv1(x); });

  Assumption2Report r;
  const auto max_it = std::max_element(d.begin(), d.end());
  r.max_deriv = *max_it;
  r.argmax_phi = grid[static_cast<std::size_t>(max_it - d.begin())];
  r.min_deriv = *std::min_element(d.begin(), d.end());
  const double L = t.lipschitz_bound();
  r.bound_holds = std::isfinite(L) && std::all_of(d.begin(), d.end(), [L](double v) {
                    return v >= 0.0 && v <= L * (1.0 + 1e-12);
                  });
  r.strictly_increasing = std::all_of(d.begin(), d.end(), [](double v) { return v > 0.0; });
  r.deriv_at_lower_end = d.front();
  r.deriv_at_upper_end = d.back();

  const std::size_t tail = std::max<std::size_t>(2, grid.size() / 10);
  const std::size_t n = d.size();
  if (n >= 2) {
    bool lower_mono = true;
    bool upper_mono = true;
    for (std::size_t i = 0; i + 1 < std::min(tail, n); ++i) lower_mono &= d[i] <= d[i + 1];
    for (std::size_t i = n - std::min(tail, n); i + 1 < n; ++i) upper_mono &= d[i] >= d[i + 1];
    r.lower_end_vanishing = lower_mono && d.front() <= 1e-3 * r.max_deriv;
    r.upper_end_vanishing = upper_mono && d.back() <= 1e-3 * r.max_deriv;
  }
  return r;
}

}  // namespace corv
