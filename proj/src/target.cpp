#include "corv/target.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "corv/errors.hpp"

namespace corv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

struct ParamReader {
  std::string target;
  const ParameterMap& params;
  std::vector<std::string> issues;
  std::set<std::string> used;

  double get(const std::string& key, std::optional<double> fallback = std::nullopt) {
    used.insert(key);
    auto it = params.find(key);
    if (it == params.end()) {
      if (fallback) return *fallback;
      issues.push_back(target + "." + key + ": missing parameter");
      return std::numeric_limits<double>::quiet_NaN();
    }
    return it->second;
  }
  void positive(const std::string& key, double v) {
    if (!(v > 0.0) || !std::isfinite(v))
      issues.push_back(target + "." + key + ": must be a finite positive number");
  }
  void finish() {
    for (const auto& [k, v] : params)
      if (!used.count(k)) issues.push_back(target + "." + k + ": unknown parameter");
    if (!issues.empty()) throw ConfigError(issues);
  }
};

}  // namespace

TargetDensity TargetDensity::make(std::string_view name, const ParameterMap& params) {
  TargetDensity t;
  t.name_ = std::string(name);
  t.params_ = params;
  ParamReader r{t.name_, params, {}, {}};

  if (name == "beta" || name == "translated_beta") {
    const bool translated = name == "translated_beta";
    t.kind_ = translated ? TargetKind::translated_beta : TargetKind::beta;
    t.a_ = r.get("alpha");
    t.b_ = r.get("beta");
    r.positive("alpha", t.a_);
    r.positive("beta", t.b_);
    r.finish();
    t.domain_ = translated ? Interval{-1.0, 1.0} : Interval::unit();
    // (1+x)^(a-1) (1-x)^(b-1) on (-1, 1) integrates to 2^(a+b-1) B(a, b)
    t.log_norm_ = log_beta_fn(t.a_, t.b_) + (translated ? (t.a_ + t.b_ - 1.0) * std::log(2.0) : 0.0);
    const double m = t.a_ / (t.a_ + t.b_);
    t.exact_mean_ = translated ? (t.a_ - t.b_) / (t.a_ + t.b_) : m;
    t.boundary_density_finite_ = std::min(t.a_, t.b_) >= 1.0;
  } else if (name == "gamma") {
    t.kind_ = TargetKind::gamma;
    t.a_ = r.get("shape");
    t.b_ = r.get("scale");
    r.positive("shape", t.a_);
    r.positive("scale", t.b_);
    r.finish();
    t.domain_ = Interval::positive();
    t.log_norm_ = std::lgamma(t.a_) + t.a_ * std::log(t.b_);
    t.exact_mean_ = t.a_ * t.b_;
    t.boundary_density_finite_ = t.a_ >= 1.0;
  } else if (name == "truncated_normal") {
    t.kind_ = TargetKind::truncated_normal;
    t.a_ = r.get("lower", -1.0);
    t.b_ = r.get("upper", 1.0);
    if (!(t.a_ < t.b_)) r.issues.push_back(t.name_ + ": lower must be < upper");
    if (!std::isfinite(t.a_) || !std::isfinite(t.b_))
      r.issues.push_back(t.name_ + ": bounds must be finite");
    r.finish();
    t.domain_ = Interval{t.a_, t.b_};
    const double z = std_normal_cdf(t.b_) - std_normal_cdf(t.a_);
    t.log_norm_ = std::log(z) + 0.5 * std::log(2.0 * std::numbers::pi);
    t.exact_mean_ = (std_normal_pdf(t.a_) - std_normal_pdf(t.b_)) / z;
    t.boundary_density_finite_ = true;
  } else {
    throw ConfigError("target.name: unknown target '" + t.name_ + "'");
  }
  return t;
}

TargetDensity TargetDensity::custom(std::string name, Interval domain,
                                    std::function<double(double)> potential,
                                    std::function<double(double)> grad_potential) {
  if (!domain.valid()) throw ConfigError("custom target: invalid domain");
  TargetDensity t;
  t.kind_ = TargetKind::custom;
  t.name_ = std::move(name);
  t.domain_ = domain;
  t.custom_potential_ = std::move(potential);
  t.custom_grad_ = std::move(grad_potential);
  return t;
}

double TargetDensity::potential(double x) const {
  if (!domain_.contains_open(x)) return kInf;
  switch (kind_) {
    case TargetKind::beta:
      return -(a_ - 1.0) * std::log(x) - (b_ - 1.0) * std::log1p(-x);
    case TargetKind::translated_beta:
      return -(a_ - 1.0) * std::log1p(x) - (b_ - 1.0) * std::log1p(-x);
    case TargetKind::gamma:
      return -(a_ - 1.0) * std::log(x) + x / b_;
    case TargetKind::truncated_normal:
      return 0.5 * x * x;
    case TargetKind::custom:
      return custom_potential_(x);
  }
  return kInf;
}

double TargetDensity::grad_potential(double x) const {
  switch (kind_) {
    case TargetKind::beta:
      return -(a_ - 1.0) / x + (b_ - 1.0) / (1.0 - x);
    case TargetKind::translated_beta:
      return -(a_ - 1.0) / (x + 1.0) + (b_ - 1.0) / (1.0 - x);
    case TargetKind::gamma:
      return -(a_ - 1.0) / x + 1.0 / b_;
    case TargetKind::truncated_normal:
      return x;
    case TargetKind::custom:
      return custom_grad_(x);
  }
  return 0.0;
}

double TargetDensity::pdf(double x) const {
  if (kind_ == TargetKind::custom) throw ConfigError("custom target '" + name_ + "' has no pdf");
  if (!domain_.contains_open(x)) return 0.0;
  return std::exp(-potential(x) - log_norm_);
}

double TargetDensity::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile probability outside [0, 1]");
  switch (kind_) {
    case TargetKind::beta:
      return boost::math::ibeta_inv(a_, b_, p);
    case TargetKind::translated_beta:
      return 2.0 * boost::math::ibeta_inv(a_, b_, p) - 1.0;
    case TargetKind::gamma:
      return b_ * boost::math::gamma_p_inv(a_, p);
    case TargetKind::truncated_normal: {
      const double lo = std_normal_cdf(a_);
      const double hi = std_normal_cdf(b_);
      const double u = lo + p * (hi - lo);
      return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    }
    case TargetKind::custom:
      break;
  }
  throw ConfigError("custom target '" + name_ + "' has no quantile");
}

double proxy_potential(const TargetDensity& target, const Transform& t, double phi) {
  const TransformPoint p = t.evaluate(phi);
  return target.potential(p.value) - std::log(p.deriv1);
}

double proxy_potential_gradient(const TargetDensity& target, const Transform& t, double phi) {
  const TransformPoint p = t.evaluate(phi);
  const double g = target.grad_potential(p.value);
  const double out = p.deriv1 * g - p.log_deriv_ratio;
  if (!std::isfinite(out)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite proxy gradient at phi=" << phi << " (theta=" << p.value
        << ", f'=" << p.deriv1 << ", f''/f'=" << p.log_deriv_ratio << ", U'_theta=" << g << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

GradientOracle::GradientOracle(TargetDensity target, OracleMode mode, double noise_std)
    : target_(std::move(target)), mode_(mode), noise_std_(noise_std) {
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
    throw ConfigError("oracle.noise_std: must be a finite non-negative number");
  if (mode == OracleMode::minibatch)
    throw ConfigError("oracle.mode: minibatch gradients are only available for matrix factorisation");
}

double GradientOracle::noise(ChainRng& rng) const {
  switch (mode_) {
    case OracleMode::exact:
      return 0.0;
    case OracleMode::additive_noise:
      return noise_std_ == 0.0 ? 0.0 : noise_std_ * rng.normal();
    case OracleMode::minibatch:
      break;
  }
  throw ConfigError("oracle.mode: minibatch gradients are only available for matrix factorisation");
}

double GradientOracle::target_gradient(double theta, ChainRng& rng) const {
  const double delta = noise(rng);
  return target_.grad_potential(theta) + delta;
}

double GradientOracle::proxy_gradient(double phi, const Transform& t, ChainRng& rng) const {
  const TransformPoint p = t.evaluate(phi);
  const double delta = noise(rng);
  return p.deriv1 * (target_.grad_potential(p.value) + delta) - p.log_deriv_ratio;
}

double stochastic_gradient(const GradientOracle& oracle, double x,
                           const std::optional<Transform>& t, ChainRng& rng) {
  return t ? oracle.proxy_gradient(x, *t, rng) : oracle.target_gradient(x, rng);
}

}  // namespace corv
