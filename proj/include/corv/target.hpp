#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "corv/interval.hpp"
#include "corv/random.hpp"
#include "corv/transform.hpp"

namespace corv {

using ParameterMap = std::map<std::string, double>;

enum class TargetKind { beta, gamma, truncated_normal, translated_beta, custom };

/// A density on an interval, exposed through its unnormalised potential
/// U(theta) = -log pi(theta) + const and the potential gradient.
/// Immutable; copies are cheap and safe to share across threads.
class TargetDensity {
 public:
  /// Catalog constructor. Parameters:
  ///   beta            alpha, beta           on (0, 1)
  ///   gamma           shape, scale          on (0, inf)
  ///   truncated_normal lower, upper         standard normal restricted to (lower, upper),
  ///                                         defaults (-1, 1)
  ///   translated_beta alpha, beta           on (-1, 1)
  /// Throws ConfigError for unknown names, unknown keys, missing or invalid values.
  static TargetDensity make(std::string_view name, const ParameterMap& params = {});

  /// User-supplied potential and gradient (no normalised pdf, no mean).
  static TargetDensity custom(std::string name, Interval domain,
                              std::function<double(double)> potential,
                              std::function<double(double)> grad_potential);

  TargetKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  const Interval& domain() const noexcept { return domain_; }
  const ParameterMap& params() const noexcept { return params_; }

  double potential(double theta) const;
  /// Closed-form U'(theta). Evaluated as-is near the boundaries; the IEEE
  /// result (possibly huge or infinite) is returned rather than clamped.
  double grad_potential(double theta) const;

  bool has_pdf() const noexcept { return kind_ != TargetKind::custom; }
  /// Normalised density; 0 outside the domain. Throws ConfigError for custom targets.
  double pdf(double theta) const;
  /// Closed-form quantile, used to bound histograms of half-line targets.
  double quantile(double p) const;
  std::optional<double> exact_mean() const noexcept { return exact_mean_; }
  /// Whether the density has a finite limit at every finite boundary.
  bool boundary_density_finite() const noexcept { return boundary_density_finite_; }

 private:
  TargetDensity() = default;

  TargetKind kind_ = TargetKind::custom;
  std::string name_;
  Interval domain_;
  ParameterMap params_;
  double a_ = 0.0;  // alpha / shape / lower
  double b_ = 0.0;  // beta / scale / upper
  double log_norm_ = 0.0;
  std::optional<double> exact_mean_;
  bool boundary_density_finite_ = false;
  std::function<double(double)> custom_potential_;
  std::function<double(double)> custom_grad_;
};

/// Potential of the proxy variable under theta = f(phi):
/// U(phi) = U_theta(f(phi)) - log f'(phi).
double proxy_potential(const TargetDensity& target, const Transform& t, double phi);

/// U'(phi) = f'(phi) U'_theta(f(phi)) - f''(phi)/f'(phi).
/// Throws NumericalError naming phi and the intermediates when the result is not finite.
double proxy_potential_gradient(const TargetDensity& target, const Transform& t, double phi);

enum class OracleMode { exact, additive_noise, minibatch };

/// Gradient source for the scalar samplers: the exact target gradient plus,
/// in additive-noise mode, delta ~ Normal(0, noise_std^2).
///
/// The oracle holds no random state; noise is drawn from the stream passed
/// in, which is the owning chain's stream.
class GradientOracle {
 public:
  explicit GradientOracle(TargetDensity target, OracleMode mode = OracleMode::exact,
                          double noise_std = 0.0);

  const TargetDensity& target() const noexcept { return target_; }
  OracleMode mode() const noexcept { return mode_; }
  double noise_std() const noexcept { return noise_std_; }

  /// One draw of delta (0 without touching the stream in exact mode or when
  /// noise_std is 0).
  double noise(ChainRng& rng) const;

  /// U'_theta(theta) + delta.
  double target_gradient(double theta, ChainRng& rng) const;

  /// f'(phi) (U'_theta(f(phi)) + delta) - f''(phi)/f'(phi); the proxy noise is
  /// f'(phi) * delta.
  double proxy_gradient(double phi, const Transform& t, ChainRng& rng) const;

 private:
  TargetDensity target_;
  OracleMode mode_;
  double noise_std_;
};

/// Free-function form: target space when `t` is empty, proxy space otherwise.
double stochastic_gradient(const GradientOracle& oracle, double x,
                           const std::optional<Transform>& t, ChainRng& rng);

}  // namespace corv
