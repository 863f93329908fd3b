#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "corv/interval.hpp"

namespace corv {

enum class TransformKind { identity, sigmoid, arctan, softsign, exp, softplus, icll };

/// Value, first derivative and f''/f' at one proxy point, from a single
/// evaluation of the shared subexpressions.
struct TransformPoint {
  double value;
  double deriv1;
  double log_deriv_ratio;
};

/// Monotonically increasing scalar bijection f from the real line onto an
/// open interval. Immutable value type.
///
/// Exponential-based members clamp the proxy argument to [-700, 700] before
/// exponentiating; beyond that range the returned values saturate.
class Transform {
 public:
  /// Accepted names: identity, sigmoid, arctan, softsign, exp, softplus, icll.
  /// Throws ConfigError for anything else.
  static Transform make(std::string_view name);
  static const std::vector<std::string>& catalog_names();

  /// Same transform mapped onto `domain`: an affine rescale for unit-interval
  /// transforms and a shift for half-line transforms. Throws ConfigError when
  /// the shapes of codomain and domain differ.
  Transform fitted_to(const Interval& domain) const;

  TransformKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  const Interval& codomain() const noexcept { return codomain_; }
  /// sup f'; +inf when f is not Lipschitz (exp).
  double lipschitz_bound() const noexcept { return lipschitz_; }
  /// Lipschitz and increasing with the boundary at proxy infinity.
  bool satisfies_assumption2() const noexcept { return kind_ != TransformKind::exp; }

  double eval(double phi) const { return evaluate(phi).value; }
  double deriv1(double phi) const { return evaluate(phi).deriv1; }
  double deriv2(double phi) const;
  /// f''(phi) / f'(phi) in closed form; finite where f' underflows.
  double log_deriv_ratio(double phi) const { return evaluate(phi).log_deriv_ratio; }
  /// g = f^-1. Throws DomainError for theta outside the closed codomain.
  double inverse(double theta) const;

  TransformPoint evaluate(double phi) const;

  /// evaluate() over n contiguous values with the kind dispatch hoisted out
  /// of the loop; bitwise identical to the scalar form.
  void evaluate_batch(const double* phi, double* value, double* deriv1, double* ratio,
                      std::size_t n) const;

  /// Elementwise evaluate() over an array; outputs are resized to match.
  template <typename Derived>
  void evaluate(const Eigen::ArrayBase<Derived>& phi,
                Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>& value,
                Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>& deriv1,
                Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic>& ratio) const {
    value.resize(phi.rows(), phi.cols());
    deriv1.resize(phi.rows(), phi.cols());
    ratio.resize(phi.rows(), phi.cols());
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      for (Eigen::Index i = 0; i < phi.rows(); ++i) {
        const TransformPoint p = evaluate(phi(i, j));
        value(i, j) = p.value;
        deriv1(i, j) = p.deriv1;
        ratio(i, j) = p.log_deriv_ratio;
      }
    }
  }

  friend bool operator==(const Transform& a, const Transform& b) {
    return a.kind_ == b.kind_ && a.offset_ == b.offset_ && a.scale_ == b.scale_;
  }

 private:
  Transform(TransformKind kind, std::string name, Interval codomain, double lipschitz)
      : kind_(kind), name_(std::move(name)), codomain_(codomain), lipschitz_(lipschitz) {}

  TransformKind kind_;
  std::string name_;
  Interval codomain_;
  double lipschitz_;
  // theta = offset_ + scale_ * base(phi)
  double offset_ = 0.0;
  double scale_ = 1.0;
};

/// Elementwise f(phi) for arrays.
template <typename Derived>
Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic> apply(const Transform& t,
                                                           const Eigen::ArrayBase<Derived>& phi) {
  return phi.unaryExpr([&t](double x) { return t.eval(x); });
}

/// Elementwise f^-1(theta) for arrays.
template <typename Derived>
Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic> apply_inverse(
    const Transform& t, const Eigen::ArrayBase<Derived>& theta) {
  return theta.unaryExpr([&t](double x) { return t.inverse(x); });
}

struct Assumption2Report {
  double max_deriv = 0.0;
  double argmax_phi = 0.0;
  double min_deriv = 0.0;
  /// 0 <= f' <= L at every grid point, with L finite.
  bool bound_holds = false;
  bool strictly_increasing = false;
  double deriv_at_lower_end = 0.0;
  double deriv_at_upper_end = 0.0;
  /// f' decays monotonically over the outer tenth of the grid and ends below
  /// 1e-3 of its maximum.
  bool lower_end_vanishing = false;
  bool upper_end_vanishing = false;
};

/// Evaluates the Lipschitz/monotonicity condition on a sorted grid inside
/// [-50, 50]. Throws ConfigError if the grid is empty, unsorted or out of range.
Assumption2Report check_assumption2(const Transform& t, const std::vector<double>& grid);

}  // namespace corv
