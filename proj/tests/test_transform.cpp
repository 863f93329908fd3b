#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <doctest.h>

#include "corv/errors.hpp"
#include "corv/special_functions.hpp"
#include "corv/transform.hpp"

using namespace corv;

namespace {

std::vector<double> uniform_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
  return g;
}

const std::vector<std::string> kAll = {"identity", "sigmoid", "arctan", "softsign",
                                       "exp",      "softplus", "icll"};
const std::vector<std::string> kFlagged = {"sigmoid", "arctan", "softsign", "softplus", "icll"};

double central_diff(const auto& fn, double x, double h) { return (fn(x + h) - fn(x - h)) / (2 * h); }

}  // namespace

TEST_CASE("catalog values at the origin") {
  CHECK(Transform::make("sigmoid").eval(0.0) == 0.5);
  CHECK(Transform::make("softsign").eval(0.0) == 0.5);
  CHECK(Transform::make("arctan").eval(0.0) == 0.5);
  CHECK(Transform::make("softplus").eval(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(Transform::make("exp").eval(0.0) == 1.0);
  CHECK(Transform::make("identity").eval(0.0) == 0.0);
  CHECK(Transform::make("icll").deriv1(0.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
  // phi - Ei(-e^phi) + gamma at 0
  CHECK(Transform::make("icll").eval(0.0) ==
        doctest::Approx(-exponential_integral_ei(-1.0) + kEulerGamma).epsilon(1e-14));
}

TEST_CASE("icll derivative agrees with a finite difference of the defining formula") {
  auto f = [](double p) { return p - exponential_integral_ei(-std::exp(p)) + kEulerGamma; };
  const Transform t = Transform::make("icll");
  for (double p : {-3.0, -0.5, 0.0, 0.7, 2.0}) {
    CHECK(t.deriv1(p) == doctest::Approx(central_diff(f, p, 1e-6)).epsilon(1e-8));
    CHECK(t.eval(p) == doctest::Approx(f(p)).epsilon(1e-12));
  }
}

TEST_CASE("unknown names are configuration errors") {
  CHECK_THROWS_AS(Transform::make("tanh"), ConfigError);
  CHECK_THROWS_AS(Transform::make(""), ConfigError);
  CHECK(Transform::catalog_names().size() == kAll.size());
}

TEST_CASE("Lipschitz bounds and flags") {
  CHECK(Transform::make("sigmoid").lipschitz_bound() == 0.25);
  CHECK(Transform::make("softsign").lipschitz_bound() == 0.5);
  CHECK(std::isinf(Transform::make("exp").lipschitz_bound()));
  CHECK_FALSE(Transform::make("exp").satisfies_assumption2());
  for (const auto& n : kFlagged) CHECK(Transform::make(n).satisfies_assumption2());
  CHECK(Transform::make("identity").satisfies_assumption2());
  CHECK(Transform::make("identity").codomain().unconstrained());
}

TEST_CASE("first and second derivatives against central finite differences") {
  for (const auto& name : kAll) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    for (double p : uniform_grid(-7.95, 7.95, 160)) {
      CAPTURE(p);
      const double h = 1e-5 * std::max(1.0, std::abs(p));
      const double d1 = central_diff([&](double x) { return t.eval(x); }, p, h);
      CHECK(std::abs(t.deriv1(p) - d1) <= 1e-6 * std::abs(d1));
      const double d2 = central_diff([&](double x) { return t.deriv1(x); }, p, h);
      // f'' crosses zero at the inflection point; compare against the scale of f' there
      CHECK(std::abs(t.deriv2(p) - d2) <= 1e-6 * std::max(std::abs(d2), 1e-3 * std::abs(t.deriv1(p))));
    }
  }
}

TEST_CASE("strictly increasing with 0 < f' <= L on [-50, 50]") {
  for (const auto& name : kFlagged) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    double prev = -std::numeric_limits<double>::infinity();
    for (double p : uniform_grid(-50, 50, 2001)) {
      const double d = t.deriv1(p);
      CHECK(d > 0.0);
      CHECK(d <= t.lipschitz_bound());
      // eval may saturate in double near a finite boundary; it must never decrease
      CHECK(t.eval(p) >= prev);
      prev = t.eval(p);
    }
  }
}

TEST_CASE("log-derivative ratio is consistent with deriv2 / deriv1") {
  for (const auto& name : kAll) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    for (double p : uniform_grid(-50, 50, 1001)) {
      const double d1 = t.deriv1(p);
      if (d1 <= 1e-12) continue;
      const double q = t.deriv2(p) / d1;
      CHECK(std::abs(t.log_deriv_ratio(p) - q) <= 1e-8 * std::max(std::abs(q), 1e-300) + 1e-300);
    }
  }
}

TEST_CASE("log-derivative ratio is exact where f' underflows") {
  CHECK(Transform::make("sigmoid").log_deriv_ratio(-800.0) == doctest::Approx(1.0));
  CHECK(Transform::make("sigmoid").log_deriv_ratio(800.0) == doctest::Approx(-1.0));
  CHECK(Transform::make("softplus").log_deriv_ratio(-800.0) == doctest::Approx(1.0));
  CHECK(std::isfinite(Transform::make("icll").log_deriv_ratio(-800.0)));
  CHECK(Transform::make("icll").log_deriv_ratio(-30.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(Transform::make("softsign").log_deriv_ratio(-1e6) == doctest::Approx(2.0 / (1.0 + 1e6)));
}

TEST_CASE("round trip f(g(theta)) on the codomain interior") {
  for (const auto& name : kAll) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    const Interval c = t.codomain();
    std::vector<double> thetas;
    if (c.bounded()) {
      for (double x : uniform_grid(1e-6, 1 - 1e-6, 301)) thetas.push_back(c.lower + x * c.width());
    } else if (c.has_finite_lower()) {
      for (int k = -12; k <= 12; ++k) thetas.push_back(std::pow(10.0, k / 2.0));
    } else {
      for (double x : uniform_grid(-100, 100, 301)) thetas.push_back(x);
    }
    for (double th : thetas) {
      CAPTURE(th);
      CHECK(std::abs(t.eval(t.inverse(th)) - th) <= 1e-10 * std::max(std::abs(th), 1e-300));
    }
  }
}

TEST_CASE("round trip g(f(phi)) on [-30, 30]") {
  // Near a finite upper boundary theta = 1 - tiny carries only the absolute
  // precision of doubles around 1, so the achievable error there is
  // ulp(f(phi)) / f'(phi) on top of the relative tolerance.
  for (const auto& name : kAll) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    for (double p : uniform_grid(-30, 30, 601)) {
      CAPTURE(p);
      const double th = t.eval(p);
      const double conditioning =
          2.0 * std::abs(std::nextafter(th, INFINITY) - th) / t.deriv1(p);
      CHECK(std::abs(t.inverse(th) - p) <= 1e-8 * (1 + std::abs(p)) + conditioning);
      if (p <= 20.0) CHECK(std::abs(t.inverse(th) - p) <= 1e-8 * (1 + std::abs(p)));
    }
  }
}

TEST_CASE("inverse rejects values outside the codomain") {
  CHECK_THROWS_AS(Transform::make("sigmoid").inverse(1.5), DomainError);
  CHECK_THROWS_AS(Transform::make("softplus").inverse(-0.1), DomainError);
  CHECK(Transform::make("sigmoid").inverse(0.0) == -INFINITY);
}

TEST_CASE("derivative vanishes toward a finite boundary") {
  // lower tails of every flagged transform map to a finite boundary
  for (const auto& name : {"sigmoid", "softplus", "icll"}) {
    CAPTURE(name);
    CHECK(Transform::make(name).deriv1(-40.0) < 1e-6);
  }
  CHECK(Transform::make("sigmoid").deriv1(40.0) < 1e-6);
  // the rational transforms decay polynomially, like 1/phi^2
  for (const auto& name : {"arctan", "softsign"}) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    double prev = t.deriv1(-1.0);
    for (double p = -10.0; p >= -1e7; p *= 10.0) {
      CHECK(t.deriv1(p) < prev);
      CHECK(t.deriv1(-p) == doctest::Approx(t.deriv1(p)));
      prev = t.deriv1(p);
    }
    CHECK(t.deriv1(-1e4) < 1e-6);
    CHECK(t.deriv1(1e4) < 1e-6);
  }
}

TEST_CASE("check_assumption2 reports") {
  const auto grid = uniform_grid(-50, 50, 1001);
  const auto s = check_assumption2(Transform::make("sigmoid"), grid);
  CHECK(s.max_deriv == doctest::Approx(0.25));
  CHECK(s.argmax_phi == doctest::Approx(0.0));
  CHECK(s.bound_holds);
  CHECK(s.strictly_increasing);
  CHECK(s.lower_end_vanishing);
  CHECK(s.upper_end_vanishing);

  const auto e = check_assumption2(Transform::make("exp"), grid);
  CHECK_FALSE(e.bound_holds);

  const auto ss = check_assumption2(Transform::make("softsign"), grid);
  CHECK(ss.max_deriv == doctest::Approx(0.5));
  CHECK(ss.bound_holds);
  CHECK(ss.deriv_at_lower_end == doctest::Approx(1.0 / (2.0 * 51.0 * 51.0)));
  CHECK(ss.lower_end_vanishing);
  CHECK(ss.upper_end_vanishing);

  const auto sp = check_assumption2(Transform::make("softplus"), grid);
  CHECK(sp.bound_holds);
  CHECK(sp.lower_end_vanishing);
  CHECK_FALSE(sp.upper_end_vanishing);

  CHECK_THROWS_AS(check_assumption2(Transform::make("sigmoid"), {}), ConfigError);
  CHECK_THROWS_AS(check_assumption2(Transform::make("sigmoid"), {1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(check_assumption2(Transform::make("sigmoid"), {0.0, 60.0}), ConfigError);
}

TEST_CASE("fitting to a domain") {
  const Transform s = Transform::make("sigmoid").fitted_to({-1.0, 3.0});
  CHECK(s.codomain() == Interval{-1.0, 3.0});
  CHECK(s.eval(0.0) == doctest::Approx(1.0));
  CHECK(s.deriv1(0.0) == doctest::Approx(1.0));
  CHECK(s.lipschitz_bound() == doctest::Approx(1.0));
  CHECK(s.log_deriv_ratio(0.7) == doctest::Approx(Transform::make("sigmoid").log_deriv_ratio(0.7)));
  CHECK(s.inverse(s.eval(1.3)) == doctest::Approx(1.3));

  const Transform sp = Transform::make("softplus").fitted_to({2.0, INFINITY});
  CHECK(sp.eval(0.0) == doctest::Approx(2.0 + std::log(2.0)));
  CHECK(sp.deriv1(0.0) == doctest::Approx(0.5));

  CHECK_THROWS_AS(Transform::make("sigmoid").fitted_to(Interval::positive()), ConfigError);
  CHECK_THROWS_AS(Transform::make("exp").fitted_to(Interval::unit()), ConfigError);
}

TEST_CASE("batch evaluation is bitwise identical to scalar evaluation") {
  const auto grid = uniform_grid(-45, 45, 997);
  for (const auto& name : kAll) {
    for (const Transform& t : {Transform::make(name)}) {
      std::vector<double> v(grid.size()), d(grid.size()), r(grid.size());
      t.evaluate_batch(grid.data(), v.data(), d.data(), r.data(), grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const TransformPoint p = t.evaluate(grid[i]);
        CHECK(v[i] == p.value);
        CHECK(d[i] == p.deriv1);
        CHECK(r[i] == p.log_deriv_ratio);
      }
    }
  }
}

TEST_CASE("exponentials saturate instead of overflowing") {
  for (const auto& name : kAll) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    for (double p : {-1e4, -701.0, 701.0, 1e4}) {
      CHECK_FALSE(std::isnan(t.eval(p)));
      CHECK_FALSE(std::isnan(t.log_deriv_ratio(p)));
    }
  }
}
