#include "corv/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "corv/errors.hpp"
#include "corv/parallel.hpp"

namespace corv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double bin_mass(const TargetDensity& target, double a, double b) {
  auto f = [&](double x) { return target.pdf(x); };
  if (std::isinf(b)) {
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate(f, a, b, 1e-10);
  }
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(f, a, b, 1e-10);
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

HistogramReport histogram_vs_density(std::span<const double> samples, const TargetDensity& target,
                                     std::size_t n_bins) {
  if (samples.empty()) throw ConfigError("histogram: empty trace");
  if (n_bins < 10) throw ConfigError("histogram: n_bins must be >= 10");
  if (!target.has_pdf())
    throw ConfigError("histogram: target '" + target.name() + "' has no normalised pdf");
  const Interval& dom = target.domain();
  if (!dom.has_finite_lower() && !dom.has_finite_upper())
    throw ConfigError("histogram: target domain must have a finite boundary");

  double lo = dom.lower;
  double hi = dom.upper;
  if (!dom.has_finite_upper()) hi = target.quantile(0.999);
  if (!dom.has_finite_lower()) lo = target.quantile(0.001);

  HistogramReport r;
  r.n_samples = samples.size();
  r.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i <= n_bins; ++i) r.bin_edges[i] = lo + width * static_cast<double>(i);
  r.bin_edges.back() = hi;

  r.counts.assign(n_bins, 0);
  for (double x : samples) {
    std::size_t bin = 0;
    if (x >= hi) {
      bin = n_bins - 1;
    } else if (x > lo) {
      bin = static_cast<std::size_t>(
          std::upper_bound(r.bin_edges.begin(), r.bin_edges.end(), x) - r.bin_edges.begin() - 1);
      bin = std::min(bin, n_bins - 1);
    }
    ++r.counts[bin];
  }

  r.exact_mass.resize(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    const double a = (i == 0 && !dom.has_finite_lower()) ? -kInf : r.bin_edges[i];
    const double b = (i + 1 == n_bins && !dom.has_finite_upper()) ? kInf : r.bin_edges[i + 1];
    if (std::isinf(a)) {
      // Reflect the lower tail onto a half-line integral.
      auto f = [&](double u) { return target.pdf(-u); };
      boost::math::quadrature::exp_sinh<double> integrator;
      r.exact_mass[i] = integrator.integrate(f, -b, kInf, 1e-10);
    } else {
      r.exact_mass[i] = bin_mass(target, a, b);
    }
  }

  double tv = 0.0;
  for (std::size_t i = 0; i < n_bins; ++i) tv += std::abs(r.empirical_mass(i) - r.exact_mass[i]);
  r.tv_distance = 0.5 * tv;

  auto edge_error = [&](std::size_t first, std::size_t second) {
    return std::abs(r.empirical_mass(first) + r.empirical_mass(second) - r.exact_mass[first] -
                    r.exact_mass[second]);
  };
  r.boundary_mass_error = 0.0;
  if (dom.has_finite_lower()) r.boundary_mass_error += edge_error(0, 1);
  if (dom.has_finite_upper()) r.boundary_mass_error += edge_error(n_bins - 1, n_bins - 2);
  return r;
}

HistogramReport histogram_vs_density(const SampleTrace& trace, const TargetDensity& target,
                                     std::size_t n_bins) {
  return histogram_vs_density(std::span<const double>(trace.thetas), target, n_bins);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_statistic: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw NumericalError("fit_loglog_slope: length mismatch");
  if (xs.size() < 3) throw NumericalError("fit_loglog_slope: need at least 3 points");
  const std::size_t n = xs.size();
  std::vector<double> lx(n);
  std::vector<double> ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw NumericalError("fit_loglog_slope: values must be finite and positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw NumericalError("fit_loglog_slope: x values are all equal");
  return sxy / sxx;
}

std::vector<double> WeakErrorReport::stepsizes() const {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.stepsize);
  return out;
}

std::vector<double> WeakErrorReport::errors() const {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.error);
  return out;
}

WeakErrorReport weak_error_experiment(const SamplerSpec& spec, const GradientOracle& oracle,
                                      const WeakErrorOptions& options) {
  const TargetDensity& target = oracle.target();
  std::vector<std::string> issues;
  if (options.stepsizes.empty()) issues.push_back("weak_error.stepsizes: empty");
  for (std::size_t i = 0; i < options.stepsizes.size(); ++i) {
    if (!(options.stepsizes[i] > 0.0))
      issues.push_back("weak_error.stepsizes: values must be positive");
    if (i > 0 && !(options.stepsizes[i] < options.stepsizes[i - 1]))
      issues.push_back("weak_error.stepsizes: must be strictly decreasing");
  }
  if (!(options.horizon > 0.0)) issues.push_back("weak_error.horizon: must be positive");
  if (options.n_replicates < 2) issues.push_back("weak_error.n_replicates: must be >= 2");
  std::optional<double> truth = options.truth;
  if (!truth && options.h.name == "identity") truth = target.exact_mean();
  if (!truth) issues.push_back("weak_error.truth: no exact expectation available for h");
  if (!issues.empty()) throw ConfigError(issues);

  WeakErrorReport report;
  report.method = spec.label();
  report.test_function = options.h.name;
  report.truth = *truth;
  report.horizon = options.horizon;
  report.n_replicates = options.n_replicates;

  for (std::size_t i = 0; i < options.stepsizes.size(); ++i) {
    SamplerSpec s = spec;
    s.stepsize = options.stepsizes[i];
    s.validate(target);
    const auto n_steps =
        static_cast<std::uint64_t>(std::ceil(options.horizon / s.stepsize - 1e-9));

    struct Outcome {
      double value;
      double seconds;
    };
    auto outcomes = parallel_map(options.n_replicates, options.threads, [&](std::size_t r) {
      const auto start = std::chrono::steady_clock::now();
      ChainState st = initial_state(s, target, derive_seed(options.seed, i, r));
      double value = kNaN;
      try {
        for (std::uint64_t k = 0; k < n_steps; ++k) st = advance(std::move(st), s, oracle);
        value = options.h.fn(st.theta);
      } catch (const NumericalError&) {
        value = kNaN;
      }
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      return Outcome{value, dt.count()};
    });

    WeakErrorPoint p;
    p.stepsize = s.stepsize;
    p.n_steps = n_steps;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n_ok = 0;
    for (const auto& o : outcomes) {
      p.values.push_back(o.value);
      p.wall_seconds.push_back(o.seconds);
      if (std::isfinite(o.value)) {
        sum += o.value;
        ++n_ok;
      } else {
        ++p.n_diverged;
      }
    }
    if (n_ok == 0) {
      p.estimate = kNaN;
      p.error = kInf;
      p.std_error = kInf;
    } else {
      p.estimate = sum / static_cast<double>(n_ok);
      for (const auto& o : outcomes)
        if (std::isfinite(o.value)) sum_sq += (o.value - p.estimate) * (o.value - p.estimate);
      const double var = n_ok > 1 ? sum_sq / static_cast<double>(n_ok - 1) : kInf;
      p.std_error = std::sqrt(var / static_cast<double>(n_ok));
      p.error = std::abs(p.estimate - report.truth);
    }
    report.points.push_back(std::move(p));
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& p : report.points) {
    if (std::isfinite(p.error) && p.error > 0.0 && p.std_error < 0.5 * p.error) {
      xs.push_back(p.stepsize);
      ys.push_back(p.error);
    }
  }
  report.slope_points = xs.size();
  report.fitted_slope = xs.size() >= 3 ? fit_loglog_slope(xs, ys) : kNaN;
  return report;
}

std::vector<InstabilityRow> instability_probe(const GradientOracle& oracle, const Transform& t,
                                              double stepsize, std::span<const int> ks,
                                              std::size_t n_trials, std::uint64_t seed) {
  if (n_trials == 0) throw ConfigError("instability_probe: n_trials must be positive");
  std::vector<InstabilityRow> rows;
  for (std::size_t idx = 0; idx < ks.size(); ++idx) {
    InstabilityRow row;
    row.k = ks[idx];
    row.theta = std::pow(10.0, -ks[idx]);
    const double phi0 = t.inverse(row.theta);
    const TransformPoint p = t.evaluate(phi0);
    row.ito_gprime = 1.0 / p.deriv1;
    row.corv_abs_drift =
        stepsize * std::abs(p.deriv1 * oracle.target().grad_potential(p.value) - p.log_deriv_ratio);

    std::vector<double> ito(n_trials);
    std::vector<double> corv(n_trials);
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(idx), trial);
      ChainState start{.phi = phi0,
                       .theta = p.value,
                       .step = 0,
                       .stepsize = stepsize,
                       .boundary_events = 0,
                       .rng = ChainRng(s)};
      try {
        ito[trial] = std::abs(step_ito(start, oracle, t).phi - phi0);
      } catch (const DivergenceError&) {
        ito[trial] = kInf;
      }
      corv[trial] = std::abs(step_corv(start, oracle, t).phi - phi0);
    }
    row.ito_median_abs_dphi = median(std::move(ito));
    row.corv_median_abs_dphi = median(std::move(corv));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace corv
