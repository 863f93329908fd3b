#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corv/sampler.hpp"
#include "corv/target.hpp"

namespace corv {

struct HistogramReport {
  std::vector<double> bin_edges;  // n_bins + 1
  std::vector<std::uint64_t> counts;
  /// Exact probability of each bin. For a half-line target the last bin
  /// carries the whole upper tail.
  std::vector<double> exact_mass;
  double tv_distance = 0.0;
  double boundary_mass_error = 0.0;
  std::uint64_t n_samples = 0;

  double empirical_mass(std::size_t bin) const {
    return static_cast<double>(counts[bin]) / static_cast<double>(n_samples);
  }
};

/// Histogram of `samples` against the target's normalised density.
/// Bounded domains are binned over the domain, half-lines over
/// [lower, quantile(0.999)]; samples beyond the range fall into the end bins.
/// Bin masses come from adaptive quadrature of the pdf.
HistogramReport histogram_vs_density(std::span<const double> samples, const TargetDensity& target,
                                     std::size_t n_bins = 50);
HistogramReport histogram_vs_density(const SampleTrace& trace, const TargetDensity& target,
                                     std::size_t n_bins = 50);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Ordinary least squares slope of log y against log x.
/// Throws NumericalError for fewer than 3 points, non-positive values or
/// constant x.
double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

struct TestFunction {
  std::string name = "identity";
  std::function<double(double)> fn = [](double x) { return x; };
};

struct WeakErrorOptions {
  double horizon = 10.0;  // T
  std::vector<double> stepsizes{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  std::size_t n_replicates = 200;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  TestFunction h;
  /// E[h(theta)] under the target; defaults to the exact mean for identity h.
  std::optional<double> truth;
};

struct WeakErrorPoint {
  double stepsize = 0.0;
  std::uint64_t n_steps = 0;
  double estimate = 0.0;   // mean of h(theta_T) over surviving replicates
  double error = 0.0;      // |estimate - truth|; +inf if every replicate diverged
  double std_error = 0.0;  // Monte Carlo standard error of the estimate
  std::size_t n_diverged = 0;
  std::vector<double> values;  // h(theta_T) per replicate, NaN when diverged
  std::vector<double> wall_seconds;
};

struct WeakErrorReport {
  std::string method;
  std::string test_function;
  double truth = 0.0;
  double horizon = 0.0;
  std::size_t n_replicates = 0;
  std::vector<WeakErrorPoint> points;
  /// NaN when fewer than 3 points have standard error below half their error.
  double fitted_slope = 0.0;
  std::size_t slope_points = 0;

  std::vector<double> stepsizes() const;
  std::vector<double> errors() const;
};

/// Runs n_replicates chains of ceil(T/eps) steps per stepsize from the
/// spec's initial point and compares the mean of h(theta_T) with the truth.
/// Replicate r at stepsize index i uses seed derive_seed(seed, i, r), so
/// different methods share their noise streams. Divergent replicates are
/// counted, not fatal.
WeakErrorReport weak_error_experiment(const SamplerSpec& spec, const GradientOracle& oracle,
                                      const WeakErrorOptions& options);

struct InstabilityRow {
  int k = 0;
  double theta = 0.0;       // 10^-k
  double ito_gprime = 0.0;  // g'(theta) = 1 / f'(g(theta))
  double ito_median_abs_dphi = 0.0;
  double corv_median_abs_dphi = 0.0;
  double corv_abs_drift = 0.0;  // eps * |f' U'_theta - f''/f'| at g(theta)
};

/// One-step proxy displacement of the Ito and CoRV updates started at
/// theta = 10^-k, median over n_trials noise draws.
std::vector<InstabilityRow> instability_probe(const GradientOracle& oracle, const Transform& t,
                                              double stepsize, std::span<const int> ks,
                                              std::size_t n_trials, std::uint64_t seed);

}  // namespace corv
