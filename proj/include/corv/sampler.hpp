#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corv/random.hpp"
#include "corv/target.hpp"
#include "corv/transform.hpp"

namespace corv {

enum class SamplerKind { sgld, mirror_sgld, ito_lmc, corv_sgld };

SamplerKind parse_sampler_kind(std::string_view name);
std::string to_string(SamplerKind kind);

/// State of one chain. For the transform-based samplers theta == f(phi) is
/// maintained exactly: theta is always the value returned by the same
/// evaluation that produced phi. For sgld and mirror_sgld phi mirrors theta.
struct ChainState {
  double phi = 0.0;
  double theta = 0.0;
  std::uint64_t step = 0;
  double stepsize = 0.0;
  /// Mirror folds or Ito non-finite retries, cumulative.
  std::uint64_t boundary_events = 0;
  ChainRng rng;
};

struct SamplerSpec {
  SamplerKind kind = SamplerKind::corv_sgld;
  /// Required for ito_lmc and corv_sgld; for the others it only fixes the
  /// starting point theta_0 = f(initial_phi).
  std::optional<Transform> transform;
  double stepsize = 1e-3;
  /// Defaults to 10% of the step count.
  std::optional<std::uint64_t> burn_in;
  std::uint64_t thinning = 1;
  double initial_phi = 0.0;
  std::optional<double> initial_theta;

  /// Throws ConfigError listing every incompatibility with `target`.
  void validate(const TargetDensity& target) const;
  /// Short identifier such as "corv_sgld_softplus".
  std::string label() const;
};

struct SampleTrace {
  std::vector<double> thetas;
  /// Proxy values, recorded for ito_lmc and corv_sgld only.
  std::vector<double> phis;
  std::uint64_t n_boundary_events = 0;
  std::chrono::nanoseconds wall_time{0};
  SamplerSpec spec;
  std::uint64_t seed = 0;
};

/// theta <- theta - eps * (U'_theta(theta) + delta) + sqrt(2 eps) * eta.
ChainState step_sgld(ChainState state, const GradientOracle& oracle);

/// SGLD proposal in target space folded back into `domain`.
/// More than 64 folds in one step throws DivergenceError.
ChainState step_mirror(ChainState state, const GradientOracle& oracle, const Interval& domain);

/// Euler-Maruyama step of the proxy SDE obtained from the Ito formula with
/// g = f^-1. A non-finite proxy update counts as a boundary event and is
/// redrawn with fresh noise up to 8 times before DivergenceError.
ChainState step_ito(ChainState state, const GradientOracle& oracle, const Transform& t);

/// Change-of-variable SGLD step in proxy space, theta = f(phi).
ChainState step_corv(ChainState state, const GradientOracle& oracle, const Transform& t);

struct Reflection {
  double value;
  int folds;
};

/// Reflects x at the finite ends of `domain` until it lies inside.
Reflection reflect_into(double x, const Interval& domain, int max_folds = 64);

/// Canonical transform used when a starting point must be derived from
/// initial_phi without an explicit transform.
Transform default_transform_for(const Interval& domain);

ChainState initial_state(const SamplerSpec& spec, const TargetDensity& target,
                         std::uint64_t seed);

/// Dispatches on spec.kind.
ChainState advance(ChainState state, const SamplerSpec& spec, const GradientOracle& oracle);

std::uint64_t effective_burn_in(const SamplerSpec& spec, std::uint64_t n_steps);

/// Runs n_steps updates from initial_state(spec, target, seed), keeps every
/// `thinning`-th state after burn-in. Bitwise deterministic in (spec, seed).
/// DivergenceError is rethrown with the step index attached.
SampleTrace run_chain(const SamplerSpec& spec, const GradientOracle& oracle,
                      std::uint64_t n_steps, std::uint64_t seed);

/// One independent chain per seed, distributed over `threads` workers
/// (0 = hardware concurrency). Output equals sequential run_chain calls.
/// Duplicate seeds throw ConfigError.
std::vector<SampleTrace> run_chains_parallel(const SamplerSpec& spec,
                                             const GradientOracle& oracle,
                                             std::uint64_t n_steps,
                                             std::span<const std::uint64_t> seeds,
                                             unsigned threads = 0);

}  // namespace corv
