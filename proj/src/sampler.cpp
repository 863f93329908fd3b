#include "corv/sampler.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "corv/errors.hpp"
#include "corv/parallel.hpp"

namespace corv {
namespace {

[[noreturn]] void diverge(const std::string& what, const ChainState& s, double bad_phi,
                          double bad_theta) {
  std::ostringstream msg;
  msg.precision(17);
  msg << what << " (phi=" << s.phi << ", theta=" << s.theta << ", proposal phi=" << bad_phi
      << ", proposal theta=" << bad_theta << ")";
  throw DivergenceError(msg.str(), bad_phi, bad_theta, s.step);
}

}  // namespace

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "sgld") return SamplerKind::sgld;
  if (name == "mirror_sgld" || name == "mirror") return SamplerKind::mirror_sgld;
  if (name == "ito_lmc" || name == "ito") return SamplerKind::ito_lmc;
  if (name == "corv_sgld" || name == "corv") return SamplerKind::corv_sgld;
  throw ConfigError("unknown sampler kind '" + std::string(name) +
                    "' (expected sgld, mirror_sgld, ito_lmc or corv_sgld)");
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::sgld: return "sgld";
    case SamplerKind::mirror_sgld: return "mirror_sgld";
    case SamplerKind::ito_lmc: return "ito_lmc";
    case SamplerKind::corv_sgld: return "corv_sgld";
  }
  return "?";
}

void SamplerSpec::validate(const TargetDensity& target) const {
  std::vector<std::string> issues;
  const Interval& dom = target.domain();
  if (!(stepsize > 0.0) || !std::isfinite(stepsize))
    issues.push_back("sampler.stepsize: must be a finite positive number");
  if (thinning < 1) issues.push_back("sampler.thinning: must be >= 1");
  if (!std::isfinite(initial_phi)) issues.push_back("sampler.initial_phi: must be finite");
  if (initial_theta && !dom.contains_open(*initial_theta))
    issues.push_back("sampler.initial_theta: must lie inside " + to_string(dom));

  switch (kind) {
    case SamplerKind::ito_lmc:
    case SamplerKind::corv_sgld:
      if (!transform)
        issues.push_back("sampler.transform: required for " + to_string(kind));
      else if (!(transform->codomain() == dom))
        issues.push_back("sampler.transform: codomain " + to_string(transform->codomain()) +
                         " of '" + transform->name() + "' does not match target domain " +
                         to_string(dom));
      break;
    case SamplerKind::mirror_sgld:
      if (dom.unconstrained())
        issues.push_back("sampler.kind: mirror_sgld needs a domain with a finite boundary");
      break;
    case SamplerKind::sgld:
      if (!dom.unconstrained())
        issues.push_back("sampler.kind: sgld requires an unconstrained domain, target '" +
                         target.name() + "' lives on " + to_string(dom));
      break;
  }
  if (!issues.empty()) throw ConfigError(issues);
}

std::string SamplerSpec::label() const {
  std::string out = to_string(kind);
  if (transform && (kind == SamplerKind::ito_lmc || kind == SamplerKind::corv_sgld))
    out += "_" + transform->name();
  return out;
}

ChainState step_sgld(ChainState s, const GradientOracle& oracle) {
  const double eta = s.rng.normal();
  const double g = oracle.target_gradient(s.theta, s.rng);
  const double next = s.theta - s.stepsize * g + std::sqrt(2.0 * s.stepsize) * eta;
  if (!std::isfinite(next)) diverge("non-finite SGLD update", s, next, next);
  s.theta = next;
  s.phi = next;
  ++s.step;
  return s;
}

Reflection reflect_into(double x, const Interval& domain, int max_folds) {
  int folds = 0;
  while (true) {
    if (x < domain.lower)
      x = domain.lower + (domain.lower - x);
    else if (x > domain.upper)
      x = domain.upper - (x - domain.upper);
    else
      break;
    if (++folds > max_folds) {
      std::ostringstream msg;
      msg << "mirror reflection needed more than " << max_folds << " folds into "
          << to_string(domain) << "; stepsize far too large";
      throw DivergenceError(msg.str(), x, x, 0);
    }
  }
  return {x, folds};
}

ChainState step_mirror(ChainState s, const GradientOracle& oracle, const Interval& domain) {
  const double eta = s.rng.normal();
  const double g = oracle.target_gradient(s.theta, s.rng);
  const double proposal = s.theta - s.stepsize * g + std::sqrt(2.0 * s.stepsize) * eta;
  if (!std::isfinite(proposal)) diverge("non-finite mirror proposal", s, proposal, proposal);
  Reflection r;
  try {
    r = reflect_into(proposal, domain);
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.what(), proposal, proposal, s.step);
  }
  s.theta = r.value;
  s.phi = r.value;
  s.boundary_events += static_cast<std::uint64_t>(r.folds);
  ++s.step;
  return s;
}

ChainState step_ito(ChainState s, const GradientOracle& oracle, const Transform& t) {
  // g' and g'' at theta_t, evaluated through phi_t = g(theta_t).
  const TransformPoint p = t.evaluate(s.phi);
  const double gp = 1.0 / p.deriv1;
  const double gpp = -p.log_deriv_ratio / (p.deriv1 * p.deriv1);
  const double noise_scale = std::sqrt(2.0 * s.stepsize);
  constexpr int kRetries = 8;
  double phi = 0.0;
  double theta = 0.0;
  for (int attempt = 0; attempt <= kRetries; ++attempt) {
    const double eta = s.rng.normal();
    const double g = oracle.target_gradient(s.theta, s.rng);
    phi = s.phi + s.stepsize * (-gp * g + gpp) + noise_scale * gp * eta;
    if (std::isfinite(phi)) {
      theta = t.eval(phi);
      if (std::isfinite(theta)) {
        s.phi = phi;
        s.theta = theta;
        ++s.step;
        return s;
      }
    }
    ++s.boundary_events;
  }
  diverge("Ito update stayed non-finite after 8 redraws", s, phi, theta);
}

ChainState step_corv(ChainState s, const GradientOracle& oracle, const Transform& t) {
  const double eta = s.rng.normal();
  const double g = oracle.proxy_gradient(s.phi, t, s.rng);
  const double phi = s.phi - s.stepsize * g + std::sqrt(2.0 * s.stepsize) * eta;
  if (!std::isfinite(phi)) diverge("non-finite CoRV update", s, phi, t.eval(s.phi));
  const double theta = t.eval(phi);
  s.phi = phi;
  s.theta = theta;
  ++s.step;
  return s;
}

Transform default_transform_for(const Interval& domain) {
  if (domain.unconstrained()) return Transform::make("identity");
  if (domain.bounded()) return Transform::make("sigmoid").fitted_to(domain);
  if (domain.has_finite_lower()) return Transform::make("softplus").fitted_to(domain);
  throw ConfigError("no default transform for domain " + to_string(domain) +
                    "; set sampler.initial_theta");
}

ChainState initial_state(const SamplerSpec& spec, const TargetDensity& target,
                         std::uint64_t seed) {
  ChainState s{.phi = spec.initial_phi,
               .theta = 0.0,
               .step = 0,
               .stepsize = spec.stepsize,
               .boundary_events = 0,
               .rng = ChainRng(seed)};
  const bool proxy = spec.kind == SamplerKind::ito_lmc || spec.kind == SamplerKind::corv_sgld;
  if (spec.initial_theta) {
    s.theta = *spec.initial_theta;
    s.phi = proxy ? spec.transform->inverse(s.theta) : s.theta;
    if (proxy) s.theta = spec.transform->eval(s.phi);
    return s;
  }
  const Transform t = spec.transform ? *spec.transform : default_transform_for(target.domain());
  s.theta = t.fitted_to(target.domain()).eval(spec.initial_phi);
  if (!proxy) s.phi = s.theta;
  return s;
}

ChainState advance(ChainState s, const SamplerSpec& spec, const GradientOracle& oracle) {
  switch (spec.kind) {
    case SamplerKind::sgld: return step_sgld(std::move(s), oracle);
    case SamplerKind::mirror_sgld:
      return step_mirror(std::move(s), oracle, oracle.target().domain());
    case SamplerKind::ito_lmc: return step_ito(std::move(s), oracle, *spec.transform);
    case SamplerKind::corv_sgld: return step_corv(std::move(s), oracle, *spec.transform);
  }
  return s;
}

std::uint64_t effective_burn_in(const SamplerSpec& spec, std::uint64_t n_steps) {
  return spec.burn_in.value_or(n_steps / 10);
}

SampleTrace run_chain(const SamplerSpec& spec, const GradientOracle& oracle,
                      std::uint64_t n_steps, std::uint64_t seed) {
  spec.validate(oracle.target());
  const std::uint64_t burn = effective_burn_in(spec, n_steps);
  if (n_steps <= burn)
    throw ConfigError("run length " + std::to_string(n_steps) + " must exceed burn-in " +
                      std::to_string(burn));

  const auto start = std::chrono::steady_clock::now();
  SampleTrace trace;
  trace.spec = spec;
  trace.seed = seed;
  const std::uint64_t kept = (n_steps - burn) / spec.thinning;
  const bool keep_phi = spec.kind == SamplerKind::ito_lmc || spec.kind == SamplerKind::corv_sgld;
  trace.thetas.reserve(kept);
  if (keep_phi) trace.phis.reserve(kept);

  ChainState s = initial_state(spec, oracle.target(), seed);
  for (std::uint64_t k = 1; k <= n_steps; ++k) {
    try {
      s = advance(std::move(s), spec, oracle);
    } catch (const DivergenceError& e) {
      throw DivergenceError(spec.label() + " diverged at step " + std::to_string(k) + ": " +
                                e.what(),
                            e.phi(), e.theta(), k);
    } catch (const NumericalError& e) {
      throw DivergenceError(spec.label() + " diverged at step " + std::to_string(k) + ": " +
                                e.what(),
                            s.phi, s.theta, k);
    }
    if (k > burn && (k - burn) % spec.thinning == 0) {
      trace.thetas.push_back(s.theta);
      if (keep_phi) trace.phis.push_back(s.phi);
    }
  }
  trace.n_boundary_events = s.boundary_events;
  trace.wall_time = std::chrono::steady_clock::now() - start;
  return trace;
}

std::vector<SampleTrace> run_chains_parallel(const SamplerSpec& spec,
                                             const GradientOracle& oracle,
                                             std::uint64_t n_steps,
                                             std::span<const std::uint64_t> seeds,
                                             unsigned threads) {
  std::set<std::uint64_t> seen;
  for (auto s : seeds)
    if (!seen.insert(s).second)
      throw ConfigError("duplicate chain seed " + std::to_string(s));
  spec.validate(oracle.target());
  return parallel_map(seeds.size(), threads, [&](std::size_t i) {
    return run_chain(spec, oracle, n_steps, seeds[i]);
  });
}

}  // namespace corv
