#include "corv/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "corv/diagnostics.hpp"
#include "corv/errors.hpp"
#include "corv/nmf.hpp"
#include "corv/parallel.hpp"
#include "corv/report.hpp"
#include "corv/sampler.hpp"

namespace corv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream families for derive_seed.
constexpr std::uint64_t kFig1Family = 0xf161;
constexpr std::uint64_t kFig2Family = 0xf162;
constexpr std::uint64_t kProbeFamily = 0x7e01;

unsigned thread_count(const ExperimentConfig& c) { return static_cast<unsigned>(c.threads); }

std::string file_label(std::size_t i, const std::string& label) {
  return std::to_string(i) + "_" + label;
}

std::string transform_name(const SamplerSpec& s) {
  return s.transform ? s.transform->name() : std::string();
}

/// Hash of the canonical config with fields that cannot change results blanked.
std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  copy.output_dir.clear();
  copy.threads = 0;
  return hex64(fnv1a64(serialize_config(copy)));
}

void finish(const ExperimentConfig& c, ExperimentOutcome& out, const std::string& command) {
  write_text(out.out_dir / "config.json", serialize_config(c));
  out.files.push_back("config.json");
  auto entries = build_info();
  entries["command"] = command;
  entries["experiment"] = to_string(c.kind);
  entries["config_hash"] = config_hash(c);
  entries["seed"] = std::to_string(c.seed);
  std::string files;
  for (const auto& f : out.files) files += (files.empty() ? "" : ",") + f;
  entries["files"] = files;
  write_manifest(out.out_dir / "manifest", entries);
}

ExperimentOutcome start(const ExperimentConfig& c) {
  ExperimentOutcome out;
  out.out_dir = c.output_dir;
  std::filesystem::create_directories(out.out_dir);
  return out;
}

void emit(ExperimentOutcome& out, const std::string& name, const CsvWriter& csv) {
  csv.write(out.out_dir / name);
  out.files.push_back(name);
}

void emit(ExperimentOutcome& out, const std::string& name, const std::string& text) {
  write_text(out.out_dir / name, text);
  out.files.push_back(name);
}

struct Fig1Run {
  SamplerSpec spec;
  std::uint64_t n_steps = 0;
  std::optional<SampleTrace> trace;
  std::optional<HistogramReport> hist;
  std::string divergence;
  std::uint64_t divergence_step = 0;
};

/// Burn-in defaults to a tenth of the kept length so that n_samples are kept.
Fig1Run run_fig1_chain(const ExperimentConfig& c, const SamplerConfig& sc,
                       const GradientOracle& oracle, std::optional<double> stepsize) {
  Fig1Run run;
  run.spec = build_sampler(sc, oracle.target());
  if (stepsize) run.spec.stepsize = *stepsize;
  const std::uint64_t kept_steps = c.fig1.n_samples * run.spec.thinning;
  if (!run.spec.burn_in) run.spec.burn_in = kept_steps / 10;
  run.n_steps = *run.spec.burn_in + kept_steps;
  try {
    run.trace = run_chain(run.spec, oracle, run.n_steps, derive_seed(c.seed, kFig1Family, 0));
    run.hist = histogram_vs_density(*run.trace, oracle.target(), c.fig1.n_bins);
  } catch (const DivergenceError& e) {
    run.divergence = e.what();
    run.divergence_step = e.step();
  }
  return run;
}

ExperimentOutcome run_fig1(const ExperimentConfig& c) {
  ExperimentOutcome out = start(c);
  const GradientOracle oracle = build_oracle(c);
  const TargetDensity& target = oracle.target();
  auto runs = parallel_map(c.samplers.size(), thread_count(c), [&](std::size_t i) {
    return run_fig1_chain(c, c.samplers[i], oracle, std::nullopt);
  });

  CsvWriter summary({"method", "transform", "stepsize", "n_steps", "burn_in", "thinning",
                     "n_samples", "tv_distance", "boundary_mass_error", "n_boundary_events",
                     "diverged", "divergence_step"});
  CsvWriter timings({"method", "transform", "stepsize", "wall_seconds"});
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Fig1Run& r = runs[i];
    const std::string label = r.spec.label();
    const bool ok = r.hist.has_value();
    summary.add_row({label, transform_name(r.spec), format_number(r.spec.stepsize),
                     format_number(r.n_steps), format_number(*r.spec.burn_in),
                     format_number(r.spec.thinning),
                     format_number(ok ? r.hist->n_samples : std::uint64_t{0}),
                     format_number(ok ? r.hist->tv_distance : kNaN),
                     format_number(ok ? r.hist->boundary_mass_error : kNaN),
                     format_number(ok ? r.trace->n_boundary_events : std::uint64_t{0}),
                     ok ? "0" : "1", format_number(r.divergence_step)});
    if (!ok) {
      out.warnings.push_back(label + ": " + r.divergence);
      continue;
    }
    timings.add_row({label, transform_name(r.spec), format_number(r.spec.stepsize),
                     format_number(std::chrono::duration<double>(r.trace->wall_time).count())});
    CsvWriter hist({"bin_lower", "bin_upper", "count", "empirical_mass", "exact_mass"});
    std::vector<double> emp;
    for (std::size_t b = 0; b < r.hist->counts.size(); ++b) {
      emp.push_back(r.hist->empirical_mass(b));
      hist.add_row({format_number(r.hist->bin_edges[b]), format_number(r.hist->bin_edges[b + 1]),
                    format_number(r.hist->counts[b]), format_number(emp.back()),
                    format_number(r.hist->exact_mass[b])});
    }
    emit(out, "hist_" + file_label(i, label) + ".csv", hist);
    emit(out, "hist_" + file_label(i, label) + ".svg",
         svg_histogram(label + " on " + target.name(), r.hist->bin_edges, emp,
                       r.hist->exact_mass));
  }
  emit(out, "summary.csv", summary);
  emit(out, "timings.csv", timings);
  finish(c, out, "run");
  return out;
}

ExperimentOutcome run_fig2(const ExperimentConfig& c) {
  ExperimentOutcome out = start(c);
  const GradientOracle oracle = build_oracle(c);
  WeakErrorOptions opts;
  opts.horizon = c.weak_error.horizon;
  opts.stepsizes = c.weak_error.stepsizes;
  opts.n_replicates = c.weak_error.n_replicates;
  opts.seed = derive_seed(c.seed, kFig2Family, 0);
  opts.threads = thread_count(c);

  CsvWriter summary({"method", "transform", "stepsize", "n_steps", "n_replicates", "estimate",
                     "truth", "error", "std_error", "n_diverged", "fitted_slope",
                     "slope_points"});
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < c.samplers.size(); ++i) {
    const SamplerSpec spec = build_sampler(c.samplers[i], oracle.target());
    const WeakErrorReport rep = weak_error_experiment(spec, oracle, opts);
    CsvWriter detail({"method", "transform", "stepsize", "replicate", "value", "diverged",
                      "wall_seconds"});
    PlotSeries s{rep.method, {}, {}};
    for (const auto& p : rep.points) {
      summary.add_row({rep.method, transform_name(spec), format_number(p.stepsize),
                       format_number(p.n_steps), format_number(rep.n_replicates),
                       format_number(p.estimate), format_number(rep.truth),
                       format_number(p.error), format_number(p.std_error),
                       format_number(p.n_diverged), format_number(rep.fitted_slope),
                       format_number(rep.slope_points)});
      for (std::size_t r = 0; r < p.values.size(); ++r)
        detail.add_row({rep.method, transform_name(spec), format_number(p.stepsize),
                        format_number(r), format_number(p.values[r]),
                        std::isfinite(p.values[r]) ? "0" : "1",
                        format_number(p.wall_seconds[r])});
      s.x.push_back(p.stepsize);
      s.y.push_back(p.error);
      if (p.n_diverged > 0)
        out.warnings.push_back(rep.method + " at stepsize " + format_number(p.stepsize) + ": " +
                               format_number(p.n_diverged) + " replicates diverged");
    }
    series.push_back(std::move(s));
    emit(out, "weak_error_" + file_label(i, rep.method) + ".csv", detail);
  }
  emit(out, "summary.csv", summary);
  emit(out, "weak_error.svg",
       svg_loglog("Weak error on " + c.target.name, "stepsize", "|E h - truth|", series));
  finish(c, out, "run");
  return out;
}

ExperimentOutcome run_theorem1(const ExperimentConfig& c) {
  ExperimentOutcome out = start(c);
  const GradientOracle oracle = build_oracle(c);
  Transform t = Transform::make("sigmoid");
  for (const auto& s : c.samplers)
    if (s.transform) {
      t = Transform::make(*s.transform).fitted_to(oracle.target().domain());
      break;
    }
  std::vector<int> ks;
  for (auto k : c.instability.ks) ks.push_back(static_cast<int>(k));
  const auto rows = instability_probe(oracle, t, c.instability.stepsize, ks,
                                      c.instability.n_trials,
                                      derive_seed(c.seed, kProbeFamily, 0));
  CsvWriter summary({"k", "theta", "transform", "stepsize", "ito_gprime", "ito_median_abs_dphi",
                     "corv_median_abs_dphi", "corv_abs_drift", "corv_drift_over_stepsize"});
  PlotSeries ito{"ito_lmc", {}, {}};
  PlotSeries corv{"corv_sgld", {}, {}};
  for (const auto& r : rows) {
    summary.add_row({std::to_string(r.k), format_number(r.theta), t.name(),
                     format_number(c.instability.stepsize), format_number(r.ito_gprime),
                     format_number(r.ito_median_abs_dphi), format_number(r.corv_median_abs_dphi),
                     format_number(r.corv_abs_drift),
                     format_number(r.corv_abs_drift / c.instability.stepsize)});
    ito.x.push_back(r.theta);
    ito.y.push_back(r.ito_median_abs_dphi);
    corv.x.push_back(r.theta);
    corv.y.push_back(r.corv_median_abs_dphi);
  }
  emit(out, "summary.csv", summary);
  emit(out, "instability.svg",
       svg_loglog("One-step proxy displacement", "theta", "median |dphi|", {ito, corv}));
  finish(c, out, "run");
  return out;
}

NmfTrainOptions nmf_options(const ExperimentConfig& c, const SamplerConfig& s) {
  NmfTrainOptions o;
  o.kind = parse_sampler_kind(s.kind);
  if (s.transform) o.transform = Transform::make(*s.transform);
  o.stepsize = s.stepsize;
  o.rank = c.nmf.rank;
  o.lambda_w = c.nmf.lambda_w;
  o.lambda_h = c.nmf.lambda_h;
  o.batch_size = c.nmf.batch_size;
  o.n_iters = c.nmf.n_iters;
  o.eval_interval = c.nmf.eval_interval;
  if (c.nmf.burn_in) o.burn_in = *c.nmf.burn_in;
  o.seed = c.seed;
  return o;
}

std::string nmf_label(const SamplerConfig& s) {
  return s.kind + (s.kind == "corv_sgld" && s.transform ? "_" + *s.transform : "");
}

ExperimentOutcome run_nmf(const ExperimentConfig& c) {
  ExperimentOutcome out = start(c);
  const RatingsDataset data = load_dataset(c.nmf, c.seed);
  for (const auto& w : data.warnings) out.warnings.push_back(w);
  auto results = parallel_map(c.samplers.size(), thread_count(c), [&](std::size_t i) {
    return train_nmf(data, nmf_options(c, c.samplers[i]));
  });

  const double floor = data.noise_floor_rmse.value_or(kNaN);
  CsvWriter summary({"method", "transform", "stepsize", "n_iters", "batch_size", "rank",
                     "noise_floor_rmse", "final_train_rmse", "final_valid_rmse",
                     "final_test_rmse", "first_iter_within_10pct_floor", "n_accumulated",
                     "diverged"});
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const SamplerConfig& s = c.samplers[i];
    const std::string label = nmf_label(s);
    const RmsePoint& last = r.curve.back();
    std::string hit;
    if (std::isfinite(floor))
      if (auto it = r.first_iteration_below(1.1 * floor)) hit = std::to_string(*it);
    summary.add_row({label, s.transform.value_or(""), format_number(s.stepsize),
                     format_number(c.nmf.n_iters), format_number(c.nmf.batch_size),
                     format_number(c.nmf.rank), format_number(floor),
                     format_number(last.train_rmse), format_number(last.valid_rmse),
                     format_number(last.test_rmse), hit, format_number(r.n_accumulated),
                     r.diverged ? "1" : "0"});
    if (r.diverged) out.warnings.push_back(label + ": " + r.divergence_message);
    CsvWriter curve({"iteration", "train_rmse", "valid_rmse", "test_rmse", "wall_time"});
    PlotSeries ps{label, {}, {}};
    for (const auto& p : r.curve) {
      curve.add_row({format_number(p.iteration), format_number(p.train_rmse),
                     format_number(p.valid_rmse), format_number(p.test_rmse),
                     format_number(p.wall_seconds)});
      ps.x.push_back(static_cast<double>(p.iteration));
      ps.y.push_back(p.test_rmse);
    }
    series.push_back(std::move(ps));
    emit(out, "rmse_" + file_label(i, label) + ".csv", curve);
    if (c.nmf.write_snapshots) {
      const std::string name = "factors_" + file_label(i, label) + ".bin";
      write_snapshot(r.final_state, out.out_dir / name);
      out.files.push_back(name);
    }
  }
  emit(out, "summary.csv", summary);
  emit(out, "rmse.svg", svg_lines("Test RMSE", "iteration", "RMSE", series));
  finish(c, out, "run");
  return out;
}

}  // namespace

RatingsDataset load_dataset(const NmfConfig& config, std::uint64_t seed) {
  if (config.data.source == "file")
    return load_ratings(config.data.path, parse_ratings_format(config.data.format), seed);
  SyntheticParams p;
  p.n_users = config.data.n_users;
  p.n_items = config.data.n_items;
  p.rank = config.data.rank;
  p.lambda = config.data.lambda;
  p.density = config.data.density;
  p.seed = seed;
  return generate_synthetic(p);
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  switch (config.kind) {
    case ExperimentKind::fig1_density: return run_fig1(config);
    case ExperimentKind::fig2_weak_error: return run_fig2(config);
    case ExperimentKind::theorem1_instability: return run_theorem1(config);
    case ExperimentKind::nmf_train: return run_nmf(config);
    case ExperimentKind::benchmark_overhead: return run_benchmark(config);
  }
  throw ConfigError("experiment: unsupported kind");
}

GridSearchResult grid_search_stepsize(const ExperimentConfig& c, std::span<const double> grid,
                                      const std::string& objective) {
  validate_config(c);
  if (grid.empty()) throw ConfigError("grid_search.stepsizes: grid is empty");
  for (double e : grid)
    if (!(e > 0.0)) throw ConfigError("grid_search.stepsizes: values must be positive");
  const bool tv = objective == "tv_distance";
  if (tv && c.kind != ExperimentKind::fig1_density)
    throw ConfigError("grid_search.objective: tv_distance needs a fig1_density experiment");
  if (!tv && objective != "validation_rmse")
    throw ConfigError("grid_search.objective: unknown objective '" + objective + "'");
  if (!tv && c.kind != ExperimentKind::nmf_train)
    throw ConfigError("grid_search.objective: validation_rmse needs an nmf_train experiment");
  if (c.samplers.empty()) throw ConfigError("samplers: at least one sampler is required");

  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::optional<GradientOracle> oracle;
  std::optional<RatingsDataset> data;
  if (tv)
    oracle.emplace(build_oracle(c));
  else
    data.emplace(load_dataset(c.nmf, c.seed));

  const std::size_t n_s = c.samplers.size();
  const std::size_t n_e = sorted.size();
  auto rows = parallel_map(n_s * n_e, thread_count(c), [&](std::size_t idx) {
    const std::size_t si = idx / n_e;
    const double eps = sorted[idx % n_e];
    GridSearchRow row;
    row.sampler_index = si;
    row.stepsize = eps;
    if (tv) {
      Fig1Run run = run_fig1_chain(c, c.samplers[si], *oracle, eps);
      row.method = run.spec.label();
      if (run.hist) {
        row.objective = run.hist->tv_distance;
      } else {
        row.diverged = true;
        row.objective = kInf;
        row.note = run.divergence;
      }
    } else {
      NmfTrainOptions o = nmf_options(c, c.samplers[si]);
      o.stepsize = eps;
      row.method = nmf_label(c.samplers[si]);
      const NmfTrainResult r = train_nmf(*data, o);
      row.objective = r.curve.back().valid_rmse;
      if (r.diverged || !std::isfinite(row.objective)) {
        row.diverged = true;
        row.objective = kInf;
        row.note = r.diverged ? r.divergence_message : "non-finite validation RMSE";
      }
    }
    return row;
  });

  GridSearchResult result;
  result.objective = objective;
  result.rows = std::move(rows);
  for (std::size_t si = 0; si < n_s; ++si) {
    std::optional<double> best;
    double best_obj = kInf;
    for (std::size_t k = 0; k < n_e; ++k) {
      const GridSearchRow& r = result.rows[si * n_e + k];
      // strict < keeps the smaller stepsize on ties (grid ascending)
      if (!r.diverged && r.objective < best_obj) {
        best_obj = r.objective;
        best = r.stepsize;
      }
    }
    const std::string path = "samplers[" + std::to_string(si) + "]";
    if (!best) {
      result.warnings.push_back(path + ": every candidate stepsize diverged");
    } else if (n_e >= 3 && (*best == sorted.front() || *best == sorted.back())) {
      result.warnings.push_back(path + ": best stepsize " + format_number(*best) +
                                " is at the end of the grid; consider widening it");
    }
    result.best.push_back(best);
  }
  return result;
}

ExperimentOutcome run_grid_search(const ExperimentConfig& c) {
  ExperimentOutcome out = start(c);
  const GridSearchResult r =
      grid_search_stepsize(c, c.grid_search.stepsizes, c.grid_search.objective);
  CsvWriter table({"sampler", "method", "stepsize", "objective", "value", "diverged", "best",
                   "note"});
  for (const auto& row : r.rows) {
    const auto& best = r.best[row.sampler_index];
    table.add_row({std::to_string(row.sampler_index), row.method, format_number(row.stepsize),
                   r.objective, format_number(row.objective), row.diverged ? "1" : "0",
                   best && *best == row.stepsize ? "1" : "0", row.note});
  }
  CsvWriter summary({"sampler", "method", "best_stepsize", "objective", "value"});
  for (std::size_t si = 0; si < r.best.size(); ++si) {
    double value = kInf;
    std::string method;
    for (const auto& row : r.rows)
      if (row.sampler_index == si) {
        method = row.method;
        if (r.best[si] && row.stepsize == *r.best[si]) value = row.objective;
      }
    summary.add_row({std::to_string(si), method,
                     r.best[si] ? format_number(*r.best[si]) : std::string(), r.objective,
                     format_number(value)});
  }
  out.warnings = r.warnings;
  emit(out, "grid_search.csv", table);
  emit(out, "summary.csv", summary);
  finish(c, out, "grid-search");
  return out;
}

std::vector<BenchmarkRow> benchmark_overhead(const ExperimentConfig& c) {
  const BenchConfig& b = c.benchmark;
  const RatingsDataset data = load_dataset(c.nmf, c.seed);

  struct Method {
    std::string name;
    std::optional<Transform> transform;
  };
  std::vector<Method> methods{{"mirror_sgld", std::nullopt}, {"mirror_sgld_repeat", std::nullopt}};
  for (const auto& t : b.transforms) methods.push_back({"corv_sgld", Transform::make(t)});

  std::vector<BenchmarkRow> rows;
  for (std::size_t batch_size : b.batch_sizes) {
    if (batch_size > data.train.size())
      throw ConfigError("benchmark.batch_sizes: " + std::to_string(batch_size) +
                        " exceeds the training size " + std::to_string(data.train.size()));
    ChainRng init_rng(derive_seed(c.seed, 0xbe7c, 0));
    const FactorState base = init_factors(data.n_users, data.n_items, b.rank, c.nmf.lambda_w,
                                          c.nmf.lambda_h, init_rng);
    std::vector<FactorState> starts;
    for (const auto& m : methods)
      starts.push_back(m.transform ? attach_transform(base, *m.transform) : base);
    CounterEngine batch_engine(derive_seed(c.seed, 0xbe7c, 1));
    std::uniform_int_distribution<std::size_t> pick(0, data.train.size() - 1);
    std::vector<std::size_t> batch(batch_size);
    for (auto& k : batch) k = data.train[pick(batch_engine)];

    std::vector<std::vector<double>> samples(methods.size());
    // Repeat 0 is a warm-up; the starting method rotates to spread drift evenly.
    for (std::size_t rep = 0; rep <= b.repeats; ++rep) {
      for (std::size_t o = 0; o < methods.size(); ++o) {
        const std::size_t mi = (o + rep) % methods.size();
        FactorState s = starts[mi];
        ChainRng rng(derive_seed(c.seed, 0xbe7c, 2 + rep));
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t k = 0; k < b.n_steps; ++k) {
          s = methods[mi].transform
                  ? nmf_step_corv(std::move(s), data, batch, b.stepsize, *methods[mi].transform, rng)
                  : nmf_step_mirror(std::move(s), data, batch, b.stepsize, rng);
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        if (rep > 0) samples[mi].push_back(dt.count() / static_cast<double>(b.n_steps));
      }
    }
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double mirror = median(samples[0]);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      BenchmarkRow row;
      row.method = methods[mi].name;
      row.transform = methods[mi].transform ? methods[mi].transform->name() : "";
      row.batch_size = batch_size;
      row.rank = b.rank;
      row.seconds_per_step = median(samples[mi]);
      row.relative_overhead = row.seconds_per_step / mirror - 1.0;
      rows.push_back(row);
    }
  }
  return rows;
}

ExperimentOutcome run_benchmark(const ExperimentConfig& c) {
  ExperimentOutcome out = start(c);
  const auto rows = benchmark_overhead(c);
  CsvWriter summary({"method", "transform", "batch_size", "rank", "n_steps", "repeats",
                     "stepsize"});
  CsvWriter timings({"method", "transform", "batch_size", "rank", "seconds_per_step",
                     "relative_overhead"});
  for (const auto& r : rows) {
    summary.add_row({r.method, r.transform, format_number(r.batch_size), format_number(r.rank),
                     format_number(c.benchmark.n_steps), format_number(c.benchmark.repeats),
                     format_number(c.benchmark.stepsize)});
    timings.add_row({r.method, r.transform, format_number(r.batch_size), format_number(r.rank),
                     format_number(r.seconds_per_step), format_number(r.relative_overhead)});
  }
  emit(out, "summary.csv", summary);
  emit(out, "timings.csv", timings);
  finish(c, out, "bench");
  return out;
}

}  // namespace corv
