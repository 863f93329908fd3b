#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corv/config.hpp"
#include "corv/ratings.hpp"

namespace corv {

struct ExperimentOutcome {
  std::filesystem::path out_dir;
  std::vector<std::string> files;  // relative to out_dir
  std::vector<std::string> warnings;
};

/// Runs the experiment named by config.kind and writes summary.csv, detail
/// CSVs, SVG plots, config.json (canonical) and a manifest into
/// config.output_dir. summary.csv depends only on the config and the build.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

struct GridSearchRow {
  std::size_t sampler_index = 0;
  std::string method;
  double stepsize = 0.0;
  double objective = 0.0;  // +inf when the candidate diverged
  bool diverged = false;
  std::string note;
};

struct GridSearchResult {
  std::string objective;
  std::vector<GridSearchRow> rows;
  /// Best stepsize per sampler; empty when every candidate diverged.
  std::vector<std::optional<double>> best;
  std::vector<std::string> warnings;
};

/// Evaluates every sampler of the config at each candidate stepsize with the
/// same seed. tv_distance needs a fig1_density config, validation_rmse an
/// nmf_train config. Ties go to the smaller stepsize; an argmin on an end of
/// a grid with at least 3 points adds a widen-the-grid warning.
GridSearchResult grid_search_stepsize(const ExperimentConfig& config,
                                      std::span<const double> grid,
                                      const std::string& objective);

/// Writes grid_search.csv, manifest and config.json for a grid search.
ExperimentOutcome run_grid_search(const ExperimentConfig& config);

struct BenchmarkRow {
  std::string method;
  std::string transform;
  std::size_t batch_size = 0;
  std::size_t rank = 0;
  double seconds_per_step = 0.0;
  /// seconds_per_step / mirror seconds_per_step - 1 at the same batch size.
  double relative_overhead = 0.0;
};

/// Per-step NMF wall time of mirror SGLD and CoRV with each configured
/// transform. Repeats are interleaved across methods and the median is kept.
/// A second mirror measurement ("mirror_sgld_repeat") shows the timer noise.
std::vector<BenchmarkRow> benchmark_overhead(const ExperimentConfig& config);

/// Writes summary.csv (the measured configurations), timings.csv and a manifest.
ExperimentOutcome run_benchmark(const ExperimentConfig& config);

/// Synthetic data or the configured ratings file, split with `seed`.
RatingsDataset load_dataset(const NmfConfig& config, std::uint64_t seed);

}  // namespace corv
