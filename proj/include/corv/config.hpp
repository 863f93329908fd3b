#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corv/sampler.hpp"
#include "corv/target.hpp"

namespace corv {

enum class ExperimentKind {
  fig1_density,
  fig2_weak_error,
  theorem1_instability,
  nmf_train,
  benchmark_overhead
};

std::string to_string(ExperimentKind kind);

struct TargetConfig {
  std::string name = "gamma";
  ParameterMap params{{"shape", 0.5}, {"scale", 1.0}};
};

struct OracleConfig {
  std::string mode = "exact";  // exact | additive_noise
  double noise_std = 0.0;
};

struct SamplerConfig {
  std::string kind = "corv_sgld";
  std::optional<std::string> transform;
  double stepsize = 1e-3;
  std::optional<std::uint64_t> burn_in;
  std::uint64_t thinning = 1;
  double initial_phi = 0.0;
};

struct Fig1Config {
  std::uint64_t n_samples = 100000;
  std::uint64_t n_bins = 50;
};

struct WeakErrorConfig {
  double horizon = 10.0;
  std::vector<double> stepsizes{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  std::uint64_t n_replicates = 200;
};

struct InstabilityConfig {
  double stepsize = 1e-3;
  std::vector<std::int64_t> ks{2, 3, 4, 5, 6};
  std::uint64_t n_trials = 1000;
};

struct GridSearchConfig {
  std::vector<double> stepsizes;
  std::string objective = "tv_distance";  // tv_distance | validation_rmse
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | file
  std::uint64_t n_users = 200;
  std::uint64_t n_items = 100;
  std::uint64_t rank = 5;
  double lambda = 1.0;
  double density = 1.0;
  std::string path;
  std::string format = "ml_tab";
};

struct NmfConfig {
  DataConfig data;
  std::uint64_t rank = 5;
  double lambda_w = 1.0;
  double lambda_h = 1.0;
  std::uint64_t batch_size = 2000;
  std::uint64_t n_iters = 5000;
  std::uint64_t eval_interval = 100;
  std::optional<std::uint64_t> burn_in;
  bool write_snapshots = true;
};

struct BenchConfig {
  std::vector<std::uint64_t> batch_sizes{2000, 4000};
  std::uint64_t rank = 20;
  std::uint64_t n_steps = 300;
  std::uint64_t repeats = 5;
  std::vector<std::string> transforms{"exp", "softplus", "icll"};
  /// Small enough that no run drifts into overflow during timing.
  double stepsize = 1e-4;
};

/// Everything needed to reproduce one run. Sections not used by `kind` keep
/// their defaults.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::fig1_density;
  std::uint64_t seed = 0;
  std::uint64_t threads = 0;
  std::string output_dir = "out";
  TargetConfig target;
  OracleConfig oracle;
  std::vector<SamplerConfig> samplers;
  Fig1Config fig1;
  WeakErrorConfig weak_error;
  InstabilityConfig instability;
  GridSearchConfig grid_search;
  NmfConfig nmf;
  BenchConfig benchmark;
};

/// Parses a JSON config. Syntax errors throw ParseError; every schema or
/// semantic problem is collected and thrown together as ConfigError, each
/// message prefixed with its field path (e.g. "samplers[1].kind").
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON: every field present, keys sorted, fixed indentation.
std::string serialize_config(const ExperimentConfig& config);

/// Semantic checks that need the built components (target parameters,
/// transform/domain compatibility, ...). Throws ConfigError listing all issues.
void validate_config(const ExperimentConfig& config);

TargetDensity build_target(const TargetConfig& config);
GradientOracle build_oracle(const ExperimentConfig& config);
/// Transforms are fitted to the target domain (affine for unit-interval
/// transforms, shift for half-line ones).
SamplerSpec build_sampler(const SamplerConfig& config, const TargetDensity& target);

}  // namespace corv
