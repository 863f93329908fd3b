// Command-line front end: run / grid-search / bench / gen-data.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "corv/config.hpp"
#include "corv/errors.hpp"
#include "corv/experiment.hpp"
#include "corv/ratings.hpp"
#include "corv/report.hpp"

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> threads;
};

corv::ExperimentConfig load_with_overrides(const std::string& path, const Globals& g) {
  corv::ExperimentConfig c = corv::load_config(path);
  if (g.seed) c.seed = *g.seed;
  if (g.out_dir) c.output_dir = *g.out_dir;
  if (g.threads) c.threads = *g.threads;
  return c;
}

void report(const corv::ExperimentOutcome& out) {
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << out.files.size() << " files to " << out.out_dir.string() << "\n";
  for (const auto& f : out.files) std::cout << "  " << f << "\n";
}

corv::ExperimentOutcome gen_data(const std::vector<std::string>& params, const Globals& g) {
  corv::SyntheticParams p;
  std::vector<std::string> issues;
  for (const auto& kv : params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      issues.push_back("gen-data: expected key=value, got '" + kv + "'");
      continue;
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      if (key == "users") p.n_users = std::stoull(value);
      else if (key == "items") p.n_items = std::stoull(value);
      else if (key == "rank") p.rank = std::stoull(value);
      else if (key == "lambda") p.lambda = std::stod(value);
      else if (key == "density") p.density = std::stod(value);
      else issues.push_back("gen-data." + key + ": unknown parameter (expected users, items, rank, lambda, density)");
    } catch (const std::exception&) {
      issues.push_back("gen-data." + key + ": cannot parse '" + value + "'");
    }
  }
  if (!issues.empty()) throw corv::ConfigError(issues);
  p.seed = g.seed.value_or(0);

  corv::ExperimentOutcome out;
  out.out_dir = g.out_dir.value_or("out");
  std::filesystem::create_directories(out.out_dir);
  const corv::RatingsDataset data = corv::generate_synthetic(p);
  corv::write_ratings_csv(data, out.out_dir / "ratings.csv");
  out.files.push_back("ratings.csv");
  auto m = corv::build_info();
  m["command"] = "gen-data";
  m["seed"] = std::to_string(p.seed);
  m["n_users"] = std::to_string(p.n_users);
  m["n_items"] = std::to_string(p.n_items);
  m["rank"] = std::to_string(p.rank);
  m["lambda"] = corv::format_number(p.lambda);
  m["density"] = corv::format_number(p.density);
  m["n_entries"] = std::to_string(data.entries.size());
  m["noise_floor_rmse"] = corv::format_number(data.noise_floor_rmse.value_or(0.0));
  m["files"] = "ratings.csv";
  corv::write_manifest(out.out_dir / "manifest", m);
  out.files.push_back("manifest");
  return out;
}

int fail(const std::string& kind, const std::string& message, const std::vector<std::string>& issues,
         std::optional<std::size_t> line, int code) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  j["issues"] = issues;
  if (line) j["line"] = *line;
  j["exit_code"] = code;
  std::cerr << j.dump(2) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained-domain SGLD experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Base seed (overrides the config)");
  app.add_option("--out-dir", g.out_dir, "Output directory (overrides the config)");
  app.add_option("--threads", g.threads, "Worker threads, 0 = all cores");
  app.set_version_flag("--version", std::string("corv ") + corv::build_info()["version"]);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "JSON config")->required();
  auto* grid = app.add_subcommand("grid-search", "Grid-search the stepsize of each sampler");
  grid->add_option("config", config_path, "JSON config")->required();
  auto* bench = app.add_subcommand("bench", "Time mirror vs CoRV NMF steps");
  bench->add_option("config", config_path, "JSON config")->required();
  std::vector<std::string> gen_params;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic Poisson ratings CSV");
  gen->add_option("params", gen_params, "key=value pairs: users, items, rank, lambda, density");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      report(corv::run_experiment(load_with_overrides(config_path, g)));
    } else if (grid->parsed()) {
      const auto out = corv::run_grid_search(load_with_overrides(config_path, g));
      report(out);
      for (const auto& w : out.warnings)
        if (w.find("every candidate stepsize diverged") != std::string::npos)
          return fail("divergence", "grid search: " + w, out.warnings, std::nullopt, 4);
    } else if (bench->parsed()) {
      report(corv::run_benchmark(load_with_overrides(config_path, g)));
    } else if (gen->parsed()) {
      report(gen_data(gen_params, g));
    }
  } catch (const corv::ConfigError& e) {
    return fail("config", e.what(), e.issues(), std::nullopt, 2);
  } catch (const corv::ParseError& e) {
    return fail("parse", e.what(), {}, e.line(), 3);
  } catch (const corv::DataError& e) {
    return fail("data", e.what(), {}, std::nullopt, 3);
  } catch (const corv::NumericalError& e) {
    return fail("numerical", e.what(), {}, std::nullopt, 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), {}, std::nullopt, 1);
  }
  return 0;
}
