#include "corv/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "corv/errors.hpp"

namespace corv {

using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::fig1_density: return "fig1_density";
    case ExperimentKind::fig2_weak_error: return "fig2_weak_error";
    case ExperimentKind::theorem1_instability: return "theorem1_instability";
    case ExperimentKind::nmf_train: return "nmf_train";
    case ExperimentKind::benchmark_overhead: return "benchmark_overhead";
  }
  return "?";
}

namespace {

// Reads typed fields out of a JSON object, recording problems instead of
// stopping at the first one.
class Reader {
 public:
  std::vector<std::string> issues;

  void fail(const std::string& path, const std::string& what) { issues.push_back(path + ": " + what); }

  bool object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    fail(path, "expected an object");
    return false;
  }

  void allowed_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
      if (!ok.count(k)) fail(join(path, k), "unknown field");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  const json* field(const json& j, const std::string& key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }

  void number(const json& j, const std::string& path, const char* key, double& out) {
    if (const json* v = field(j, key)) {
      if (v->is_number())
        out = v->get<double>();
      else
        fail(join(path, key), "expected a number");
    }
  }

  void unsigned_int(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
    if (const json* v = field(j, key)) {
      if (v->is_number_unsigned())
        out = v->get<std::uint64_t>();
      else if (v->is_number_integer())
        fail(join(path, key), "must be non-negative");
      else
        fail(join(path, key), "expected a non-negative integer");
    }
  }

  void optional_unsigned(const json& j, const std::string& path, const char* key,
                         std::optional<std::uint64_t>& out) {
    if (const json* v = field(j, key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      std::uint64_t x = 0;
      unsigned_int(j, path, key, x);
      out = x;
    }
  }

  void string(const json& j, const std::string& path, const char* key, std::string& out) {
    if (const json* v = field(j, key)) {
      if (v->is_string())
        out = v->get<std::string>();
      else
        fail(join(path, key), "expected a string");
    }
  }

  void boolean(const json& j, const std::string& path, const char* key, bool& out) {
    if (const json* v = field(j, key)) {
      if (v->is_boolean())
        out = v->get<bool>();
      else
        fail(join(path, key), "expected true or false");
    }
  }

  template <typename T, typename Check>
  void array(const json& j, const std::string& path, const char* key, std::vector<T>& out,
             Check check, const char* expected) {
    const json* v = field(j, key);
    if (!v) return;
    if (!v->is_array()) {
      fail(join(path, key), "expected an array");
      return;
    }
    std::vector<T> tmp;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!check(e)) {
        fail(join(path, key) + "[" + std::to_string(i) + "]", expected);
        continue;
      }
      tmp.push_back(e.get<T>());
    }
    out = std::move(tmp);
  }
};

bool is_num(const json& e) { return e.is_number(); }
bool is_uint(const json& e) { return e.is_number_unsigned(); }
bool is_int(const json& e) { return e.is_number_integer(); }
bool is_str(const json& e) { return e.is_string(); }

const std::vector<std::string> kSamplerKinds = {"sgld", "mirror_sgld", "ito_lmc", "corv_sgld"};

bool one_of(const std::string& v, const std::vector<std::string>& options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

std::string list(const std::vector<std::string>& options) {
  std::string out;
  for (const auto& o : options) out += (out.empty() ? "" : ", ") + o;
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // byte offset -> line number
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError(std::string("invalid JSON: ") + e.what(), line);
  }

  Reader r;
  ExperimentConfig c;
  if (!r.object(root, "(root)")) throw ConfigError(r.issues);
  r.allowed_keys(root, "", {"experiment", "seed", "threads", "output_dir", "target", "oracle",
                            "samplers", "fig1", "weak_error", "instability", "grid_search",
                            "nmf", "benchmark"});

  std::string kind;
  if (!r.field(root, "experiment")) r.fail("experiment", "missing field");
  r.string(root, "", "experiment", kind);
  const std::vector<std::string> kinds = {"fig1_density", "fig2_weak_error",
                                          "theorem1_instability", "nmf_train",
                                          "benchmark_overhead"};
  if (!kind.empty()) {
    if (kind == "fig1_density") c.kind = ExperimentKind::fig1_density;
    else if (kind == "fig2_weak_error") c.kind = ExperimentKind::fig2_weak_error;
    else if (kind == "theorem1_instability") c.kind = ExperimentKind::theorem1_instability;
    else if (kind == "nmf_train") c.kind = ExperimentKind::nmf_train;
    else if (kind == "benchmark_overhead") c.kind = ExperimentKind::benchmark_overhead;
    else r.fail("experiment", "unknown experiment '" + kind + "' (expected " + list(kinds) + ")");
  }
  r.unsigned_int(root, "", "seed", c.seed);
  r.unsigned_int(root, "", "threads", c.threads);
  r.string(root, "", "output_dir", c.output_dir);

  if (const json* t = r.field(root, "target"); t && r.object(*t, "target")) {
    r.allowed_keys(*t, "target", {"name", "params"});
    r.string(*t, "target", "name", c.target.name);
    c.target.params.clear();
    if (const json* p = r.field(*t, "params"); p && r.object(*p, "target.params")) {
      for (const auto& [k, v] : p->items()) {
        if (v.is_number())
          c.target.params[k] = v.get<double>();
        else
          r.fail("target.params." + k, "expected a number");
      }
    }
  }

  if (const json* o = r.field(root, "oracle"); o && r.object(*o, "oracle")) {
    r.allowed_keys(*o, "oracle", {"mode", "noise_std"});
    r.string(*o, "oracle", "mode", c.oracle.mode);
    r.number(*o, "oracle", "noise_std", c.oracle.noise_std);
  }
  if (c.oracle.mode != "exact" && c.oracle.mode != "additive_noise")
    r.fail("oracle.mode", "unknown mode '" + c.oracle.mode + "' (expected exact, additive_noise)");

  if (const json* s = r.field(root, "samplers")) {
    if (!s->is_array()) {
      r.fail("samplers", "expected an array");
    } else {
      for (std::size_t i = 0; i < s->size(); ++i) {
        const std::string path = "samplers[" + std::to_string(i) + "]";
        const json& e = (*s)[i];
        if (!r.object(e, path)) continue;
        r.allowed_keys(e, path,
                       {"kind", "transform", "stepsize", "burn_in", "thinning", "initial_phi"});
        SamplerConfig sc;
        r.string(e, path, "kind", sc.kind);
        if (!one_of(sc.kind, kSamplerKinds))
          r.fail(path + ".kind",
                 "unknown sampler kind '" + sc.kind + "' (expected " + list(kSamplerKinds) + ")");
        if (const json* tr = r.field(e, "transform")) {
          if (tr->is_string()) {
            sc.transform = tr->get<std::string>();
            if (!one_of(*sc.transform, Transform::catalog_names()))
              r.fail(path + ".transform", "unknown transform '" + *sc.transform + "' (expected " +
                                              list(Transform::catalog_names()) + ")");
          } else if (!tr->is_null()) {
            r.fail(path + ".transform", "expected a string");
          }
        }
        r.number(e, path, "stepsize", sc.stepsize);
        if (!(sc.stepsize > 0.0)) r.fail(path + ".stepsize", "must be positive");
        r.optional_unsigned(e, path, "burn_in", sc.burn_in);
        r.unsigned_int(e, path, "thinning", sc.thinning);
        if (sc.thinning == 0) r.fail(path + ".thinning", "must be >= 1");
        r.number(e, path, "initial_phi", sc.initial_phi);
        c.samplers.push_back(sc);
      }
    }
  }

  if (const json* f = r.field(root, "fig1"); f && r.object(*f, "fig1")) {
    r.allowed_keys(*f, "fig1", {"n_samples", "n_bins"});
    r.unsigned_int(*f, "fig1", "n_samples", c.fig1.n_samples);
    r.unsigned_int(*f, "fig1", "n_bins", c.fig1.n_bins);
  }
  if (c.fig1.n_samples == 0) r.fail("fig1.n_samples", "must be positive");
  if (c.fig1.n_bins < 10) r.fail("fig1.n_bins", "must be >= 10");

  if (const json* w = r.field(root, "weak_error"); w && r.object(*w, "weak_error")) {
    r.allowed_keys(*w, "weak_error", {"horizon", "stepsizes", "n_replicates"});
    r.number(*w, "weak_error", "horizon", c.weak_error.horizon);
    r.array(*w, "weak_error", "stepsizes", c.weak_error.stepsizes, is_num, "expected a number");
    r.unsigned_int(*w, "weak_error", "n_replicates", c.weak_error.n_replicates);
  }
  if (!(c.weak_error.horizon > 0.0)) r.fail("weak_error.horizon", "must be positive");
  if (c.weak_error.n_replicates < 2) r.fail("weak_error.n_replicates", "must be >= 2");
  for (std::size_t i = 0; i < c.weak_error.stepsizes.size(); ++i) {
    if (!(c.weak_error.stepsizes[i] > 0.0))
      r.fail("weak_error.stepsizes[" + std::to_string(i) + "]", "must be positive");
    if (i > 0 && !(c.weak_error.stepsizes[i] < c.weak_error.stepsizes[i - 1]))
      r.fail("weak_error.stepsizes", "must be strictly decreasing");
  }

  if (const json* t = r.field(root, "instability"); t && r.object(*t, "instability")) {
    r.allowed_keys(*t, "instability", {"stepsize", "ks", "n_trials"});
    r.number(*t, "instability", "stepsize", c.instability.stepsize);
    r.array(*t, "instability", "ks", c.instability.ks, is_int, "expected an integer");
    r.unsigned_int(*t, "instability", "n_trials", c.instability.n_trials);
  }
  if (!(c.instability.stepsize > 0.0)) r.fail("instability.stepsize", "must be positive");
  if (c.instability.n_trials == 0) r.fail("instability.n_trials", "must be positive");
  for (std::size_t i = 0; i < c.instability.ks.size(); ++i)
    if (c.instability.ks[i] < 1 || c.instability.ks[i] > 300)
      r.fail("instability.ks[" + std::to_string(i) + "]", "must lie in [1, 300]");

  if (const json* g = r.field(root, "grid_search"); g && r.object(*g, "grid_search")) {
    r.allowed_keys(*g, "grid_search", {"stepsizes", "objective"});
    r.array(*g, "grid_search", "stepsizes", c.grid_search.stepsizes, is_num, "expected a number");
    r.string(*g, "grid_search", "objective", c.grid_search.objective);
  }
  if (c.grid_search.objective != "tv_distance" && c.grid_search.objective != "validation_rmse")
    r.fail("grid_search.objective", "unknown objective '" + c.grid_search.objective +
                                        "' (expected tv_distance, validation_rmse)");
  for (std::size_t i = 0; i < c.grid_search.stepsizes.size(); ++i)
    if (!(c.grid_search.stepsizes[i] > 0.0))
      r.fail("grid_search.stepsizes[" + std::to_string(i) + "]", "must be positive");

  if (const json* n = r.field(root, "nmf"); n && r.object(*n, "nmf")) {
    r.allowed_keys(*n, "nmf", {"data", "rank", "lambda_w", "lambda_h", "batch_size", "n_iters",
                               "eval_interval", "burn_in", "write_snapshots"});
    if (const json* d = r.field(*n, "data"); d && r.object(*d, "nmf.data")) {
      r.allowed_keys(*d, "nmf.data", {"source", "n_users", "n_items", "rank", "lambda", "density",
                                      "path", "format"});
      r.string(*d, "nmf.data", "source", c.nmf.data.source);
      r.unsigned_int(*d, "nmf.data", "n_users", c.nmf.data.n_users);
      r.unsigned_int(*d, "nmf.data", "n_items", c.nmf.data.n_items);
      r.unsigned_int(*d, "nmf.data", "rank", c.nmf.data.rank);
      r.number(*d, "nmf.data", "lambda", c.nmf.data.lambda);
      r.number(*d, "nmf.data", "density", c.nmf.data.density);
      r.string(*d, "nmf.data", "path", c.nmf.data.path);
      r.string(*d, "nmf.data", "format", c.nmf.data.format);
    }
    r.unsigned_int(*n, "nmf", "rank", c.nmf.rank);
    r.number(*n, "nmf", "lambda_w", c.nmf.lambda_w);
    r.number(*n, "nmf", "lambda_h", c.nmf.lambda_h);
    r.unsigned_int(*n, "nmf", "batch_size", c.nmf.batch_size);
    r.unsigned_int(*n, "nmf", "n_iters", c.nmf.n_iters);
    r.unsigned_int(*n, "nmf", "eval_interval", c.nmf.eval_interval);
    r.optional_unsigned(*n, "nmf", "burn_in", c.nmf.burn_in);
    r.boolean(*n, "nmf", "write_snapshots", c.nmf.write_snapshots);
  }
  if (c.nmf.data.source != "synthetic" && c.nmf.data.source != "file")
    r.fail("nmf.data.source", "expected synthetic or file");
  if (c.nmf.data.source == "file" && c.nmf.data.path.empty())
    r.fail("nmf.data.path", "required when source is file");
  if (c.nmf.data.format != "ml_tab" && c.nmf.data.format != "csv_header")
    r.fail("nmf.data.format", "expected ml_tab or csv_header");
  if (c.nmf.data.n_users == 0) r.fail("nmf.data.n_users", "must be positive");
  if (c.nmf.data.n_items == 0) r.fail("nmf.data.n_items", "must be positive");
  if (!(c.nmf.data.lambda > 0.0)) r.fail("nmf.data.lambda", "must be positive");
  if (!(c.nmf.data.density > 0.0 && c.nmf.data.density <= 1.0))
    r.fail("nmf.data.density", "must lie in (0, 1]");
  if (c.nmf.rank == 0) r.fail("nmf.rank", "must be positive");
  if (!(c.nmf.lambda_w > 0.0)) r.fail("nmf.lambda_w", "must be positive");
  if (!(c.nmf.lambda_h > 0.0)) r.fail("nmf.lambda_h", "must be positive");
  if (c.nmf.batch_size == 0) r.fail("nmf.batch_size", "must be positive");
  if (c.nmf.eval_interval == 0) r.fail("nmf.eval_interval", "must be positive");

  if (const json* b = r.field(root, "benchmark"); b && r.object(*b, "benchmark")) {
    r.allowed_keys(*b, "benchmark", {"batch_sizes", "rank", "n_steps", "repeats", "transforms", "stepsize"});
    r.number(*b, "benchmark", "stepsize", c.benchmark.stepsize);
    r.array(*b, "benchmark", "batch_sizes", c.benchmark.batch_sizes, is_uint,
            "expected a non-negative integer");
    r.unsigned_int(*b, "benchmark", "rank", c.benchmark.rank);
    r.unsigned_int(*b, "benchmark", "n_steps", c.benchmark.n_steps);
    r.unsigned_int(*b, "benchmark", "repeats", c.benchmark.repeats);
    r.array(*b, "benchmark", "transforms", c.benchmark.transforms, is_str, "expected a string");
  }
  for (std::size_t i = 0; i < c.benchmark.transforms.size(); ++i) {
    const auto& t = c.benchmark.transforms[i];
    if (t != "exp" && t != "softplus" && t != "icll")
      r.fail("benchmark.transforms[" + std::to_string(i) + "]",
             "'" + t + "' does not map onto (0, inf) (expected exp, softplus, icll)");
  }
  if (!(c.benchmark.stepsize > 0.0)) r.fail("benchmark.stepsize", "must be positive");
  if (c.benchmark.rank == 0) r.fail("benchmark.rank", "must be positive");
  if (c.benchmark.n_steps == 0) r.fail("benchmark.n_steps", "must be positive");
  if (c.benchmark.repeats == 0) r.fail("benchmark.repeats", "must be positive");
  for (std::size_t i = 0; i < c.benchmark.batch_sizes.size(); ++i)
    if (c.benchmark.batch_sizes[i] == 0)
      r.fail("benchmark.batch_sizes[" + std::to_string(i) + "]", "must be positive");

  if (!r.issues.empty()) throw ConfigError(r.issues);
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  json root;
  root["experiment"] = to_string(c.kind);
  root["seed"] = c.seed;
  root["threads"] = c.threads;
  root["output_dir"] = c.output_dir;
  json params = json::object();
  for (const auto& [k, v] : c.target.params) params[k] = v;
  root["target"] = {{"name", c.target.name}, {"params", params}};
  root["oracle"] = {{"mode", c.oracle.mode}, {"noise_std", c.oracle.noise_std}};
  json samplers = json::array();
  for (const auto& s : c.samplers) {
    json e = {{"kind", s.kind},
              {"stepsize", s.stepsize},
              {"thinning", s.thinning},
              {"initial_phi", s.initial_phi}};
    e["transform"] = s.transform ? json(*s.transform) : json(nullptr);
    e["burn_in"] = s.burn_in ? json(*s.burn_in) : json(nullptr);
    samplers.push_back(e);
  }
  root["samplers"] = samplers;
  root["fig1"] = {{"n_samples", c.fig1.n_samples}, {"n_bins", c.fig1.n_bins}};
  root["weak_error"] = {{"horizon", c.weak_error.horizon},
                        {"stepsizes", c.weak_error.stepsizes},
                        {"n_replicates", c.weak_error.n_replicates}};
  root["instability"] = {{"stepsize", c.instability.stepsize},
                         {"ks", c.instability.ks},
                         {"n_trials", c.instability.n_trials}};
  root["grid_search"] = {{"stepsizes", c.grid_search.stepsizes},
                         {"objective", c.grid_search.objective}};
  root["nmf"] = {{"data",
                  {{"source", c.nmf.data.source},
                   {"n_users", c.nmf.data.n_users},
                   {"n_items", c.nmf.data.n_items},
                   {"rank", c.nmf.data.rank},
                   {"lambda", c.nmf.data.lambda},
                   {"density", c.nmf.data.density},
                   {"path", c.nmf.data.path},
                   {"format", c.nmf.data.format}}},
                 {"rank", c.nmf.rank},
                 {"lambda_w", c.nmf.lambda_w},
                 {"lambda_h", c.nmf.lambda_h},
                 {"batch_size", c.nmf.batch_size},
                 {"n_iters", c.nmf.n_iters},
                 {"eval_interval", c.nmf.eval_interval},
                 {"burn_in", c.nmf.burn_in ? json(*c.nmf.burn_in) : json(nullptr)},
                 {"write_snapshots", c.nmf.write_snapshots}};
  root["benchmark"] = {{"batch_sizes", c.benchmark.batch_sizes},
                       {"rank", c.benchmark.rank},
                       {"n_steps", c.benchmark.n_steps},
                       {"repeats", c.benchmark.repeats},
                       {"transforms", c.benchmark.transforms},
                       {"stepsize", c.benchmark.stepsize}};
  return root.dump(2) + "\n";
}

TargetDensity build_target(const TargetConfig& config) {
  try {
    return TargetDensity::make(config.name, config.params);
  } catch (const ConfigError& e) {
    std::vector<std::string> issues;
    for (const auto& i : e.issues()) issues.push_back("target: " + i);
    throw ConfigError(issues);
  }
}

GradientOracle build_oracle(const ExperimentConfig& config) {
  const OracleMode mode =
      config.oracle.mode == "additive_noise" ? OracleMode::additive_noise : OracleMode::exact;
  return GradientOracle(build_target(config.target), mode, config.oracle.noise_std);
}

SamplerSpec build_sampler(const SamplerConfig& config, const TargetDensity& target) {
  SamplerSpec spec;
  spec.kind = parse_sampler_kind(config.kind);
  if (config.transform) spec.transform = Transform::make(*config.transform).fitted_to(target.domain());
  spec.stepsize = config.stepsize;
  spec.burn_in = config.burn_in;
  spec.thinning = config.thinning;
  spec.initial_phi = config.initial_phi;
  spec.validate(target);
  return spec;
}

void validate_config(const ExperimentConfig& c) {
  std::vector<std::string> issues;
  auto absorb = [&](const std::string& prefix, const ConfigError& e) {
    for (const auto& i : e.issues()) issues.push_back(prefix.empty() ? i : prefix + ": " + i);
  };

  const bool scalar = c.kind == ExperimentKind::fig1_density ||
                      c.kind == ExperimentKind::fig2_weak_error;
  std::optional<TargetDensity> target;
  if (c.kind != ExperimentKind::nmf_train && c.kind != ExperimentKind::benchmark_overhead) {
    try {
      target = build_target(c.target);
    } catch (const ConfigError& e) {
      absorb("", e);
    }
    try {
      build_oracle(c);
    } catch (const ConfigError& e) {
      if (target) absorb("oracle", e);
    }
  }

  if (scalar || c.kind == ExperimentKind::nmf_train) {
    if (c.samplers.empty()) issues.push_back("samplers: at least one sampler is required");
  }
  for (std::size_t i = 0; i < c.samplers.size(); ++i) {
    const std::string path = "samplers[" + std::to_string(i) + "]";
    const SamplerConfig& s = c.samplers[i];
    if (c.kind == ExperimentKind::nmf_train) {
      if (s.kind != "mirror_sgld" && s.kind != "corv_sgld")
        issues.push_back(path + ".kind: nmf_train supports mirror_sgld and corv_sgld");
      if (s.kind == "corv_sgld" && (!s.transform || (*s.transform != "exp" &&
                                                      *s.transform != "softplus" &&
                                                      *s.transform != "icll")))
        issues.push_back(path + ".transform: nmf CoRV needs exp, softplus or icll");
      continue;
    }
    if (!target) continue;
    try {
      build_sampler(s, *target);
    } catch (const ConfigError& e) {
      absorb(path, e);
    }
  }
  if (c.kind == ExperimentKind::theorem1_instability && target &&
      !(target->domain() == Interval::unit()))
    issues.push_back("target: theorem1_instability needs a target on (0, 1)");
  if (c.kind == ExperimentKind::fig1_density && target && !target->has_pdf())
    issues.push_back("target: fig1_density needs a target with a normalised pdf");
  if (!issues.empty()) throw ConfigError(issues);
}

}  // namespace corv
