#include "corv/nmf.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "corv/errors.hpp"

namespace corv {
namespace {

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

constexpr double kZeroFloor = 1e-12;

void fill_proxy(FactorState& s, const Transform& t, bool keep_phi) {
  auto one = [&](Eigen::MatrixXd& value, Eigen::MatrixXd& phi, Eigen::MatrixXd& d,
                 Eigen::MatrixXd& r) {
    if (!keep_phi || phi.rows() != value.rows() || phi.cols() != value.cols()) {
      phi.resize(value.rows(), value.cols());
      for (Eigen::Index k = 0; k < value.size(); ++k) phi.data()[k] = t.inverse(value.data()[k]);
    }
    d.resize(value.rows(), value.cols());
    r.resize(value.rows(), value.cols());
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const TransformPoint p = t.evaluate(phi.data()[k]);
      value.data()[k] = p.value;
      d.data()[k] = p.deriv1;
      r.data()[k] = p.log_deriv_ratio;
    }
  };
  one(s.W, s.phi_W, s.dW, s.rW);
  one(s.H, s.phi_H, s.dH, s.rH);
}

[[noreturn]] void nonfinite(const char* which, Eigen::Index k) {
  throw DivergenceError(std::string("non-finite update in ") + which + " at flat index " +
                            std::to_string(k),
                        std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN());
}

}  // namespace

FactorState init_factors(std::size_t n_users, std::size_t n_items, std::size_t rank,
                         double lambda_w, double lambda_h, ChainRng& rng) {
  if (!(lambda_w > 0.0) || !(lambda_h > 0.0))
    throw ConfigError("nmf.lambda: prior rates must be positive");
  FactorState s;
  s.lambda_w = lambda_w;
  s.lambda_h = lambda_h;
  const auto I = static_cast<Eigen::Index>(n_users);
  const auto J = static_cast<Eigen::Index>(n_items);
  const auto R = static_cast<Eigen::Index>(rank);
  s.W.resize(I, R);
  s.H.resize(R, J);
  std::exponential_distribution<double> pw(lambda_w);
  std::exponential_distribution<double> ph(lambda_h);
  for (Eigen::Index k = 0; k < s.W.size(); ++k) s.W.data()[k] = pw(rng.engine());
  for (Eigen::Index k = 0; k < s.H.size(); ++k) s.H.data()[k] = ph(rng.engine());
  // An exact zero would sit on the boundary; treat it like a mirrored zero.
  for (Eigen::Index k = 0; k < s.W.size(); ++k)
    if (s.W.data()[k] == 0.0) s.W.data()[k] = kZeroFloor;
  for (Eigen::Index k = 0; k < s.H.size(); ++k)
    if (s.H.data()[k] == 0.0) s.H.data()[k] = kZeroFloor;
  return s;
}

FactorState attach_transform(FactorState state, const Transform& t) {
  if (!(t.codomain() == Interval::positive()))
    throw ConfigError("nmf transform '" + t.name() + "' must map onto (0, inf)");
  fill_proxy(state, t, true);
  return state;
}

NmfGradient nmf_stochastic_gradient(const FactorState& s, const RatingsDataset& data,
                                    std::span<const std::size_t> batch) {
  if (batch.empty()) throw ConfigError("nmf: empty minibatch");
  const double scale = static_cast<double>(data.train.size()) / static_cast<double>(batch.size());
  const Eigen::Index R = s.rank();
  NmfGradient g{Eigen::MatrixXd::Constant(s.W.rows(), R, s.lambda_w),
                Eigen::MatrixXd::Constant(R, s.H.cols(), s.lambda_h)};
  for (std::size_t k : batch) {
    const Rating& e = data.entries[k];
    if (e.split != Split::train)
      throw ConfigError("nmf: minibatch entry " + std::to_string(k) + " is not in the training split");
    const Eigen::Index i = e.user;
    const Eigen::Index j = e.item;
    double xhat = 0.0;
    for (Eigen::Index r = 0; r < R; ++r) xhat += s.W(i, r) * s.H(r, j);
    if (!(xhat > 0.0))
      throw NumericalError("nmf: non-positive rate " + std::to_string(xhat) + " at entry (" +
                           std::to_string(i) + ", " + std::to_string(j) + ")");
    const double c = scale * (e.value / xhat - 1.0);
    for (Eigen::Index r = 0; r < R; ++r) {
      g.gW(i, r) -= c * s.H(r, j);
      g.gH(r, j) -= c * s.W(i, r);
    }
  }
  return g;
}

FactorState nmf_step_mirror(FactorState s, const RatingsDataset& data,
                            std::span<const std::size_t> batch, double eps, ChainRng& rng) {
  const NmfGradient g = nmf_stochastic_gradient(s, data, batch);
  const double noise = std::sqrt(2.0 * eps);
  auto update = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& grad, const char* which) {
    double* v = m.data();
    const double* gv = grad.data();
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      double x = std::abs(v[k] - eps * gv[k] + noise * rng.normal());
      if (!std::isfinite(x)) nonfinite(which, k);
      if (x == 0.0) x = kZeroFloor;
      v[k] = x;
    }
  };
  update(s.W, g.gW, "W");
  update(s.H, g.gH, "H");
  return s;
}

FactorState nmf_step_corv(FactorState s, const RatingsDataset& data,
                          std::span<const std::size_t> batch, double eps, const Transform& t,
                          ChainRng& rng) {
  if (s.phi_W.size() != s.W.size() || s.phi_H.size() != s.H.size())
    throw ConfigError("nmf: CoRV step needs a state prepared by attach_transform");
  const NmfGradient g = nmf_stochastic_gradient(s, data, batch);
  const double noise = std::sqrt(2.0 * eps);
  auto update = [&](Eigen::MatrixXd& value, Eigen::MatrixXd& phi, Eigen::MatrixXd& d,
                    Eigen::MatrixXd& r, const Eigen::MatrixXd& grad, const char* which) {
    double* pv = phi.data();
    double* vv = value.data();
    double* dv = d.data();
    double* rv = r.data();
    const double* gv = grad.data();
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double p = pv[k] - eps * (dv[k] * gv[k] - rv[k]) + noise * rng.normal();
      if (!std::isfinite(p)) nonfinite(which, k);
      pv[k] = p;
    }
    t.evaluate_batch(pv, vv, dv, rv, static_cast<std::size_t>(value.size()));
  };
  update(s.W, s.phi_W, s.dW, s.rW, g.gW, "W");
  update(s.H, s.phi_H, s.dH, s.rH, g.gH, "H");
  return s;
}

void PredictiveAccumulator::add(const Eigen::VectorXd& predictions) {
  if (n_ == 0 && mean_.size() != predictions.size()) mean_.setZero(predictions.size());
  if (predictions.size() != mean_.size())
    throw ConfigError("predictive accumulator: prediction length mismatch");
  ++n_;
  mean_ += (predictions - mean_) / static_cast<double>(n_);
}

void PredictiveAccumulator::add(const FactorState& state, const RatingsDataset& data) {
  add(predict_entries(state, data));
}

Eigen::VectorXd predict_entries(const FactorState& s, const RatingsDataset& data) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(data.entries.size()));
  const Eigen::Index R = s.rank();
  for (std::size_t k = 0; k < data.entries.size(); ++k) {
    const Rating& e = data.entries[k];
    double x = 0.0;
    for (Eigen::Index r = 0; r < R; ++r) x += s.W(e.user, r) * s.H(r, e.item);
    out(static_cast<Eigen::Index>(k)) = x;
  }
  return out;
}

namespace {

double rmse_of(const Eigen::VectorXd& pred, const RatingsDataset& data,
               std::span<const std::size_t> split) {
  if (split.empty()) throw ConfigError("rmse: empty split");
  double sq = 0.0;
  for (std::size_t k : split) {
    const double d = pred(static_cast<Eigen::Index>(k)) - data.entries[k].value;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(split.size()));
}

}  // namespace

double predict_rmse(const PredictiveAccumulator& acc, const RatingsDataset& data,
                    std::span<const std::size_t> split) {
  if (acc.n_accumulated() == 0) throw ConfigError("rmse: accumulator is empty");
  return rmse_of(acc.mean(), data, split);
}

std::optional<std::size_t> NmfTrainResult::first_iteration_below(double level) const {
  for (const auto& p : curve)
    if (p.test_rmse <= level) return p.iteration;
  return std::nullopt;
}

NmfTrainResult train_nmf(const RatingsDataset& data, const NmfTrainOptions& o) {
  std::vector<std::string> issues;
  if (o.kind != SamplerKind::mirror_sgld && o.kind != SamplerKind::corv_sgld)
    issues.push_back("nmf.sampler.kind: must be mirror_sgld or corv_sgld");
  if (o.kind == SamplerKind::corv_sgld) {
    if (!o.transform)
      issues.push_back("nmf.sampler.transform: required for corv_sgld");
    else if (!(o.transform->codomain() == Interval::positive()))
      issues.push_back("nmf.sampler.transform: '" + o.transform->name() +
                       "' does not map onto (0, inf)");
  }
  if (!(o.stepsize > 0.0)) issues.push_back("nmf.sampler.stepsize: must be positive");
  if (o.rank == 0) issues.push_back("nmf.rank: must be positive");
  if (o.batch_size == 0 || o.batch_size > data.train.size())
    issues.push_back("nmf.batch_size: must lie in [1, training size = " +
                     std::to_string(data.train.size()) + "]");
  if (o.eval_interval == 0) issues.push_back("nmf.eval_interval: must be positive");
  if (data.test.empty() || data.validation.empty())
    issues.push_back("nmf.data: validation and test splits must be non-empty");
  if (!issues.empty()) throw ConfigError(issues);

  const auto start = std::chrono::steady_clock::now();
  ChainRng rng(derive_seed(o.seed, 1, 0));
  CounterEngine batch_engine(derive_seed(o.seed, 2, 0));
  std::uniform_int_distribution<std::size_t> pick(0, data.train.size() - 1);

  FactorState state =
      init_factors(data.n_users, data.n_items, o.rank, o.lambda_w, o.lambda_h, rng);
  const bool corv = o.kind == SamplerKind::corv_sgld;
  if (corv) state = attach_transform(std::move(state), *o.transform);

  const std::size_t burn = o.burn_in.value_or(o.n_iters / 5);
  PredictiveAccumulator acc(data.entries.size());
  NmfTrainResult result;

  auto evaluate = [&](std::size_t it) {
    Eigen::VectorXd current = predict_entries(state, data);
    if (it > 0 && it >= burn) acc.add(current);
    const Eigen::VectorXd& pred = acc.n_accumulated() > 0 ? acc.mean() : current;
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    result.curve.push_back({it, rmse_of(pred, data, data.train),
                            rmse_of(pred, data, data.validation), rmse_of(pred, data, data.test),
                            dt.count()});
  };

  evaluate(0);
  std::vector<std::size_t> batch(o.batch_size);
  try {
    for (std::size_t it = 1; it <= o.n_iters; ++it) {
      for (auto& b : batch) b = data.train[pick(batch_engine)];
      state = corv ? nmf_step_corv(std::move(state), data, batch, o.stepsize, *o.transform, rng)
                   : nmf_step_mirror(std::move(state), data, batch, o.stepsize, rng);
      if (it % o.eval_interval == 0 || it == o.n_iters) evaluate(it);
    }
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.divergence_message = e.what();
  }
  result.n_accumulated = acc.n_accumulated();
  result.final_state = std::move(state);
  return result;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_row_major(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("snapshot truncated");
  return v;
}
double get_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("snapshot truncated");
  return v;
}

Eigen::MatrixXd get_row_major(std::istream& in, std::uint64_t rows, std::uint64_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get_f64(in);
  return m;
}

constexpr char kMagic[8] = {'C', 'O', 'R', 'V', 'F', 'A', 'C', '1'};

}  // namespace

void write_snapshot(const FactorState& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write snapshot " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u64(out, static_cast<std::uint64_t>(s.W.rows()));
  put_u64(out, static_cast<std::uint64_t>(s.H.cols()));
  put_u64(out, static_cast<std::uint64_t>(s.rank()));
  put_u64(out, s.has_proxy() ? 1 : 0);
  put_f64(out, s.lambda_w);
  put_f64(out, s.lambda_h);
  put_row_major(out, s.W);
  put_row_major(out, s.H);
  if (s.has_proxy()) {
    put_row_major(out, s.phi_W);
    put_row_major(out, s.phi_H);
  }
  if (!out) throw DataError("failed writing snapshot " + path.string());
}

FactorState read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError(path.string() + " is not a factor snapshot");
  const std::uint64_t I = get_u64(in);
  const std::uint64_t J = get_u64(in);
  const std::uint64_t R = get_u64(in);
  const std::uint64_t proxy = get_u64(in);
  if (I > (1u << 30) || J > (1u << 30) || R > (1u << 20) || proxy > 1)
    throw DataError("snapshot header is corrupt");
  FactorState s;
  s.lambda_w = get_f64(in);
  s.lambda_h = get_f64(in);
  s.W = get_row_major(in, I, R);
  s.H = get_row_major(in, R, J);
  if (proxy) {
    s.phi_W = get_row_major(in, I, R);
    s.phi_H = get_row_major(in, R, J);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("snapshot has trailing bytes");
  return s;
}

}  // namespace corv
