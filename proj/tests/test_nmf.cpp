#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "corv/errors.hpp"
#include "corv/nmf.hpp"
#include "corv/sampler.hpp"

using namespace corv;

namespace {

RatingsDataset single_entry(double x) {
  RatingsDataset d;
  d.n_users = 1;
  d.n_items = 1;
  d.entries = {{0, 0, x, Split::train}};
  d.train = {0};
  return d;
}

FactorState scalar_state(double w, double h) {
  FactorState s;
  s.W = Eigen::MatrixXd::Constant(1, 1, w);
  s.H = Eigen::MatrixXd::Constant(1, 1, h);
  return s;
}

RatingsDataset small_data(std::uint64_t seed, std::size_t rank = 3) {
  SyntheticParams p;
  p.n_users = 20;
  p.n_items = 15;
  p.rank = rank;
  p.seed = seed;
  return generate_synthetic(p);
}

// minibatch potential: scale * sum (xhat - x log xhat) + priors
double batch_potential(const FactorState& s, const RatingsDataset& d, const std::vector<std::size_t>& batch) {
  const double scale = double(d.train.size()) / batch.size();
  double u = s.lambda_w * s.W.sum() + s.lambda_h * s.H.sum();
  for (auto k : batch) {
    const auto& e = d.entries[k];
    const double xhat = s.W.row(e.user).dot(s.H.col(e.item));
    u += scale * (xhat - e.value * std::log(xhat));
  }
  return u;
}

}  // namespace

TEST_CASE("gradient: hand-evaluated single entry") {
  const auto d = single_entry(12);
  const auto g = nmf_stochastic_gradient(scalar_state(2, 3), d, std::vector<std::size_t>{0});
  CHECK(g.gW(0, 0) == -2.0);
  CHECK(g.gH(0, 0) == -1.0);
}

TEST_CASE("gradient: perfect reconstruction leaves the prior term") {
  const auto d = single_entry(6);
  auto s = scalar_state(2, 3);
  s.lambda_w = 0.7;
  s.lambda_h = 1.3;
  const auto g = nmf_stochastic_gradient(s, d, std::vector<std::size_t>{0});
  CHECK(g.gW(0, 0) == 0.7);
  CHECK(g.gH(0, 0) == 1.3);
}

TEST_CASE("gradient: untouched rows get the prior only, and it matches finite differences") {
  const auto d = small_data(1);
  ChainRng rng(2);
  const auto s = init_factors(d.n_users, d.n_items, 3, 1.0, 1.5, rng);
  std::vector<std::size_t> batch;
  for (auto k : d.train)
    if (d.entries[k].user != 4) batch.push_back(k);
  batch.resize(60);
  const auto g = nmf_stochastic_gradient(s, d, batch);
  for (int r = 0; r < 3; ++r) CHECK(g.gW(4, r) == 1.0);

  const double h = 1e-6;
  for (Eigen::Index k = 0; k < s.W.size(); k += 7) {
    auto p = s, m = s;
    p.W.data()[k] += h;
    m.W.data()[k] -= h;
    const double fd = (batch_potential(p, d, batch) - batch_potential(m, d, batch)) / (2 * h);
    CHECK(g.gW.data()[k] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (Eigen::Index k = 0; k < s.H.size(); k += 5) {
    auto p = s, m = s;
    p.H.data()[k] += h;
    m.H.data()[k] -= h;
    const double fd = (batch_potential(p, d, batch) - batch_potential(m, d, batch)) / (2 * h);
    CHECK(g.gH.data()[k] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("gradient errors") {
  auto d = single_entry(3);
  CHECK_THROWS_AS(nmf_stochastic_gradient(scalar_state(1, 1), d, std::vector<std::size_t>{}), ConfigError);
  CHECK_THROWS_AS(nmf_stochastic_gradient(scalar_state(0, 1), d, std::vector<std::size_t>{0}), NumericalError);
  d.entries[0].split = Split::test;
  CHECK_THROWS_AS(nmf_stochastic_gradient(scalar_state(1, 1), d, std::vector<std::size_t>{0}), ConfigError);
}

TEST_CASE("minibatch gradients are unbiased") {
  const auto d = small_data(3);
  ChainRng rng(4);
  const auto s = init_factors(d.n_users, d.n_items, 3, 1.0, 1.0, rng);
  const auto full = nmf_stochastic_gradient(s, d, d.train);
  const int n = 10000;
  const std::size_t B = 20;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(1, 3), sum2 = Eigen::MatrixXd::Zero(1, 3);
  std::vector<std::size_t> batch(B);
  for (int t = 0; t < n; ++t) {
    for (auto& b : batch) b = d.train[rng.below(d.train.size())];
    const auto g = nmf_stochastic_gradient(s, d, batch);
    sum += g.gW.row(7);
    sum2 += g.gW.row(7).cwiseProduct(g.gW.row(7));
  }
  for (int r = 0; r < 3; ++r) {
    const double mean = sum(0, r) / n;
    const double se = std::sqrt((sum2(0, r) / n - mean * mean) / n);
    CHECK(std::abs(mean - full.gW(7, r)) < 3 * se);
  }
}

TEST_CASE("mirror step") {
  const auto d = single_entry(6);
  ChainRng rng(1);
  const auto s = scalar_state(2, 3);
  const auto same = nmf_step_mirror(s, d, std::vector<std::size_t>{0}, 0.0, rng);
  CHECK(same.W(0, 0) == 2.0);
  CHECK(same.H(0, 0) == 3.0);

  // a proposal of -0.4 is folded to 0.4: W = 0.1, gradient 1 (X = 0 entry), eps = 0.5
  auto zero = single_entry(0);
  ChainRng r2(5);
  ChainRng probe = r2;
  const double eta = probe.normal();
  auto st = scalar_state(0.1, 1.0);
  const auto next = nmf_step_mirror(st, zero, std::vector<std::size_t>{0}, 0.5, r2);
  CHECK(next.W(0, 0) == doctest::Approx(std::abs(0.1 - 0.5 * 2.0 + eta)));
}

TEST_CASE("corv step") {
  const auto d = single_entry(6);
  const Transform e = Transform::make("exp");
  auto s = attach_transform(scalar_state(2, 3), e);
  CHECK(s.rW(0, 0) == 1.0);
  CHECK(s.phi_W(0, 0) == doctest::Approx(std::log(2.0)));
  ChainRng rng(1);
  const auto same = nmf_step_corv(s, d, std::vector<std::size_t>{0}, 0.0, e, rng);
  CHECK(same.phi_W == s.phi_W);
  CHECK(same.W == s.W);

  const Transform sp = Transform::make("softplus");
  CHECK(sp.deriv1(-20.0) < 3e-9);
  CHECK(sp.log_deriv_ratio(-20.0) == doctest::Approx(1.0 - sp.deriv1(-20.0)).epsilon(1e-15));
  CHECK_THROWS_AS(attach_transform(scalar_state(1, 1), Transform::make("sigmoid")), ConfigError);
  CHECK_THROWS_AS(nmf_step_corv(scalar_state(1, 1), d, std::vector<std::size_t>{0}, 0.1, e, rng), ConfigError);
}

TEST_CASE("1x1 corv step matches the scalar sampler bitwise") {
  const double x = 5.0, lambda = 1.0;
  const auto d = single_entry(x);
  for (const char* name : {"exp", "softplus", "icll"}) {
    CAPTURE(name);
    const Transform t = Transform::make(name);
    auto s = attach_transform(scalar_state(0.8, 1.7), t);
    ChainRng rng(77);
    ChainState sw;
    sw.rng = ChainRng(77);
    sw.stepsize = 0.01;
    for (int it = 0; it < 200; ++it) {
      const double w = s.W(0, 0), h = s.H(0, 0);
      // W sees H at the old state and vice versa
      const auto tw = TargetDensity::custom("w", Interval::positive(), [](double) { return 0.0; },
                                            [=](double v) { return lambda - (x / (v * h) - 1.0) * h; });
      const auto th = TargetDensity::custom("h", Interval::positive(), [](double) { return 0.0; },
                                            [=](double v) { return lambda - (x / (w * v) - 1.0) * w; });
      sw.phi = s.phi_W(0, 0);
      sw.theta = w;
      sw = step_corv(sw, GradientOracle(tw), t);
      ChainState sh = sw;
      sh.phi = s.phi_H(0, 0);
      sh.theta = h;
      sh = step_corv(sh, GradientOracle(th), t);
      sw.rng = sh.rng;

      s = nmf_step_corv(s, d, std::vector<std::size_t>{0}, 0.01, t, rng);
      REQUIRE(s.phi_W(0, 0) == sw.phi);
      REQUIRE(s.W(0, 0) == sw.theta);
      REQUIRE(s.phi_H(0, 0) == sh.phi);
      REQUIRE(s.H(0, 0) == sh.theta);
    }
  }
}

TEST_CASE("positivity over a long fuzz run") {
  const auto d = small_data(9);
  std::vector<std::size_t> batch(30);
  for (const char* kind : {"mirror", "exp", "softplus", "icll"}) {
    CAPTURE(kind);
    ChainRng rng(12);
    const bool mirror = std::string(kind) == "mirror";
    FactorState s = init_factors(d.n_users, d.n_items, 3, 1.0, 1.0, rng);
    std::optional<Transform> t;
    if (!mirror) {
      t = Transform::make(kind);
      s = attach_transform(std::move(s), *t);
    }
    for (int it = 0; it < 10000; ++it) {
      for (auto& b : batch) b = d.train[rng.below(d.train.size())];
      s = mirror ? nmf_step_mirror(std::move(s), d, batch, 2e-3, rng)
                 : nmf_step_corv(std::move(s), d, batch, 2e-3, *t, rng);
      if (mirror) {
        REQUIRE(s.W.minCoeff() > 0.0);
        REQUIRE(s.H.minCoeff() > 0.0);
      } else {
        REQUIRE(s.W.minCoeff() > 0.0);
        REQUIRE(s.H.minCoeff() > 0.0);
        if (it % 1000 == 0) {
          for (Eigen::Index k = 0; k < s.W.size(); ++k) REQUIRE(s.W.data()[k] == t->eval(s.phi_W.data()[k]));
          for (Eigen::Index k = 0; k < s.H.size(); ++k) REQUIRE(s.H.data()[k] == t->eval(s.phi_H.data()[k]));
        }
      }
    }
  }
}

TEST_CASE("predictive accumulator and rmse") {
  RatingsDataset d;
  d.n_users = 1;
  d.n_items = 2;
  d.entries = {{0, 0, 0.0, Split::test}, {0, 1, 2.0, Split::test}};
  d.test = {0, 1};
  PredictiveAccumulator acc(2);
  CHECK_THROWS_AS(predict_rmse(acc, d, d.test), ConfigError);
  const double c = 0.7;
  acc.add(Eigen::VectorXd::Constant(2, c));
  CHECK(predict_rmse(acc, d, d.test) == doctest::Approx(std::sqrt((c * c + (c - 2) * (c - 2)) / 2)));
  CHECK_THROWS_AS(predict_rmse(acc, d, std::vector<std::size_t>{}), ConfigError);

  // running mean against a direct average
  ChainRng rng(3);
  PredictiveAccumulator run(50);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(50);
  for (int k = 1; k <= 300; ++k) {
    Eigen::VectorXd p(50);
    for (auto& v : p) v = 10 * rng.uniform();
    run.add(p);
    total += p;
  }
  CHECK(run.n_accumulated() == 300);
  CHECK(((run.mean() - total / 300).cwiseAbs().array() <= 1e-12 * (total / 300).cwiseAbs().array()).all());

  // two factor samples: prediction from the average of the products
  const auto data = small_data(5);
  ChainRng r2(6);
  const auto A = init_factors(data.n_users, data.n_items, 3, 1, 1, r2);
  const auto B = init_factors(data.n_users, data.n_items, 3, 1, 1, r2);
  PredictiveAccumulator two(data.entries.size());
  two.add(A, data);
  two.add(B, data);
  const Eigen::MatrixXd avg = 0.5 * (A.W * A.H + B.W * B.H);
  for (std::size_t k = 0; k < data.entries.size(); ++k) {
    const auto& e = data.entries[k];
    CHECK(two.mean()(k) == doctest::Approx(avg(e.user, e.item)).epsilon(1e-13));
  }

  // exact generating means against their own noiseless entries
  auto clean = data;
  for (auto& e : clean.entries) e.value = clean.generating_mean(e.user, e.item);
  PredictiveAccumulator exact(clean.entries.size());
  Eigen::VectorXd means(clean.entries.size());
  for (std::size_t k = 0; k < clean.entries.size(); ++k) means(k) = clean.entries[k].value;
  exact.add(means);
  CHECK(predict_rmse(exact, clean, clean.test) == 0.0);
}

TEST_CASE("training bookkeeping") {
  const auto d = small_data(2);
  NmfTrainOptions o;
  o.kind = SamplerKind::corv_sgld;
  o.transform = Transform::make("softplus");
  o.rank = 3;
  o.batch_size = 50;
  o.n_iters = 0;
  const auto zero = train_nmf(d, o);
  REQUIRE(zero.curve.size() == 1);
  CHECK(zero.curve[0].iteration == 0);
  CHECK(zero.n_accumulated == 0);

  o.n_iters = 1000;
  o.eval_interval = 100;
  o.seed = 8;
  const auto a = train_nmf(d, o);
  const auto b = train_nmf(d, o);
  CHECK(a.curve.size() == 11);
  CHECK(a.n_accumulated == 9);  // iterations 200..1000
  CHECK_FALSE(a.diverged);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].test_rmse == b.curve[i].test_rmse);
    CHECK(a.curve[i].train_rmse == b.curve[i].train_rmse);
  }
  CHECK(a.final_state.W == b.final_state.W);

  o.batch_size = d.train.size() + 1;
  CHECK_THROWS_AS(train_nmf(d, o), ConfigError);
  o.batch_size = 50;
  o.transform = Transform::make("sigmoid");
  CHECK_THROWS_AS(train_nmf(d, o), ConfigError);
  o.kind = SamplerKind::ito_lmc;
  CHECK_THROWS_AS(train_nmf(d, o), ConfigError);
}

TEST_CASE("divergence is reported, not thrown") {
  const auto d = small_data(2);
  NmfTrainOptions o;
  o.kind = SamplerKind::corv_sgld;
  o.transform = Transform::make("exp");
  o.rank = 3;
  o.batch_size = 50;
  o.n_iters = 500;
  o.stepsize = 50.0;
  const auto r = train_nmf(d, o);
  CHECK(r.diverged);
  CHECK_FALSE(r.divergence_message.empty());
}

TEST_CASE("mirror sgld makes progress at a small stepsize") {
  // the 1/W pull near the boundary makes mirror steps explode from about
  // 1e-4 upwards on this data, so only a small stepsize is usable
  SyntheticParams p;
  p.rank = 1;
  p.seed = 4;
  const auto d = generate_synthetic(p);
  NmfTrainOptions o;
  o.kind = SamplerKind::mirror_sgld;
  o.rank = 1;
  o.n_iters = 2000;
  o.stepsize = 3e-5;
  o.seed = 1;
  const auto r = train_nmf(d, o);
  REQUIRE_FALSE(r.diverged);
  MESSAGE("test rmse " << r.curve.front().test_rmse << " -> " << r.curve.back().test_rmse);
  CHECK(r.curve.back().test_rmse < 0.6 * r.curve.front().test_rmse);
}

TEST_CASE("corv softplus fits rank-1 synthetic data") {
  SyntheticParams p;
  p.rank = 1;
  p.seed = 4;
  const auto d = generate_synthetic(p);
  NmfTrainOptions o;
  o.kind = SamplerKind::corv_sgld;
  o.transform = Transform::make("softplus");
  o.rank = 1;
  o.n_iters = 2000;
  o.stepsize = 1e-3;
  o.seed = 1;
  const auto r = train_nmf(d, o);
  REQUIRE_FALSE(r.diverged);
  CHECK(r.curve.back().test_rmse < 1.1 * *d.noise_floor_rmse);
}

TEST_CASE("snapshots round trip") {
  const auto d = small_data(2);
  ChainRng rng(1);
  auto s = attach_transform(init_factors(d.n_users, d.n_items, 3, 1.0, 2.0, rng), Transform::make("icll"));
  const auto path = std::filesystem::temp_directory_path() / "corv_snapshot_test.bin";
  write_snapshot(s, path);
  CHECK(std::filesystem::file_size(path) == 8 + 4 * 8 + 2 * 8 + 2 * 8 * (20 * 3 + 3 * 15));
  const auto back = read_snapshot(path);
  CHECK(back.W == s.W);
  CHECK(back.H == s.H);
  CHECK(back.phi_W == s.phi_W);
  CHECK(back.lambda_h == 2.0);
  const auto again = attach_transform(back, Transform::make("icll"));
  CHECK(again.phi_H == s.phi_H);
  CHECK(again.W == s.W);

  {
    std::ofstream out(path, std::ios::binary);
    out << "garbage!";
  }
  CHECK_THROWS_AS(read_snapshot(path), DataError);
  std::filesystem::resize_file(path, 4);
  CHECK_THROWS_AS(read_snapshot(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_snapshot(path), DataError);
}
