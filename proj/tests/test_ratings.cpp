#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include <doctest.h>

#include "corv/errors.hpp"
#include "corv/ratings.hpp"

using namespace corv;

namespace {

const std::filesystem::path kData = CORV_TEST_DATA_DIR;

double value_at(const RatingsDataset& d, int u, int i) {
  for (const auto& r : d.entries)
    if (r.user == u && r.item == i) return r.value;
  return -1;
}

}  // namespace

TEST_CASE("tab-separated toy file") {
  const auto d = load_ratings(kData / "toy.tsv", RatingsFormat::ml_tab, 1);
  CHECK(d.n_users == 4);
  CHECK(d.n_items == 4);
  CHECK(d.entries.size() == 8);
  CHECK(d.user_ids == std::vector<std::int64_t>{1, 2, 3, 5});
  CHECK(d.item_ids == std::vector<std::int64_t>{10, 20, 30, 40});
  CHECK(value_at(d, 0, 0) == 3);
  CHECK(value_at(d, 3, 0) == 0);
  CHECK(value_at(d, 3, 3) == 3);
  CHECK(d.warnings.empty());
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("headered csv: rounding and duplicates") {
  const auto d = load_ratings(kData / "toy.csv", RatingsFormat::csv_header, 1);
  CHECK(d.n_users == 2);
  CHECK(d.n_items == 3);
  CHECK(d.entries.size() == 5);
  CHECK(value_at(d, 0, 0) == 1);  // last occurrence of (7, 100)
  CHECK(value_at(d, 0, 1) == 4);  // 4.0
  CHECK(value_at(d, 1, 0) == 4);  // 3.5 rounds up
  CHECK(value_at(d, 1, 1) == 2);  // 2.4
  CHECK(value_at(d, 1, 2) == 5);  // 4.5 rounds up
  REQUIRE(d.warnings.size() == 1);
  CHECK(d.warnings[0].find("duplicate") != std::string::npos);
}

TEST_CASE("loader errors") {
  try {
    load_ratings(kData / "malformed.tsv", RatingsFormat::ml_tab);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(load_ratings(kData / "negative.csv", RatingsFormat::csv_header), DataError);
  CHECK_THROWS_AS(load_ratings(kData / "missing_column.csv", RatingsFormat::csv_header), ParseError);
  CHECK_THROWS_AS(load_ratings(kData / "empty.tsv", RatingsFormat::ml_tab), DataError);
  CHECK_THROWS_AS(load_ratings(kData / "does_not_exist.tsv", RatingsFormat::ml_tab), DataError);
  CHECK_THROWS_AS(parse_ratings_format("xlsx"), ConfigError);
  CHECK(parse_ratings_format("csv_header") == RatingsFormat::csv_header);
}

TEST_CASE("splits are 75 / 12.5 / 12.5 and seeded") {
  SyntheticParams p;
  p.n_users = 40;
  p.n_items = 25;
  p.seed = 3;
  auto d = generate_synthetic(p);
  const std::size_t n = d.entries.size();
  CHECK(n == 1000);
  CHECK(d.train.size() == 750);
  CHECK(d.validation.size() == 125);
  CHECK(d.test.size() == 125);
  std::vector<std::size_t> all;
  for (auto s : {Split::train, Split::validation, Split::test})
    for (auto k : d.indices(s)) {
      CHECK(d.entries[k].split == s);
      all.push_back(k);
    }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(n);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);

  auto e = d;
  assign_splits(e, 3);
  auto f = d;
  assign_splits(f, 4);
  assign_splits(d, 3);
  CHECK(d.train == e.train);
  CHECK(d.train != f.train);
}

TEST_CASE("synthetic data") {
  SyntheticParams p;
  p.seed = 11;
  const auto a = generate_synthetic(p);
  const auto b = generate_synthetic(p);
  CHECK(a.entries.size() == 200 * 100);
  CHECK(a.generating_mean.rows() == 200);
  CHECK(a.generating_mean.cols() == 100);
  bool same = a.entries.size() == b.entries.size();
  for (std::size_t k = 0; same && k < a.entries.size(); ++k)
    same = a.entries[k].value == b.entries[k].value && a.entries[k].split == b.entries[k].split;
  CHECK(same);
  CHECK(a.noise_floor_rmse == b.noise_floor_rmse);

  // noise floor: RMSE of the generating means on the test split
  double s = 0;
  for (auto k : a.test) {
    const auto& r = a.entries[k];
    const double m = a.generating_mean(r.user, r.item);
    s += (r.value - m) * (r.value - m);
  }
  CHECK(*a.noise_floor_rmse == doctest::Approx(std::sqrt(s / a.test.size())).epsilon(1e-12));
  for (const auto& r : a.entries) REQUIRE(r.value == std::floor(r.value));
}

TEST_CASE("synthetic mean is rank / lambda^2") {
  // the entry mean depends on only 1500 exponential draws per dataset, so its
  // relative spread is ~7%; average ten seeds for the 5% check
  for (double lambda : {1.0, 2.0}) {
    SyntheticParams p;
    p.lambda = lambda;
    double total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      p.seed = seed;
      const auto d = generate_synthetic(p);
      double s = 0;
      for (const auto& r : d.entries) s += r.value;
      total += s / d.entries.size();
    }
    CHECK(total / 10 == doctest::Approx(5.0 / (lambda * lambda)).epsilon(0.05));
  }
}

TEST_CASE("synthetic edge cases") {
  SyntheticParams p;
  p.rank = 0;
  p.n_users = 10;
  p.n_items = 10;
  const auto d = generate_synthetic(p);
  for (const auto& r : d.entries) CHECK(r.value == 0);
  CHECK(*d.noise_floor_rmse == 0.0);

  p.rank = 3;
  p.density = 0.3;
  p.n_users = 100;
  p.n_items = 100;
  const auto sparse = generate_synthetic(p);
  CHECK(sparse.entries.size() > 2500);
  CHECK(sparse.entries.size() < 3500);
}

TEST_CASE("csv round trip") {
  SyntheticParams p;
  p.n_users = 12;
  p.n_items = 9;
  p.seed = 5;
  const auto d = generate_synthetic(p);
  const auto path = std::filesystem::temp_directory_path() / "corv_ratings_roundtrip.csv";
  write_ratings_csv(d, path);
  const auto back = load_ratings(path, RatingsFormat::csv_header, 0);
  CHECK(back.n_users == d.n_users);
  CHECK(back.n_items == d.n_items);
  REQUIRE(back.entries.size() == d.entries.size());
  for (const auto& r : d.entries) CHECK(value_at(back, r.user, r.item) == r.value);
  std::filesystem::remove(path);
}

TEST_CASE("validation catches bad entries") {
  RatingsDataset d;
  d.n_users = 2;
  d.n_items = 2;
  d.entries = {{0, 0, 1.0, Split::train}, {1, 2, 1.0, Split::train}};
  d.train = {0, 1};
  CHECK_THROWS_AS(d.validate(), DataError);
  d.entries[1] = {1, 1, -1.0, Split::train};
  CHECK_THROWS_AS(d.validate(), DataError);
}
