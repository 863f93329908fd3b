#include "corv/ratings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "corv/errors.hpp"
#include "corv/random.hpp"

namespace corv {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

const std::vector<std::size_t>& RatingsDataset::indices(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::validation: return validation;
    case Split::test: return test;
  }
  return train;
}

void RatingsDataset::validate() const {
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Rating& r = entries[k];
    if (r.user < 0 || static_cast<std::size_t>(r.user) >= n_users || r.item < 0 ||
        static_cast<std::size_t>(r.item) >= n_items)
      throw DataError("entry " + std::to_string(k) + ": index out of range");
    if (!(r.value >= 0.0) || r.value != std::floor(r.value))
      throw DataError("entry " + std::to_string(k) + ": value must be a non-negative integer");
  }
  if (train.size() + validation.size() + test.size() != entries.size())
    throw DataError("split indices do not cover every entry");
}

void assign_splits(RatingsDataset& data, std::uint64_t seed) {
  const std::size_t n = data.entries.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterEngine engine(derive_seed(seed, 0x5b11u, 0));
  std::shuffle(order.begin(), order.end(), engine);

  const auto n_train = static_cast<std::size_t>(std::floor(0.75 * static_cast<double>(n) + 0.5));
  const auto n_valid = std::min(
      n - n_train, static_cast<std::size_t>(std::floor(0.125 * static_cast<double>(n) + 0.5)));
  for (std::size_t pos = 0; pos < n; ++pos) {
    Split s = Split::test;
    if (pos < n_train)
      s = Split::train;
    else if (pos < n_train + n_valid)
      s = Split::validation;
    data.entries[order[pos]].split = s;
  }
  data.train.clear();
  data.validation.clear();
  data.test.clear();
  for (std::size_t k = 0; k < n; ++k) {
    switch (data.entries[k].split) {
      case Split::train: data.train.push_back(k); break;
      case Split::validation: data.validation.push_back(k); break;
      case Split::test: data.test.push_back(k); break;
    }
  }
}

RatingsDataset generate_synthetic(const SyntheticParams& p) {
  if (p.n_users == 0 || p.n_items == 0)
    throw ConfigError("synthetic: n_users and n_items must be positive");
  if (!(p.lambda > 0.0)) throw ConfigError("synthetic: lambda must be positive");
  if (!(p.density > 0.0 && p.density <= 1.0))
    throw ConfigError("synthetic: density must lie in (0, 1]");

  CounterEngine engine(derive_seed(p.seed, 0xda7au, 0));
  std::exponential_distribution<double> prior(p.lambda);
  const auto I = static_cast<Eigen::Index>(p.n_users);
  const auto J = static_cast<Eigen::Index>(p.n_items);
  const auto R = static_cast<Eigen::Index>(p.rank);
  Eigen::MatrixXd W(I, R);
  Eigen::MatrixXd H(R, J);
  for (Eigen::Index i = 0; i < I; ++i)
    for (Eigen::Index r = 0; r < R; ++r) W(i, r) = prior(engine);
  for (Eigen::Index r = 0; r < R; ++r)
    for (Eigen::Index j = 0; j < J; ++j) H(r, j) = prior(engine);

  RatingsDataset data;
  data.n_users = p.n_users;
  data.n_items = p.n_items;
  data.generating_mean = R > 0 ? Eigen::MatrixXd(W * H) : Eigen::MatrixXd::Zero(I, J);
  for (Eigen::Index i = 0; i < I; ++i) {
    for (Eigen::Index j = 0; j < J; ++j) {
      if (p.density < 1.0 && std::generate_canonical<double, 53>(engine) >= p.density) continue;
      const double mean = data.generating_mean(i, j);
      double x = 0.0;
      if (mean > 0.0) x = static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(engine));
      data.entries.push_back(
          {static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), x, Split::train});
    }
  }
  assign_splits(data, p.seed);

  double sq = 0.0;
  for (std::size_t k : data.test) {
    const Rating& r = data.entries[k];
    const double d = r.value - data.generating_mean(r.user, r.item);
    sq += d * d;
  }
  data.noise_floor_rmse = data.test.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(data.test.size()));
  return data;
}

RatingsFormat parse_ratings_format(std::string_view name) {
  if (name == "ml_tab") return RatingsFormat::ml_tab;
  if (name == "csv_header" || name == "csv") return RatingsFormat::csv_header;
  throw ConfigError("unknown ratings format '" + std::string(name) +
                    "' (expected ml_tab or csv_header)");
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, RatingsFormat format) {
  std::vector<std::string_view> out;
  if (format == RatingsFormat::csv_header) {
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != '\t' && line[j] != ' ') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '"')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '"')) f.remove_suffix(1);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(std::string("cannot parse ") + what + " '" + std::string(field) + "'", line);
  return value;
}

}  // namespace

RatingsDataset load_ratings(const std::filesystem::path& path, RatingsFormat format,
                            std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file " + path.string());

  struct Row {
    std::int64_t user;
    std::int64_t item;
    double value;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::size_t col_user = 0;
  std::size_t col_item = 1;
  std::size_t col_rating = 2;
  std::size_t line_no = 0;
  std::string line;
  bool header_done = format == RatingsFormat::ml_tab;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_fields(line, format);
    if (!header_done) {
      header_done = true;
      std::map<std::string_view, std::size_t> pos;
      for (std::size_t c = 0; c < fields.size(); ++c) pos[fields[c]] = c;
      auto need = [&](std::string_view key, std::size_t& col) {
        auto it = pos.find(key);
        if (it == pos.end())
          throw ParseError("header lacks column '" + std::string(key) + "'", line_no);
        col = it->second;
      };
      need("userId", col_user);
      need("movieId", col_item);
      need("rating", col_rating);
      continue;
    }
    const std::size_t needed = std::max({col_user, col_item, col_rating}) + 1;
    if (fields.size() < needed)
      throw ParseError("expected at least " + std::to_string(needed) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    Row r{parse_number<std::int64_t>(fields[col_user], line_no, "user id"),
          parse_number<std::int64_t>(fields[col_item], line_no, "item id"),
          parse_number<double>(fields[col_rating], line_no, "rating"), line_no};
    if (!std::isfinite(r.value))
      throw ParseError("rating is not finite", line_no);
    if (r.value < 0.0)
      throw DataError("line " + std::to_string(line_no) + ": negative rating " +
                      std::string(fields[col_rating]));
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError("ratings file " + path.string() + " contains no rows");

  RatingsDataset data;
  std::map<std::int64_t, std::int32_t> users;
  std::map<std::int64_t, std::int32_t> items;
  for (const Row& r : rows) {
    users.emplace(r.user, 0);
    items.emplace(r.item, 0);
  }
  for (auto& [id, idx] : users) {
    idx = static_cast<std::int32_t>(data.user_ids.size());
    data.user_ids.push_back(id);
  }
  for (auto& [id, idx] : items) {
    idx = static_cast<std::int32_t>(data.item_ids.size());
    data.item_ids.push_back(id);
  }
  data.n_users = users.size();
  data.n_items = items.size();

  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> seen;
  for (const Row& r : rows) {
    const std::int32_t u = users.at(r.user);
    const std::int32_t i = items.at(r.item);
    const double value = std::floor(r.value + 0.5);
    auto [it, fresh] = seen.emplace(std::make_pair(u, i), data.entries.size());
    if (fresh) {
      data.entries.push_back({u, i, value, Split::train});
    } else {
      data.entries[it->second].value = value;
      data.warnings.push_back("line " + std::to_string(r.line) + ": duplicate rating for user " +
                              std::to_string(r.user) + " item " + std::to_string(r.item) +
                              "; keeping the last one");
    }
  }
  assign_splits(data, split_seed);
  return data;
}

void write_ratings_csv(const RatingsDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "userId,movieId,rating\n";
  for (const Rating& r : data.entries) {
    const std::int64_t u = data.user_ids.empty() ? r.user : data.user_ids[r.user];
    const std::int64_t i = data.item_ids.empty() ? r.item : data.item_ids[r.item];
    out << u << ',' << i << ',' << static_cast<std::int64_t>(r.value) << '\n';
  }
}

}  // namespace corv
