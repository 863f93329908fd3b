#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace corv {

enum class Split : std::uint8_t { train, validation, test };

std::string to_string(Split s);

struct Rating {
  std::int32_t user;
  std::int32_t item;
  double value;  // non-negative integer count
  Split split;
};

/// Sparse I x J count matrix with a per-entry train/validation/test tag.
struct RatingsDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Rating> entries;
  /// Original identifiers of the contiguous indices (loaded data only).
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
  std::vector<std::string> warnings;

  /// Generator metadata: mean matrix W* H* and the RMSE of those means against
  /// the sampled counts on the test split.
  Eigen::MatrixXd generating_mean;
  std::optional<double> noise_floor_rmse;

  /// Entry indices per split, in entry order. Filled by assign_splits().
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& indices(Split s) const;
  /// Throws DataError if an index or value is out of range.
  void validate() const;
};

/// Seeded per-entry shuffle into round(0.75 n) train, round(0.125 n)
/// validation and the remainder test.
void assign_splits(RatingsDataset& data, std::uint64_t seed);

struct SyntheticParams {
  std::size_t n_users = 200;
  std::size_t n_items = 100;
  std::size_t rank = 5;
  double lambda = 1.0;
  /// Probability that a cell is observed.
  double density = 1.0;
  std::uint64_t seed = 0;
};

/// W*, H* ~ Exponential(lambda) and X_ij ~ Poisson([W* H*]_ij) on the observed
/// cells. E[X_ij] = rank / lambda^2.
RatingsDataset generate_synthetic(const SyntheticParams& params);

enum class RatingsFormat { ml_tab, csv_header };

RatingsFormat parse_ratings_format(std::string_view name);

/// Reads user/item/rating rows. Ratings are rounded half up to the nearest
/// integer; ids are reindexed to 0-based contiguous indices in ascending id
/// order; a repeated (user, item) pair keeps its last value and adds a warning.
/// Throws ParseError (with line number) for malformed rows, DataError for
/// negative ratings or an empty file.
RatingsDataset load_ratings(const std::filesystem::path& path, RatingsFormat format,
                            std::uint64_t split_seed = 0);

/// Writes the dataset in the headered CSV layout (userId,movieId,rating).
void write_ratings_csv(const RatingsDataset& data, const std::filesystem::path& path);

}  // namespace corv
