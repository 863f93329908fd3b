#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "corv/random.hpp"
#include "corv/ratings.hpp"
#include "corv/sampler.hpp"
#include "corv/transform.hpp"

namespace corv {

/// Factors of X ~ Poisson(W H) with Exponential(lambda) priors.
/// For CoRV, W = f(phi_W) exactly and dW, rW hold f'(phi_W) and f''/f'(phi_W)
/// from the same evaluation (likewise for H). Mirror states leave the proxy
/// members empty.
struct FactorState {
  Eigen::MatrixXd W;  // I x R
  Eigen::MatrixXd H;  // R x J
  Eigen::MatrixXd phi_W, phi_H;
  Eigen::MatrixXd dW, dH, rW, rH;
  double lambda_w = 1.0;
  double lambda_h = 1.0;

  Eigen::Index rank() const { return W.cols(); }
  bool has_proxy() const { return phi_W.size() > 0 || phi_H.size() > 0; }
};

/// Prior draws W, H ~ Exponential(lambda).
FactorState init_factors(std::size_t n_users, std::size_t n_items, std::size_t rank,
                         double lambda_w, double lambda_h, ChainRng& rng);

/// Sets phi = f^-1(W) (keeping phi if it is already present, as after
/// read_snapshot), then W = f(phi) so the state is exactly on the
/// transform's image, and fills the derivative caches.
FactorState attach_transform(FactorState state, const Transform& t);

struct NmfGradient {
  Eigen::MatrixXd gW;  // I x R
  Eigen::MatrixXd gH;  // R x J
};

/// Minibatch estimate of the potential gradient for every row of W and column
/// of H: -(N/|S|) sum_k H_{:j_k} (X_k / Xhat_k - 1) + lambda_W for row i_k,
/// symmetric for H. N is the training-split size; rows untouched by the batch
/// get the prior term only. Batch entries must come from the training split.
NmfGradient nmf_stochastic_gradient(const FactorState& state, const RatingsDataset& data,
                                    std::span<const std::size_t> batch);

/// W <- |W - eps gW + sqrt(2 eps) eta| then H likewise, both gradients at the
/// old state. Entries landing exactly on 0 are set to 1e-12.
FactorState nmf_step_mirror(FactorState state, const RatingsDataset& data,
                            std::span<const std::size_t> batch, double eps, ChainRng& rng);

/// phi <- phi - eps (f'(phi) gW - f''/f'(phi)) + sqrt(2 eps) eta, W = f(phi);
/// H likewise. Noise is drawn for W in column-major order, then for H.
FactorState nmf_step_corv(FactorState state, const RatingsDataset& data,
                          std::span<const std::size_t> batch, double eps, const Transform& t,
                          ChainRng& rng);

/// Running mean of per-entry predictions (W H)_{i_k j_k} over all dataset entries.
class PredictiveAccumulator {
 public:
  explicit PredictiveAccumulator(std::size_t n_entries = 0) : mean_(Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(n_entries))) {}

  void add(const Eigen::VectorXd& predictions);
  void add(const FactorState& state, const RatingsDataset& data);

  std::size_t n_accumulated() const noexcept { return n_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }

 private:
  Eigen::VectorXd mean_;
  std::size_t n_ = 0;
};

/// (W H) at every dataset entry.
Eigen::VectorXd predict_entries(const FactorState& state, const RatingsDataset& data);

/// RMSE of the accumulated mean against the entries of `split`.
double predict_rmse(const PredictiveAccumulator& acc, const RatingsDataset& data,
                    std::span<const std::size_t> split);

struct NmfTrainOptions {
  SamplerKind kind = SamplerKind::corv_sgld;  // mirror_sgld or corv_sgld
  std::optional<Transform> transform;
  double stepsize = 1e-2;
  std::size_t rank = 5;
  double lambda_w = 1.0;
  double lambda_h = 1.0;
  std::size_t batch_size = 2000;
  std::size_t n_iters = 5000;
  std::size_t eval_interval = 100;
  /// Iterations before predictions enter the accumulator; default 20%.
  std::optional<std::size_t> burn_in;
  std::uint64_t seed = 0;
};

struct RmsePoint {
  std::size_t iteration;
  double train_rmse;
  double valid_rmse;
  double test_rmse;
  double wall_seconds;
};

struct NmfTrainResult {
  std::vector<RmsePoint> curve;
  FactorState final_state;
  std::size_t n_accumulated = 0;
  bool diverged = false;
  std::string divergence_message;

  /// First evaluated iteration whose test RMSE is <= level, if any.
  std::optional<std::size_t> first_iteration_below(double level) const;
};

/// Minibatches are drawn uniformly with replacement from the training split.
/// RMSE is evaluated at iteration 0 and every eval_interval iterations, from
/// the accumulated predictive mean once burn-in has passed and from the
/// current sample before that. Divergence stops training and is reported in
/// the result.
NmfTrainResult train_nmf(const RatingsDataset& data, const NmfTrainOptions& options);

/// Binary snapshot: "CORVFAC1", u64 I, J, R, has_proxy, f64 lambda_w, lambda_h,
/// then W and H row-major (and phi_W, phi_H when present), little-endian.
void write_snapshot(const FactorState& state, const std::filesystem::path& path);
FactorState read_snapshot(const std::filesystem::path& path);

}  // namespace corv
