#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drbo/parent_mask.hpp"
#include "drbo/rng.hpp"
#include "drbo/scoring.hpp"

namespace drbo {

struct SurrogateParams {
  std::size_t hidden = 64;
  double dropout = 0.1;
  double learning_rate = 0.1;
  std::size_t n_grads = 10;
  std::size_t replay_capacity = 1024;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

/// Gradient (or parameter) block with the same layout as DropoutNet.
struct NetTensors {
  Eigen::MatrixXd W1;  // d_in x h
  Eigen::VectorXd b1;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd W2;  // h
  double b2 = 0.0;

  [[nodiscard]] static NetTensors zeros_like(const NetTensors& t);
  [[nodiscard]] std::size_t size() const;
  /// Flat views for optimizers and finite-difference checks.
  [[nodiscard]] double& at(std::size_t flat);
  [[nodiscard]] double at(std::size_t flat) const;
  [[nodiscard]] bool all_finite() const;
};

/// Single hidden layer; pre-activations are dropped, then ReLU and batch norm:
///   y = W2^T BN(ReLU((1-m) o (W1^T x + b1) / (1-p))) + b2,  m ~ Bernoulli(p)^h.
class DropoutNet {
 public:
  DropoutNet() = default;
  DropoutNet(std::size_t d_in, std::size_t hidden, double dropout, Rng& init_rng);

  [[nodiscard]] std::size_t d_in() const { return static_cast<std::size_t>(params_.W1.rows()); }
  [[nodiscard]] std::size_t hidden() const { return static_cast<std::size_t>(params_.W1.cols()); }
  [[nodiscard]] double dropout() const { return dropout_; }

  [[nodiscard]] const NetTensors& params() const { return params_; }
  [[nodiscard]] NetTensors& params() { return params_; }
  [[nodiscard]] const Eigen::VectorXd& running_mean() const { return running_mean_; }
  [[nodiscard]] const Eigen::VectorXd& running_var() const { return running_var_; }
  void set_running_stats(Eigen::VectorXd mean, Eigen::VectorXd var);

  /// Inference-mode pass (running batch-norm statistics) with an explicit
  /// drop mask, drop[u] != 0 meaning unit u is dropped.
  [[nodiscard]] double forward_with_mask(std::span<const double> x, std::span<const std::uint8_t> drop) const;
  /// Inference-mode pass with a fresh Bernoulli(p) mask.
  [[nodiscard]] double forward_stochastic(std::span<const double> x, Rng& rng) const;

  /// Training-mode square loss over a batch with batch-norm batch statistics
  /// and the given drop masks (N x h, nonzero = dropped). Fills grad when
  /// non-null.
  [[nodiscard]] double batch_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& target,
                                  const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& drop,
                                  NetTensors* grad) const;
  /// Moves running statistics toward the batch statistics of this batch.
  void update_running_stats(const Eigen::MatrixXd& X,
                            const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& drop,
                            double momentum);

  void set_bn_eps(double eps) { bn_eps_ = eps; }
  [[nodiscard]] double bn_eps() const { return bn_eps_; }

 private:
  NetTensors params_;
  Eigen::VectorXd running_mean_;
  Eigen::VectorXd running_var_;
  double dropout_ = 0.1;
  double bn_eps_ = 1e-5;
};

/// Affine collapse of an inference pass for one input:
///   sample = base + sum_u contrib[u] - sum_{u dropped} contrib[u].
/// Lets the acquisition kernel draw a dropout sample in O(#dropped units).
struct InferencePlan {
  double base = 0.0;
  double full = 0.0;  // base + sum(contrib): value with no unit dropped
  std::vector<double> contrib;
};

/// Draws one dropout sample from a plan, visiting only dropped units via
/// geometric skips.
[[nodiscard]] double sample_plan(const InferencePlan& plan, double dropout, Rng& rng);

/// Reservoir (Algorithm R) of past (node, parents, local) observations.
class ReplayBuffer {
 public:
  struct Item {
    std::size_t node = 0;
    ParentMask parents;
    double value = 0.0;
  };

  explicit ReplayBuffer(std::size_t capacity = 1024) : capacity_(capacity) {}

  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] std::uint64_t seen() const { return seen_; }
  [[nodiscard]] const std::vector<Item>& items() const { return items_; }

  /// The t-th insertion (1-based) is kept with probability min(1, capacity/t),
  /// replacing a uniformly chosen resident.
  void insert(const Item& item, Rng& rng);
  void restore(std::vector<Item> items, std::uint64_t seen);

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::vector<Item> items_;
};

void reservoir_update(ReplayBuffer& buffer, const ReplayBuffer::Item& item, Rng& rng);

/// Standardizes targets with statistics frozen at the first training call.
struct TargetScaler {
  double mean = 0.0;
  double scale = 1.0;
  bool fitted = false;
  void fit(std::span<const double> values);
};

struct AdamState {
  NetTensors m;
  NetTensors v;
  std::uint64_t step = 0;
};

/// d independent local surrogates, one per node, each predicting that node's
/// local statistic from its parent set.
class SurrogateEnsemble {
 public:
  SurrogateEnsemble(std::size_t n_nodes, SurrogateParams params, std::uint64_t seed);

  [[nodiscard]] std::size_t n_nodes() const { return nets_.size(); }
  [[nodiscard]] const SurrogateParams& params() const { return params_; }
  [[nodiscard]] const DropoutNet& net(std::size_t node) const { return nets_[node]; }
  [[nodiscard]] DropoutNet& net(std::size_t node) { return nets_[node]; }
  [[nodiscard]] const ReplayBuffer& buffer(std::size_t node) const { return buffers_[node]; }
  [[nodiscard]] const TargetScaler& scaler(std::size_t node) const { return scalers_[node]; }

  /// One Thompson draw of node's local statistic, in target units.
  [[nodiscard]] double sample_local(std::size_t node, const ParentMask& parents, Rng& rng) const;
  /// Deterministic (no-drop) prediction in target units.
  [[nodiscard]] double mean_local(std::size_t node, const ParentMask& parents) const;
  [[nodiscard]] InferencePlan plan(std::size_t node, const ParentMask& parents) const;

  /// n_grads Adam steps per node on the new batch plus the replay buffer,
  /// then reservoir-inserts the batch. Returns the mean final training loss.
  double train_continual(std::span<const EvaluationRecord> batch, Rng& rng);

  /// Versioned JSON checkpoint (weights, batch-norm state, Adam moments,
  /// target scalers and replay buffers).
  [[nodiscard]] std::string to_json() const;
  [[nodiscard]] static SurrogateEnsemble from_json(const std::string& text);

 private:
  double train_node(std::size_t node, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Rng& rng);

  SurrogateParams params_;
  std::vector<DropoutNet> nets_;
  std::vector<AdamState> adam_;
  std::vector<ReplayBuffer> buffers_;
  std::vector<TargetScaler> scalers_;
};

/// Dense 0/1 encoding of a parent set.
[[nodiscard]] std::vector<double> expand_mask(const ParentMask& parents, std::size_t d);

/// l_i = one stochastic pass of net i on the parent set of node i.
[[nodiscard]] std::vector<double> thompson_sample_locals(const SurrogateEnsemble& ensemble,
                                                         std::span<const ParentMask> parent_masks, Rng& rng);

/// Combines sampled locals into an acquisition value with the same rule as
/// the exact score.
[[nodiscard]] double combine_af(std::span<const double> locals, std::size_t edge_count, std::size_t n,
                                ScoreVariant variant);

}  // namespace drbo
