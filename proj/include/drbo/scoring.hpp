#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "drbo/data_gen.hpp"
#include "drbo/graph.hpp"

namespace drbo {

enum class ScoreVariant { kBicEv, kBicNv, kBicLogistic };
enum class Regressor { kLinear, kGp };

[[nodiscard]] std::string_view to_string(ScoreVariant v);
[[nodiscard]] std::string_view to_string(Regressor r);
/// CLI spellings: bic-ev, bic-nv, bic-logistic / linear, gp.
[[nodiscard]] ScoreVariant parse_score_variant(std::string_view s);
[[nodiscard]] Regressor parse_regressor(std::string_view s);

struct ScoreConfig {
  ScoreVariant variant = ScoreVariant::kBicEv;
  Regressor regressor = Regressor::kLinear;
  /// GP fits use at most this many rows, chosen once per dataset.
  std::size_t gp_max_rows = 512;
  std::uint64_t gp_subsample_seed = 0x5EEDULL;
  /// Observation noise added to the unit-amplitude RBF kernel diagonal.
  double gp_noise = 1.0;
};

/// Throws std::invalid_argument when the data type does not match the score
/// (logistic needs 0/1 data, the Gaussian variants need non-binary data).
void check_compatible(const Dataset& data, const ScoreConfig& config);

inline constexpr double kMseFloor = 1e-12;

/// ln of the residual mean square of x_node regressed on x_parents with an
/// intercept. Linear: ordinary least squares. GP: RBF-kernel GP posterior
/// mean with median-heuristic bandwidth and kernel noise gp_noise on the rows
/// selected by gp_rows (all rows if empty).
[[nodiscard]] double local_ln_mse(std::size_t node, const ParentMask& parents, const Dataset& data,
                                  Regressor regressor, std::span<const std::size_t> gp_rows = {},
                                  double gp_noise = 1.0);

/// Maximized Bernoulli log-likelihood of x_node under logistic regression on
/// x_parents with an intercept (IRLS).
[[nodiscard]] double local_logistic_mll(std::size_t node, const ParentMask& parents, const Dataset& data);

/// -n * sum(locals) - edges * ln n, locals = ln MSE_i.
[[nodiscard]] double bic_nv(std::span<const double> locals, std::size_t edge_count, std::size_t n);
/// -n * d * ln(mean(exp(locals))) - edges * ln n.
[[nodiscard]] double bic_ev(std::span<const double> locals, std::size_t edge_count, std::size_t n);
/// 2 * sum(locals) - edges * ln n, locals = LocalMLL_i.
[[nodiscard]] double bic_logistic_combine(std::span<const double> locals, std::size_t edge_count,
                                          std::size_t n);
[[nodiscard]] double combine_locals(ScoreVariant variant, std::span<const double> locals,
                                    std::size_t edge_count, std::size_t n);

/// Full logistic BIC of a DAG on binary data.
[[nodiscard]] double bic_logistic(const Dataset& data, const Dag& dag);

/// (node, parent set) -> local statistic. Concurrent readers, exclusive
/// writers; a racing duplicate insert keeps the first value.
class LocalScoreCache {
 public:
  [[nodiscard]] std::optional<double> find(std::size_t node, const ParentMask& parents) const;
  void insert(std::size_t node, const ParentMask& parents, double value);

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  [[nodiscard]] std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }
  [[nodiscard]] double hit_rate() const;
  void clear();

 private:
  struct Key {
    std::size_t node;
    ParentMask parents;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(k.parents.hash() ^ (k.node * 0x9E3779B97F4A7C15ULL));
    }
  };

  mutable std::shared_mutex mutex_;
  std::unordered_map<Key, double, KeyHash> map_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
};

/// One exactly scored DAG.
struct EvaluationRecord {
  Dag dag;
  std::vector<double> locals;
  double total = 0.0;

  [[nodiscard]] std::span<const ParentMask> parent_masks() const { return dag.parent_masks(); }
};

/// Reference scoring path: every local is computed from the raw data matrix.
[[nodiscard]] EvaluationRecord score_dag(const Dag& dag, const Dataset& data, const ScoreConfig& config,
                                         LocalScoreCache& cache);

/// Scoring engine used by the optimizer. Precomputes the sample covariance
/// (linear), the GP row subsample, and owns the cache.
class Scorer {
 public:
  Scorer(const Dataset& data, ScoreConfig config);

  [[nodiscard]] double local(std::size_t node, const ParentMask& parents);
  [[nodiscard]] EvaluationRecord score(const Dag& dag);
  /// Scores a batch; cache misses are fitted in parallel.
  [[nodiscard]] std::vector<EvaluationRecord> score_batch(std::span<const Dag> dags);

  [[nodiscard]] const LocalScoreCache& cache() const { return cache_; }
  [[nodiscard]] const ScoreConfig& config() const { return config_; }
  [[nodiscard]] const Dataset& data() const { return data_; }
  [[nodiscard]] std::span<const std::size_t> gp_rows() const { return gp_rows_; }
  void set_cache_enabled(bool on) { cache_enabled_ = on; }

 private:
  [[nodiscard]] double compute_local(std::size_t node, const ParentMask& parents) const;
  [[nodiscard]] double linear_from_covariance(std::size_t node, const ParentMask& parents) const;

  const Dataset& data_;
  ScoreConfig config_;
  Eigen::MatrixXd covariance_;
  std::vector<std::size_t> gp_rows_;
  LocalScoreCache cache_;
  bool cache_enabled_ = true;
};

/// Rows used for GP fits: all rows if n <= max_rows, else a seeded uniform
/// subsample of max_rows rows in ascending order.
[[nodiscard]] std::vector<std::size_t> select_gp_rows(std::size_t n, std::size_t max_rows, std::uint64_t seed);

}  // namespace drbo
