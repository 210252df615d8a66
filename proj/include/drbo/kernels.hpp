#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "drbo/parent_mask.hpp"
#include "drbo/rng.hpp"
#include "drbo/scoring.hpp"
#include "drbo/surrogate.hpp"

namespace drbo {

/// kSerialReference is the straightforward single-threaded implementation
/// kept as the test oracle; kParallel is the OpenMP kernel. Both consume the
/// same per-candidate random streams and produce identical results.
enum class ExecPolicy { kSerialReference, kParallel };

/// Maps `count` latent vectors (row-major, count x d(1+k)) to parent masks
/// (row-major, count x d).
void map_candidates(std::span<const double> z, std::size_t d, std::size_t k, std::span<ParentMask> masks,
                    ExecPolicy policy);

/// Per-node tables for drawing dropout samples without materializing an
/// InferencePlan: contribution of unit u is coef[u] * max(pre[u], 0) where
/// pre = b1 + sum of W1 rows of the parents.
class ThompsonSampler {
 public:
  explicit ThompsonSampler(const SurrogateEnsemble& ensemble);

  [[nodiscard]] std::size_t n_nodes() const { return nodes_.size(); }
  [[nodiscard]] std::size_t hidden() const { return hidden_; }
  /// scratch must hold 2 * hidden() doubles.
  [[nodiscard]] double sample(std::size_t node, const ParentMask& parents, Rng& rng, std::span<double> scratch) const;

 private:
  struct NodeTable {
    double base = 0.0;
    Eigen::VectorXd coef;
    Eigen::MatrixXd w1t;  // h x d, column j = weights of input j
    Eigen::VectorXd b1;
  };
  std::vector<NodeTable> nodes_;
  std::size_t hidden_ = 0;
  double dropout_ = 0.1;
};

/// Thompson-sampled acquisition value of each candidate DAG (row-major masks,
/// count x d): one dropout draw per node, combined with the score rule.
/// Candidate c draws from Rng(derive_seed(stream_seed, c)).
void thompson_acquisition(const SurrogateEnsemble& ensemble, std::span<const ParentMask> masks, std::size_t n,
                          ScoreVariant variant, std::uint64_t stream_seed, std::span<double> out, ExecPolicy policy);

}  // namespace drbo
