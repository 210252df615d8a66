#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "drbo/graph.hpp"
#include "drbo/rng.hpp"

namespace drbo {

enum class Mechanism { kLinear, kGpNonlinear, kCosine, kLogistic };
enum class NoiseFamily { kGaussian, kExponential, kGumbel, kLaplace, kUniform };

[[nodiscard]] std::string_view to_string(Mechanism m);
[[nodiscard]] std::string_view to_string(NoiseFamily f);
/// Accepts the CLI spellings (linear, gp, cosine, logistic / gaussian, ...).
[[nodiscard]] Mechanism parse_mechanism(std::string_view s);
[[nodiscard]] NoiseFamily parse_noise(std::string_view s);

/// Variance of one unit-scale draw of the family (Exp(1), Gumbel(0,1),
/// Laplace(0,1), U(-1,1), N(0,1)).
[[nodiscard]] double noise_unit_variance(NoiseFamily f);

/// n x d sample matrix, rows i.i.d.
struct Dataset {
  Eigen::MatrixXd X;
  bool standardized = false;

  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  [[nodiscard]] std::size_t d() const { return static_cast<std::size_t>(X.cols()); }
  [[nodiscard]] bool is_binary() const;
};

struct ScmSpec {
  Dag graph;
  Mechanism mechanism = Mechanism::kLinear;
  /// weights(j, i) is the coefficient of x_j in x_i; linear, cosine and
  /// logistic mechanisms only.
  Eigen::MatrixXd weights;
  NoiseFamily noise = NoiseFamily::kGaussian;
  /// Per-node multiplier on the unit draw, squared (sigma_i^2 for Gaussian).
  std::vector<double> noise_scale;
};

/// Erdos-Renyi DAG with d*e expected edges: every unordered pair is joined
/// with probability 2e/(d-1), then oriented along a random permutation.
[[nodiscard]] Dag sample_er_dag(std::size_t d, double e, Rng& rng);

/// Scale-free DAG grown by preferential attachment from a single node; each
/// new node links to e existing nodes (deficits of the first nodes are carried
/// forward) and edges point from old to new nodes.
[[nodiscard]] Dag sample_sf_dag(std::size_t d, std::size_t e, Rng& rng);

/// w_ji ~ U([-2,-0.5] U [0.5,2]) on edges, zero elsewhere.
[[nodiscard]] Eigen::MatrixXd sample_linear_weights(const Dag& dag, Rng& rng);

/// Builds a complete spec: samples weights where the mechanism needs them and
/// noise scales (U[0.4, 0.8] variances for the GP mechanism, 1 otherwise).
[[nodiscard]] ScmSpec make_scm(Dag graph, Mechanism mechanism, NoiseFamily noise, Rng& rng);

/// Draws n samples in topological order. Throws std::runtime_error if the GP
/// kernel cannot be factorized even at the largest jitter.
[[nodiscard]] Dataset simulate(const ScmSpec& spec, std::size_t n, Rng& rng);

/// Column-wise z-scoring with the population (divide by n) variance. Throws
/// std::invalid_argument on a constant column.
[[nodiscard]] Dataset standardize(const Dataset& ds);

/// CSV with header x1..xd.
void write_dataset_csv(std::ostream& os, const Dataset& ds);
void write_dataset_csv(const std::string& path, const Dataset& ds);
/// Throws std::runtime_error with a line-numbered message on malformed input.
[[nodiscard]] Dataset read_dataset_csv(std::istream& is);
[[nodiscard]] Dataset read_dataset_csv(const std::string& path);

}  // namespace drbo
