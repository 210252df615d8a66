#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drbo/parent_mask.hpp"

namespace drbo {

/// Square 0/1 matrix; entry (i, j) = 1 means edge i -> j.
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

class CycleError : public std::runtime_error {
 public:
  explicit CycleError(std::vector<std::size_t> cycle);
  /// Nodes along one directed cycle, 0-based, first node not repeated.
  [[nodiscard]] const std::vector<std::size_t>& cycle() const { return cycle_; }

 private:
  std::vector<std::size_t> cycle_;
};

/// Directed acyclic graph over d <= 128 nodes, stored as one parent bitmask per
/// node. Construction from an adjacency matrix validates acyclicity.
class Dag {
 public:
  Dag() = default;
  explicit Dag(std::size_t n_nodes);

  /// Throws std::invalid_argument for non-square input, self loops or d > 128,
  /// CycleError if the graph has a directed cycle.
  static Dag from_adjacency(const BinaryMatrix& adj);

  /// Caller guarantees the parent sets describe an acyclic graph (e.g. they
  /// come from vec_to_dag). Checked in debug builds.
  static Dag from_parent_masks_unchecked(std::vector<ParentMask> parents);

  [[nodiscard]] std::size_t n_nodes() const { return parents_.size(); }
  [[nodiscard]] bool has_edge(std::size_t from, std::size_t to) const {
    return parents_[to].test(from);
  }
  [[nodiscard]] const ParentMask& parents(std::size_t node) const { return parents_[node]; }
  [[nodiscard]] std::span<const ParentMask> parent_masks() const { return parents_; }
  [[nodiscard]] std::size_t edge_count() const;
  [[nodiscard]] BinaryMatrix adjacency() const;

  /// Removes an edge; the result stays acyclic.
  void remove_edge(std::size_t from, std::size_t to) { parents_[to].reset(from); }

  [[nodiscard]] std::uint64_t hash() const;

  friend bool operator==(const Dag&, const Dag&) = default;

 private:
  std::vector<ParentMask> parents_;
};

struct DagHash {
  std::size_t operator()(const Dag& g) const noexcept { return static_cast<std::size_t>(g.hash()); }
};

/// Search variable z = [p, vec(R)] of length d * (1 + k): node potentials p
/// followed by the row-major d x k embedding matrix R.
class LatentPoint {
 public:
  LatentPoint(std::size_t d, std::size_t k);
  LatentPoint(std::size_t d, std::size_t k, std::vector<double> z);

  [[nodiscard]] std::size_t d() const { return d_; }
  [[nodiscard]] std::size_t k() const { return k_; }
  [[nodiscard]] std::size_t dims() const { return z_.size(); }

  [[nodiscard]] std::span<const double> z() const { return z_; }
  [[nodiscard]] std::span<double> z() { return z_; }
  [[nodiscard]] std::span<const double> potentials() const { return {z_.data(), d_}; }
  [[nodiscard]] std::span<const double> embedding(std::size_t node) const {
    return {z_.data() + d_ + node * k_, k_};
  }

  /// Clamps every entry into [-1, 1].
  void clip();
  [[nodiscard]] LatentPoint scaled(double alpha) const;

 private:
  std::size_t d_;
  std::size_t k_;
  std::vector<double> z_;
};

[[nodiscard]] inline std::size_t latent_dims(std::size_t d, std::size_t k) { return d * (1 + k); }

/// out(i, j) = p_j - p_i.
[[nodiscard]] Eigen::MatrixXd grad_flow(std::span<const double> p);

/// Edge i -> j iff p_j - p_i > 0 and <r_i, r_j> > 0 (Heaviside with H(0) = 0).
[[nodiscard]] Dag vec_to_dag(const LatentPoint& pt);

/// Same map on a raw packed vector; writes parent masks of length d into
/// `parents`. Hot path used by the candidate kernels.
void vec_to_parent_masks(std::span<const double> z, std::size_t d, std::size_t k,
                         std::span<ParentMask> parents);

/// Kahn elimination that always removes the smallest available node, so the
/// empty graph maps to the identity order. Returns nullopt on a cycle.
[[nodiscard]] std::optional<std::vector<std::size_t>> kahn_order(const BinaryMatrix& adj);

/// Throws std::invalid_argument if adj is not square.
[[nodiscard]] bool is_acyclic(const BinaryMatrix& adj);

/// Throws CycleError naming one cycle if adj is cyclic.
[[nodiscard]] std::vector<std::size_t> topological_order(const BinaryMatrix& adj);
[[nodiscard]] std::vector<std::size_t> topological_order(const Dag& dag);

[[nodiscard]] inline ParentMask parent_mask(const Dag& dag, std::size_t node) {
  return dag.parents(node);
}

/// Headerless CSV of 0/1 integers, row i = source node i.
void write_adjacency_csv(std::ostream& os, const BinaryMatrix& adj);
void write_adjacency_csv(const std::string& path, const BinaryMatrix& adj);
/// Throws std::runtime_error with a line-numbered message on malformed input.
[[nodiscard]] BinaryMatrix read_adjacency_csv(std::istream& is);
[[nodiscard]] BinaryMatrix read_adjacency_csv(const std::string& path);

/// Human-facing edge list with 1-based node labels, e.g. "1->2, 3->2".
[[nodiscard]] std::string format_edges(const Dag& dag);

}  // namespace drbo
