#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "drbo/data_gen.hpp"
#include "drbo/graph.hpp"

namespace drbo {

/// Refits each node on its parents by OLS (with intercept) and keeps edge
/// j->i iff |w_ji| > threshold.
[[nodiscard]] Dag prune_linear_threshold(const Dag& dag, const Dataset& data, double threshold = 0.3);

/// Fisher-z partial-correlation pruning. Parents of each node are visited in
/// ascending order; j is dropped when x_i and x_j look independent given the
/// parents still kept (p-value > alpha). Tests whose conditioning set exceeds
/// n-3 are skipped and the edge kept.
[[nodiscard]] Dag prune_ci(const Dag& dag, const Dataset& data, double alpha = 0.001);

/// Two-sided Fisher-z p-value for x_i independent of x_j given x_cond.
[[nodiscard]] double fisher_z_pvalue(const Dataset& data, std::size_t i, std::size_t j, const ParentMask& cond);

struct MetricReport {
  std::size_t shd = 0;
  double tpr = 0.0;
  double fdr = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_edges = 0;
  std::size_t estimated_edges = 0;
  std::size_t correct_edges = 0;
  /// Set when the estimate has no edges but the truth does: precision is
  /// undefined and reported as 1.
  bool precision_undefined = false;
  /// Set when the truth has no edges: recall/TPR undefined and reported as 1.
  bool recall_undefined = false;
};

/// Unordered node pairs whose edge status (absent, i->j, j->i) differs.
[[nodiscard]] std::size_t structural_hamming_distance(const Dag& estimated, const Dag& truth);
[[nodiscard]] MetricReport metrics(const Dag& estimated, const Dag& truth);

[[nodiscard]] std::string metrics_csv_header();
[[nodiscard]] std::string metrics_csv_row(const MetricReport& m);
/// Fixed-order two-column table for terminal output.
void print_metrics(std::ostream& os, const MetricReport& m);

}  // namespace drbo
