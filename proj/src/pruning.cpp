#include "drbo/pruning.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "drbo/diagnostics.hpp"

namespace drbo {

namespace {

void require_same_nodes(const Dag& dag, const Dataset& data) {
  if (dag.n_nodes() != data.d()) throw std::invalid_argument("graph and data disagree on the number of nodes");
}

Eigen::VectorXd ols_coefficients(const Dataset& data, std::size_t node, const std::vector<std::size_t>& parents) {
  const auto n = static_cast<Eigen::Index>(data.n());
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(parents.size()) + 1);
  design.col(0).setOnes();
  for (std::size_t c = 0; c < parents.size(); ++c) {
    design.col(static_cast<Eigen::Index>(c) + 1) = data.X.col(static_cast<Eigen::Index>(parents[c]));
  }
  const Eigen::VectorXd y = data.X.col(static_cast<Eigen::Index>(node));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    log_event(Event::kPseudoInverse, "rank-deficient pruning fit for node " + std::to_string(node + 1));
    return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(design).solve(y);
  }
  return qr.solve(y);
}

}  // namespace

Dag prune_linear_threshold(const Dag& dag, const Dataset& data, double threshold) {
  require_same_nodes(dag, data);
  std::vector<ParentMask> kept(dag.n_nodes());
  for (std::size_t i = 0; i < dag.n_nodes(); ++i) {
    const auto parents = dag.parents(i).indices();
    if (parents.empty()) continue;
    const Eigen::VectorXd w = ols_coefficients(data, i, parents);
    for (std::size_t c = 0; c < parents.size(); ++c) {
      if (std::abs(w(static_cast<Eigen::Index>(c) + 1)) > threshold) kept[i].set(parents[c]);
    }
  }
  return Dag::from_parent_masks_unchecked(std::move(kept));
}

double fisher_z_pvalue(const Dataset& data, std::size_t i, std::size_t j, const ParentMask& cond) {
  std::vector<std::size_t> idx{i, j};
  cond.for_each([&](std::size_t c) { idx.push_back(c); });
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(data.X.rows(), m);
  for (Eigen::Index c = 0; c < m; ++c) sub.col(c) = data.X.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]));
  const Eigen::MatrixXd centered = sub.rowwise() - sub.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::MatrixXd precision;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 1e-12 * cov.diagonal().maxCoeff()) {
    precision = ldlt.solve(Eigen::MatrixXd::Identity(m, m));
  } else {
    log_event(Event::kPseudoInverse, "singular covariance in partial correlation test");
    precision = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(cov).pseudoInverse();
  }
  double r = -precision(0, 1) / std::sqrt(precision(0, 0) * precision(1, 1));
  r = std::clamp(r, -1.0 + 1e-15, 1.0 - 1e-15);
  const double z = std::atanh(r);
  const double dof = static_cast<double>(data.n()) - static_cast<double>(cond.count()) - 3.0;
  const double stat = std::sqrt(std::max(dof, 0.0)) * std::abs(z);
  return std::erfc(stat / std::sqrt(2.0));
}

Dag prune_ci(const Dag& dag, const Dataset& data, double alpha) {
  require_same_nodes(dag, data);
  std::vector<ParentMask> kept(dag.parent_masks().begin(), dag.parent_masks().end());
  for (std::size_t i = 0; i < dag.n_nodes(); ++i) {
    for (std::size_t j : dag.parents(i).indices()) {
      ParentMask cond = kept[i];
      cond.reset(j);
      if (cond.count() + 3 > data.n()) {
        log_event(Event::kCiTestSkipped, "conditioning set too large for edge " + std::to_string(j + 1) + "->" +
                                             std::to_string(i + 1));
        continue;
      }
      if (fisher_z_pvalue(data, i, j, cond) > alpha) kept[i].reset(j);
    }
  }
  return Dag::from_parent_masks_unchecked(std::move(kept));
}

std::size_t structural_hamming_distance(const Dag& estimated, const Dag& truth) {
  if (estimated.n_nodes() != truth.n_nodes()) throw std::invalid_argument("graphs have different node counts");
  std::size_t shd = 0;
  const std::size_t d = truth.n_nodes();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (estimated.has_edge(i, j) != truth.has_edge(i, j) || estimated.has_edge(j, i) != truth.has_edge(j, i)) ++shd;
    }
  }
  return shd;
}

MetricReport metrics(const Dag& estimated, const Dag& truth) {
  MetricReport m;
  m.shd = structural_hamming_distance(estimated, truth);
  m.true_edges = truth.edge_count();
  m.estimated_edges = estimated.edge_count();
  for (std::size_t i = 0; i < truth.n_nodes(); ++i) {
    for (std::size_t w = 0; w < 2; ++w) {
      m.correct_edges +=
          static_cast<std::size_t>(std::popcount(estimated.parents(i).word(w) & truth.parents(i).word(w)));
    }
  }
  const auto correct = static_cast<double>(m.correct_edges);
  if (m.true_edges == 0) {
    m.tpr = 1.0;
    m.recall_undefined = true;
  } else {
    m.tpr = correct / static_cast<double>(m.true_edges);
  }
  if (m.estimated_edges == 0) {
    m.fdr = 0.0;
    m.precision = 1.0;
    m.precision_undefined = m.true_edges != 0;
  } else {
    m.fdr = 1.0 - correct / static_cast<double>(m.estimated_edges);
    m.precision = correct / static_cast<double>(m.estimated_edges);
  }
  m.recall = m.tpr;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

std::string metrics_csv_header() {
  return "shd,tpr,fdr,precision,recall,f1,true_edges,estimated_edges,correct_edges,precision_undefined,recall_undefined";
}

std::string metrics_csv_row(const MetricReport& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%zu,%d,%d", m.shd, m.tpr, m.fdr,
                m.precision, m.recall, m.f1, m.true_edges, m.estimated_edges, m.correct_edges,
                m.precision_undefined ? 1 : 0, m.recall_undefined ? 1 : 0);
  return buf;
}

void print_metrics(std::ostream& os, const MetricReport& m) {
  char buf[64];
  auto line = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%-10s %.4f\n", name, v);
    os << buf;
  };
  os << "shd        " << m.shd << '\n';
  line("tpr", m.tpr);
  line("fdr", m.fdr);
  line("precision", m.precision);
  line("recall", m.recall);
  line("f1", m.f1);
  os << "edges      " << m.estimated_edges << " estimated, " << m.true_edges << " true, " << m.correct_edges
     << " correct\n";
  if (m.precision_undefined) os << "note       empty estimate; precision reported as 1\n";
  if (m.recall_undefined) os << "note       empty truth; recall reported as 1\n";
}

}  // namespace drbo
