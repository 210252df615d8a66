#include "drbo/graph.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <functional>
#include <queue>
#include <sstream>

namespace drbo {

namespace {

std::string describe_cycle(const std::vector<std::size_t>& cycle) {
  std::ostringstream os;
  os << "graph contains a directed cycle: ";
  for (std::size_t node : cycle) os << (node + 1) << " -> ";
  if (!cycle.empty()) os << (cycle.front() + 1);
  return os.str();
}

void require_square(const BinaryMatrix& adj) {
  if (adj.rows() != adj.cols()) {
    throw std::invalid_argument("adjacency matrix must be square, got " +
                                std::to_string(adj.rows()) + "x" + std::to_string(adj.cols()));
  }
}

// Walks parent links among nodes left over by Kahn elimination; every such
// node has a remaining parent, so the walk must revisit a node.
std::vector<std::size_t> extract_cycle(const BinaryMatrix& adj, const std::vector<bool>& removed) {
  const auto d = static_cast<std::size_t>(adj.rows());
  std::size_t start = 0;
  while (start < d && removed[start]) ++start;
  std::vector<int> seen_at(d, -1);
  std::vector<std::size_t> walk;
  std::size_t node = start;
  while (seen_at[node] < 0) {
    seen_at[node] = static_cast<int>(walk.size());
    walk.push_back(node);
    for (std::size_t i = 0; i < d; ++i) {
      if (!removed[i] && adj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(node)) != 0) {
        node = i;
        break;
      }
    }
  }
  // walk follows parents, reverse so the reported cycle follows edge direction.
  std::vector<std::size_t> cycle(walk.begin() + seen_at[node], walk.end());
  std::reverse(cycle.begin(), cycle.end());
  return cycle;
}

}  // namespace

CycleError::CycleError(std::vector<std::size_t> cycle)
    : std::runtime_error(describe_cycle(cycle)), cycle_(std::move(cycle)) {}

Dag::Dag(std::size_t n_nodes) : parents_(n_nodes) {
  if (n_nodes > kMaxNodes) {
    throw std::invalid_argument("at most " + std::to_string(kMaxNodes) + " nodes are supported");
  }
}

Dag Dag::from_adjacency(const BinaryMatrix& adj) {
  require_square(adj);
  const auto d = static_cast<std::size_t>(adj.rows());
  Dag g(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = adj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v > 1) throw std::invalid_argument("adjacency entries must be 0 or 1");
      if (v == 0) continue;
      if (i == j) throw std::invalid_argument("self loop at node " + std::to_string(i + 1));
      g.parents_[j].set(i);
    }
  }
  if (!kahn_order(adj)) (void)topological_order(adj);  // throws CycleError
  return g;
}

Dag Dag::from_parent_masks_unchecked(std::vector<ParentMask> parents) {
  Dag g;
  g.parents_ = std::move(parents);
  assert(is_acyclic(g.adjacency()));
  return g;
}

std::size_t Dag::edge_count() const {
  std::size_t total = 0;
  for (const auto& m : parents_) total += m.count();
  return total;
}

BinaryMatrix Dag::adjacency() const {
  const auto d = static_cast<Eigen::Index>(parents_.size());
  BinaryMatrix adj = BinaryMatrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    parents_[static_cast<std::size_t>(j)].for_each(
        [&](std::size_t i) { adj(static_cast<Eigen::Index>(i), j) = 1; });
  }
  return adj;
}

std::uint64_t Dag::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ parents_.size();
  for (const auto& m : parents_) {
    h ^= m.hash();
    h *= 0x100000001B3ULL;
    h ^= h >> 29;
  }
  return h;
}

LatentPoint::LatentPoint(std::size_t d, std::size_t k) : LatentPoint(d, k, std::vector<double>(latent_dims(d, k), 0.0)) {}

LatentPoint::LatentPoint(std::size_t d, std::size_t k, std::vector<double> z)
    : d_(d), k_(k), z_(std::move(z)) {
  if (d == 0 || k == 0) throw std::invalid_argument("LatentPoint needs d >= 1 and k >= 1");
  if (d > kMaxNodes) throw std::invalid_argument("at most 128 nodes are supported");
  if (z_.size() != latent_dims(d, k)) {
    throw std::invalid_argument("latent vector has length " + std::to_string(z_.size()) +
                                ", expected d*(1+k) = " + std::to_string(latent_dims(d, k)));
  }
}

void LatentPoint::clip() {
  for (double& v : z_) v = std::clamp(v, -1.0, 1.0);
}

LatentPoint LatentPoint::scaled(double alpha) const {
  std::vector<double> z = z_;
  for (double& v : z) v *= alpha;
  return {d_, k_, std::move(z)};
}

Eigen::MatrixXd grad_flow(std::span<const double> p) {
  const auto d = static_cast<Eigen::Index>(p.size());
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = p[static_cast<std::size_t>(j)] - p[static_cast<std::size_t>(i)];
  }
  return out;
}

void vec_to_parent_masks(std::span<const double> z, std::size_t d, std::size_t k,
                         std::span<ParentMask> parents) {
  assert(z.size() == latent_dims(d, k));
  assert(parents.size() == d);
  const double* p = z.data();
  const double* r = z.data() + d;
  for (auto& m : parents) m = ParentMask{};
  for (std::size_t i = 0; i < d; ++i) {
    const double* ri = r + i * k;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double flow = p[j] - p[i];
      if (flow == 0.0) continue;
      const double* rj = r + j * k;
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += ri[c] * rj[c];
      if (dot <= 0.0) continue;
      if (flow > 0.0) {
        parents[j].set(i);
      } else {
        parents[i].set(j);
      }
    }
  }
}

Dag vec_to_dag(const LatentPoint& pt) {
  std::vector<ParentMask> parents(pt.d());
  vec_to_parent_masks(pt.z(), pt.d(), pt.k(), parents);
  return Dag::from_parent_masks_unchecked(std::move(parents));
}

std::optional<std::vector<std::size_t>> kahn_order(const BinaryMatrix& adj) {
  require_square(adj);
  const auto d = static_cast<std::size_t>(adj.rows());
  std::vector<std::size_t> indegree(d, 0);
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    for (Eigen::Index j = 0; j < adj.cols(); ++j) {
      if (adj(i, j) != 0) ++indegree[static_cast<std::size_t>(j)];
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < d; ++v) {
    if (indegree[v] == 0) ready.push(v);
  }
  std::vector<std::size_t> order;
  order.reserve(d);
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t w = 0; w < d; ++w) {
      if (adj(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) != 0 && --indegree[w] == 0) {
        ready.push(w);
      }
    }
  }
  if (order.size() != d) return std::nullopt;
  return order;
}

bool is_acyclic(const BinaryMatrix& adj) { return kahn_order(adj).has_value(); }

std::vector<std::size_t> topological_order(const BinaryMatrix& adj) {
  auto order = kahn_order(adj);
  if (order) return std::move(*order);
  // Re-run the elimination to learn which nodes survive it.
  const auto d = static_cast<std::size_t>(adj.rows());
  std::vector<bool> removed(d, false);
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t v = 0; v < d; ++v) {
      if (removed[v]) continue;
      bool has_parent = false;
      for (std::size_t u = 0; u < d && !has_parent; ++u) {
        has_parent = !removed[u] && adj(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0;
      }
      if (!has_parent) {
        removed[v] = true;
        progress = true;
      }
    }
  }
  throw CycleError(extract_cycle(adj, removed));
}

std::vector<std::size_t> topological_order(const Dag& dag) { return topological_order(dag.adjacency()); }

void write_adjacency_csv(std::ostream& os, const BinaryMatrix& adj) {
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    for (Eigen::Index j = 0; j < adj.cols(); ++j) {
      if (j > 0) os << ',';
      os << static_cast<int>(adj(i, j));
    }
    os << '\n';
  }
}

void write_adjacency_csv(const std::string& path, const BinaryMatrix& adj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_adjacency_csv(os, adj);
}

BinaryMatrix read_adjacency_csv(std::istream& is) {
  std::vector<std::vector<std::uint8_t>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::uint8_t> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      const std::string tok = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
      if (tok == "0" || tok == "0.0") {
        row.push_back(0);
      } else if (tok == "1" || tok == "1.0") {
        row.push_back(1);
      } else {
        throw std::runtime_error("adjacency CSV line " + std::to_string(line_no) +
                                 ": expected 0 or 1, got '" + tok + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("adjacency CSV line " + std::to_string(line_no) + ": expected " +
                               std::to_string(rows.front().size()) + " columns, got " +
                               std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("adjacency CSV is empty");
  if (rows.size() != rows.front().size()) {
    throw std::runtime_error("adjacency CSV is not square: " + std::to_string(rows.size()) + " rows, " +
                             std::to_string(rows.front().size()) + " columns");
  }
  const auto d = static_cast<Eigen::Index>(rows.size());
  BinaryMatrix adj(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) adj(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return adj;
}

BinaryMatrix read_adjacency_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_adjacency_csv(is);
}

std::string format_edges(const Dag& dag) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t j = 0; j < dag.n_nodes(); ++j) {
    dag.parents(j).for_each([&](std::size_t i) {
      if (!first) os << ", ";
      os << (i + 1) << "->" << (j + 1);
      first = false;
    });
  }
  return os.str();
}

}  // namespace drbo
