#include "drbo/data_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "drbo/diagnostics.hpp"

namespace drbo {

namespace {

std::vector<std::size_t> random_permutation(std::size_t d, Rng& rng) {
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = d; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

double unit_noise(NoiseFamily f, Rng& rng) {
  switch (f) {
    case NoiseFamily::kGaussian: return rng.normal();
    case NoiseFamily::kExponential: return -std::log(rng.uniform_pos());
    case NoiseFamily::kGumbel: return -std::log(-std::log(rng.uniform_pos()));
    case NoiseFamily::kLaplace: {
      const double u = rng.uniform() - 0.5;
      const double a = 1.0 - 2.0 * std::abs(u);
      return -std::copysign(1.0, u) * std::log(a > 0.0 ? a : 0x1.0p-53);
    }
    case NoiseFamily::kUniform: return rng.uniform(-1.0, 1.0);
  }
  throw std::logic_error("unhandled noise family");
}

// Draws f ~ GP(0, exp(-|a-b|^2 / 2)) jointly on the rows of `inputs`.
Eigen::VectorXd sample_gp_function(const Eigen::MatrixXd& inputs, Rng& rng) {
  const Eigen::Index n = inputs.rows();
  const Eigen::VectorXd sq = inputs.rowwise().squaredNorm();
  Eigen::MatrixXd K = -2.0 * inputs * inputs.transpose();
  K.colwise() += sq;
  K.rowwise() += sq.transpose();
  K = (-0.5 * K.array().max(0.0)).exp().matrix();

  const double base = K.trace() / static_cast<double>(n);
  for (double jitter = 1e-8 * base; jitter <= 1e-2 * base * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      if (jitter > 1e-8 * base * 1.5) {
        log_event(Event::kJitterEscalated, "GP prior kernel needed jitter " + std::to_string(jitter));
      }
      Eigen::VectorXd g(n);
      for (Eigen::Index r = 0; r < n; ++r) g(r) = rng.normal();
      return llt.matrixL() * g;
    }
  }
  throw std::runtime_error("degenerate GP kernel: Cholesky failed up to jitter 1e-2");
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kLinear: return "linear";
    case Mechanism::kGpNonlinear: return "gp";
    case Mechanism::kCosine: return "cosine";
    case Mechanism::kLogistic: return "logistic";
  }
  return "unknown";
}

std::string_view to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::kGaussian: return "gaussian";
    case NoiseFamily::kExponential: return "exponential";
    case NoiseFamily::kGumbel: return "gumbel";
    case NoiseFamily::kLaplace: return "laplace";
    case NoiseFamily::kUniform: return "uniform";
  }
  return "unknown";
}

Mechanism parse_mechanism(std::string_view s) {
  for (auto m : {Mechanism::kLinear, Mechanism::kGpNonlinear, Mechanism::kCosine, Mechanism::kLogistic}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mechanism '" + std::string(s) + "'");
}

NoiseFamily parse_noise(std::string_view s) {
  for (auto f : {NoiseFamily::kGaussian, NoiseFamily::kExponential, NoiseFamily::kGumbel,
                 NoiseFamily::kLaplace, NoiseFamily::kUniform}) {
    if (s == to_string(f)) return f;
  }
  throw std::invalid_argument("unknown noise family '" + std::string(s) + "'");
}

double noise_unit_variance(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::kGaussian: return 1.0;
    case NoiseFamily::kExponential: return 1.0;
    case NoiseFamily::kGumbel: return std::numbers::pi * std::numbers::pi / 6.0;
    case NoiseFamily::kLaplace: return 2.0;
    case NoiseFamily::kUniform: return 1.0 / 3.0;
  }
  return 1.0;
}

bool Dataset::is_binary() const {
  return (X.array() == 0.0 || X.array() == 1.0).all();
}

Dag sample_er_dag(std::size_t d, double e, Rng& rng) {
  if (d < 2) throw std::invalid_argument("ER graph needs d >= 2");
  if (e < 0.0) throw std::invalid_argument("edge density must be non-negative");
  const double p = 2.0 * e / static_cast<double>(d - 1);
  if (p > 1.0) {
    throw std::invalid_argument("invalid density: " + std::to_string(e) + " edges per node needs edge probability " +
                                std::to_string(p) + " > 1 for d = " + std::to_string(d));
  }
  const auto perm = random_permutation(d, rng);
  std::vector<ParentMask> parents(d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      if (rng.uniform() < p) parents[perm[b]].set(perm[a]);
    }
  }
  return Dag::from_parent_masks_unchecked(std::move(parents));
}

Dag sample_sf_dag(std::size_t d, std::size_t e, Rng& rng) {
  if (e < 1 || d <= e) throw std::invalid_argument("scale-free graph needs d > e >= 1");
  std::vector<ParentMask> parents(d);
  std::vector<double> degree(d, 0.0);
  std::size_t carry = 0;
  for (std::size_t node = 1; node < d; ++node) {
    const std::size_t want = e + carry;
    const std::size_t take = std::min(want, node);
    carry = want - take;
    // Weighted sampling without replacement over existing nodes, weight
    // degree + 1 so the isolated seed node can be chosen.
    std::vector<double> weight(node);
    for (std::size_t v = 0; v < node; ++v) weight[v] = degree[v] + 1.0;
    for (std::size_t t = 0; t < take; ++t) {
      const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      for (; pick + 1 < node; ++pick) {
        if (weight[pick] > 0.0 && u < weight[pick]) break;
        u -= weight[pick];
      }
      while (weight[pick] == 0.0) --pick;
      weight[pick] = 0.0;
      parents[node].set(pick);
      degree[pick] += 1.0;
      degree[node] += 1.0;
    }
  }
  return Dag::from_parent_masks_unchecked(std::move(parents));
}

Eigen::MatrixXd sample_linear_weights(const Dag& dag, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(dag.n_nodes());
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < dag.n_nodes(); ++i) {
    dag.parents(i).for_each([&](std::size_t j) {
      const double magnitude = rng.uniform(0.5, 2.0);
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      W(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = sign * magnitude;
    });
  }
  return W;
}

ScmSpec make_scm(Dag graph, Mechanism mechanism, NoiseFamily noise, Rng& rng) {
  ScmSpec spec;
  const std::size_t d = graph.n_nodes();
  spec.mechanism = mechanism;
  spec.noise = noise;
  if (mechanism != Mechanism::kGpNonlinear) spec.weights = sample_linear_weights(graph, rng);
  spec.noise_scale.assign(d, 1.0);
  if (mechanism == Mechanism::kGpNonlinear) {
    for (auto& s : spec.noise_scale) s = rng.uniform(0.4, 0.8);
  }
  spec.graph = std::move(graph);
  return spec;
}

Dataset simulate(const ScmSpec& spec, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("simulate needs n >= 1");
  const std::size_t d = spec.graph.n_nodes();
  if (spec.noise_scale.size() != d) throw std::invalid_argument("noise_scale must have one entry per node");
  const bool needs_weights = spec.mechanism != Mechanism::kGpNonlinear;
  if (needs_weights && (spec.weights.rows() != static_cast<Eigen::Index>(d) ||
                        spec.weights.cols() != static_cast<Eigen::Index>(d))) {
    throw std::invalid_argument("weights must be d x d for this mechanism");
  }

  const auto rows = static_cast<Eigen::Index>(n);
  Dataset ds;
  ds.X = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(d));
  for (std::size_t node : topological_order(spec.graph)) {
    const auto col = static_cast<Eigen::Index>(node);
    const auto parents = spec.graph.parents(node).indices();
    Eigen::VectorXd signal = Eigen::VectorXd::Zero(rows);
    switch (spec.mechanism) {
      case Mechanism::kLinear:
      case Mechanism::kLogistic:
        for (std::size_t j : parents) {
          signal += spec.weights(static_cast<Eigen::Index>(j), col) * ds.X.col(static_cast<Eigen::Index>(j));
        }
        break;
      case Mechanism::kCosine:
        for (std::size_t j : parents) {
          signal += spec.weights(static_cast<Eigen::Index>(j), col) *
                    ds.X.col(static_cast<Eigen::Index>(j)).array().cos().matrix();
        }
        break;
      case Mechanism::kGpNonlinear:
        if (!parents.empty()) {
          Eigen::MatrixXd inputs(rows, static_cast<Eigen::Index>(parents.size()));
          for (std::size_t c = 0; c < parents.size(); ++c) {
            inputs.col(static_cast<Eigen::Index>(c)) = ds.X.col(static_cast<Eigen::Index>(parents[c]));
          }
          signal = sample_gp_function(inputs, rng);
        }
        break;
    }

    if (spec.mechanism == Mechanism::kLogistic) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        const double prob = 1.0 / (1.0 + std::exp(-signal(r)));
        ds.X(r, col) = rng.uniform() < prob ? 1.0 : 0.0;
      }
    } else {
      const double scale = std::sqrt(spec.noise_scale[node]);
      for (Eigen::Index r = 0; r < rows; ++r) ds.X(r, col) = signal(r) + scale * unit_noise(spec.noise, rng);
    }
  }
  return ds;
}

Dataset standardize(const Dataset& ds) {
  if (ds.n() == 0) throw std::invalid_argument("standardize needs at least one row");
  Dataset out = ds;
  const double denom = static_cast<double>(ds.n());
  for (Eigen::Index c = 0; c < ds.X.cols(); ++c) {
    const double mean = ds.X.col(c).mean();
    out.X.col(c).array() -= mean;
    const double var = out.X.col(c).squaredNorm() / denom;
    if (!(var > 0.0)) throw std::invalid_argument("constant column x" + std::to_string(c + 1) + " cannot be standardized");
    out.X.col(c) /= std::sqrt(var);
  }
  out.standardized = true;
  return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (std::size_t c = 0; c < ds.d(); ++c) os << (c ? "," : "") << 'x' << (c + 1);
  os << '\n';
  for (Eigen::Index r = 0; r < ds.X.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.X.cols(); ++c) {
      if (c > 0) os << ',';
      char buf[32];
      const int len = std::snprintf(buf, sizeof buf, "%.17g", ds.X(r, c));
      os.write(buf, len);
    }
    os << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset_csv(os, ds);
}

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t d = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw std::runtime_error("data CSV is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) ++d;
  }
  if (d == 0) throw std::runtime_error("data CSV line " + std::to_string(line_no) + ": empty header");

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      const std::string tok = trim(cell);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (tok.empty() || used != tok.size() || !std::isfinite(v)) {
        throw std::runtime_error("data CSV line " + std::to_string(line_no) + ", column " +
                                 std::to_string(cols + 1) + ": not a finite number: '" + tok + "'");
      }
      values.push_back(v);
      ++cols;
    }
    if (cols != d) {
      throw std::runtime_error("data CSV line " + std::to_string(line_no) + ": expected " + std::to_string(d) +
                               " values, got " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("data CSV has a header but no rows");
  Dataset ds;
  ds.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  return ds;
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open data file " + path);
  return read_dataset_csv(is);
}

}  // namespace drbo
