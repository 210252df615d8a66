#include "drbo/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "drbo/diagnostics.hpp"
#include "drbo/rng.hpp"

namespace drbo {

namespace {

double floored_log(double mse) {
  if (!(mse >= kMseFloor)) {
    log_event(Event::kMseFloor, "residual mean square " + std::to_string(mse) + " floored at 1e-12");
    mse = kMseFloor;
  }
  return std::log(mse);
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& X, const std::vector<std::size_t>& cols,
                               std::span<const std::size_t> rows) {
  const auto m = rows.empty() ? X.rows() : static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd out(m, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto src = static_cast<Eigen::Index>(cols[c]);
    if (rows.empty()) {
      out.col(static_cast<Eigen::Index>(c)) = X.col(src);
    } else {
      for (Eigen::Index r = 0; r < m; ++r) out(r, static_cast<Eigen::Index>(c)) = X(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]), src);
    }
  }
  return out;
}

double ols_ln_mse(std::size_t node, const ParentMask& parents, const Dataset& data) {
  const Eigen::VectorXd y = data.X.col(static_cast<Eigen::Index>(node));
  const double n = static_cast<double>(data.n());
  if (parents.empty()) {
    return floored_log((y.array() - y.mean()).square().sum() / n);
  }
  const auto cols = parents.indices();
  Eigen::MatrixXd design(data.X.rows(), static_cast<Eigen::Index>(cols.size()) + 1);
  design.col(0).setOnes();
  design.rightCols(static_cast<Eigen::Index>(cols.size())) = gather_columns(data.X, cols, {});
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  Eigen::VectorXd beta;
  if (qr.rank() < design.cols()) {
    log_event(Event::kPseudoInverse, "rank-deficient design for node " + std::to_string(node + 1));
    beta = design.completeOrthogonalDecomposition().solve(y);
  } else {
    beta = qr.solve(y);
  }
  return floored_log((y - design * beta).squaredNorm() / n);
}

double gp_ln_mse(std::size_t node, const ParentMask& parents, const Dataset& data,
                 std::span<const std::size_t> rows, double gp_noise) {
  const std::vector<std::size_t> target{node};
  Eigen::VectorXd y = gather_columns(data.X, target, rows).col(0);
  const auto m = y.size();
  y.array() -= y.mean();
  const double var = y.squaredNorm() / static_cast<double>(m);
  if (parents.empty()) return floored_log(var);

  const Eigen::MatrixXd inputs = gather_columns(data.X, parents.indices(), rows);
  const Eigen::VectorXd sq = inputs.rowwise().squaredNorm();
  Eigen::MatrixXd dist = -2.0 * inputs * inputs.transpose();
  dist.colwise() += sq;
  dist.rowwise() += sq.transpose();
  dist = dist.cwiseMax(0.0);

  std::vector<double> pairs;
  pairs.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a + 1; b < m; ++b) pairs.push_back(dist(a, b));
  }
  double median = 1.0;
  if (!pairs.empty()) {
    auto mid = pairs.begin() + static_cast<std::ptrdiff_t>(pairs.size() / 2);
    std::nth_element(pairs.begin(), mid, pairs.end());
    median = *mid;
    if (!(median > 0.0)) {
      const double mean = std::accumulate(pairs.begin(), pairs.end(), 0.0) / static_cast<double>(pairs.size());
      median = mean > 0.0 ? mean : 1.0;
    }
  }

  Eigen::MatrixXd K = (-0.5 / median * dist.array()).exp().matrix();
  double noise = std::max(gp_noise, 1e-12);
  for (int attempt = 0; attempt < 8; ++attempt, noise *= 10.0) {
    Eigen::MatrixXd Kn = K;
    Kn.diagonal().array() += noise;
    Eigen::LLT<Eigen::MatrixXd> llt(Kn);
    if (llt.info() != Eigen::Success) continue;
    // y - K (K + s I)^-1 y = s (K + s I)^-1 y
    const Eigen::VectorXd residual = noise * llt.solve(y);
    return floored_log(residual.squaredNorm() / static_cast<double>(m));
  }
  throw std::runtime_error("GP regression kernel is not positive definite for node " + std::to_string(node + 1));
}

double log1p_exp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct IrlsResult {
  double log_likelihood = 0.0;
  bool converged = false;
  bool diverging = false;
};

IrlsResult irls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double ridge) {
  constexpr int kMaxIter = 50;
  constexpr double kTol = 1e-8;
  constexpr double kDivergence = 30.0;
  const auto p = design.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  auto loglik = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = design * b;
    double ll = 0.0;
    for (Eigen::Index r = 0; r < eta.size(); ++r) ll += y(r) * eta(r) - log1p_exp(eta(r));
    return ll;
  };
  auto objective = [&](const Eigen::VectorXd& b) { return loglik(b) - 0.5 * ridge * b.squaredNorm(); };

  IrlsResult result;
  double current = objective(beta);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    const Eigen::ArrayXd mu = 1.0 / (1.0 + (-eta.array()).exp());
    const Eigen::ArrayXd w = (mu * (1.0 - mu)).max(1e-12);
    Eigen::MatrixXd H = design.transpose() * w.matrix().asDiagonal() * design;
    H.diagonal().array() += ridge;
    const Eigen::VectorXd grad = design.transpose() * (y.array() - mu).matrix() - ridge * beta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      result.diverging = true;
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    double next_obj = objective(next);
    for (int halve = 0; halve < 30 && !(next_obj >= current - 1e-12); ++halve) {
      scale *= 0.5;
      next = beta + scale * step;
      next_obj = objective(next);
    }
    beta = next;
    const double change = std::abs(next_obj - current);
    current = next_obj;
    if (beta.cwiseAbs().maxCoeff() > kDivergence) {
      result.diverging = true;
      break;
    }
    if (change < kTol) {
      result.converged = true;
      break;
    }
  }
  result.log_likelihood = loglik(beta);
  return result;
}

}  // namespace

std::string_view to_string(ScoreVariant v) {
  switch (v) {
    case ScoreVariant::kBicEv: return "bic-ev";
    case ScoreVariant::kBicNv: return "bic-nv";
    case ScoreVariant::kBicLogistic: return "bic-logistic";
  }
  return "unknown";
}

std::string_view to_string(Regressor r) { return r == Regressor::kLinear ? "linear" : "gp"; }

ScoreVariant parse_score_variant(std::string_view s) {
  for (auto v : {ScoreVariant::kBicEv, ScoreVariant::kBicNv, ScoreVariant::kBicLogistic}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown score '" + std::string(s) + "'");
}

Regressor parse_regressor(std::string_view s) {
  if (s == "linear") return Regressor::kLinear;
  if (s == "gp") return Regressor::kGp;
  throw std::invalid_argument("unknown regressor '" + std::string(s) + "'");
}

void check_compatible(const Dataset& data, const ScoreConfig& config) {
  if (data.n() == 0 || data.d() == 0) throw std::invalid_argument("dataset is empty");
  if (data.d() > kMaxNodes) throw std::invalid_argument("at most 128 variables are supported");
  const bool binary = data.is_binary();
  if (config.variant == ScoreVariant::kBicLogistic && !binary) {
    throw std::invalid_argument("bic-logistic requires 0/1 data");
  }
  if (config.variant != ScoreVariant::kBicLogistic && binary) {
    throw std::invalid_argument(std::string(to_string(config.variant)) + " requires continuous data, got 0/1 data");
  }
}

double local_ln_mse(std::size_t node, const ParentMask& parents, const Dataset& data, Regressor regressor,
                    std::span<const std::size_t> gp_rows, double gp_noise) {
  if (parents.test(node)) throw std::invalid_argument("parent set contains the node itself");
  return regressor == Regressor::kLinear ? ols_ln_mse(node, parents, data) : gp_ln_mse(node, parents, data, gp_rows, gp_noise);
}

double local_logistic_mll(std::size_t node, const ParentMask& parents, const Dataset& data) {
  if (parents.test(node)) throw std::invalid_argument("parent set contains the node itself");
  const Eigen::VectorXd y = data.X.col(static_cast<Eigen::Index>(node));
  const double n = static_cast<double>(data.n());
  if (parents.empty()) {
    const double q = y.mean();
    if (q <= 0.0 || q >= 1.0) return 0.0;
    return n * (q * std::log(q) + (1.0 - q) * std::log1p(-q));
  }
  const auto cols = parents.indices();
  Eigen::MatrixXd design(data.X.rows(), static_cast<Eigen::Index>(cols.size()) + 1);
  design.col(0).setOnes();
  design.rightCols(static_cast<Eigen::Index>(cols.size())) = gather_columns(data.X, cols, {});
  IrlsResult fit = irls(design, y, 0.0);
  if (fit.diverging || !fit.converged) {
    log_event(Event::kLogisticRidge, "separation in logistic fit of node " + std::to_string(node + 1) +
                                         ", refitting with ridge 1e-4");
    fit = irls(design, y, 1e-4);
  }
  return fit.log_likelihood;
}

double bic_nv(std::span<const double> locals, std::size_t edge_count, std::size_t n) {
  const double sum = std::accumulate(locals.begin(), locals.end(), 0.0);
  const double ln_n = std::log(static_cast<double>(n));
  return -static_cast<double>(n) * sum - static_cast<double>(edge_count) * ln_n;
}

double bic_ev(std::span<const double> locals, std::size_t edge_count, std::size_t n) {
  const double ln_n = std::log(static_cast<double>(n));
  const double d = static_cast<double>(locals.size());
  const double shift = *std::max_element(locals.begin(), locals.end());
  double acc = 0.0;
  for (double l : locals) acc += std::exp(l - shift);
  const double ln_mean = shift + std::log(acc) - std::log(d);
  return -static_cast<double>(n) * d * ln_mean - static_cast<double>(edge_count) * ln_n;
}

double bic_logistic_combine(std::span<const double> locals, std::size_t edge_count, std::size_t n) {
  const double sum = std::accumulate(locals.begin(), locals.end(), 0.0);
  return 2.0 * sum - static_cast<double>(edge_count) * std::log(static_cast<double>(n));
}

double combine_locals(ScoreVariant variant, std::span<const double> locals, std::size_t edge_count, std::size_t n) {
  switch (variant) {
    case ScoreVariant::kBicEv: return bic_ev(locals, edge_count, n);
    case ScoreVariant::kBicNv: return bic_nv(locals, edge_count, n);
    case ScoreVariant::kBicLogistic: return bic_logistic_combine(locals, edge_count, n);
  }
  throw std::logic_error("unhandled score variant");
}

double bic_logistic(const Dataset& data, const Dag& dag) {
  if (!data.is_binary()) throw std::invalid_argument("bic_logistic requires 0/1 data");
  std::vector<double> locals(dag.n_nodes());
  for (std::size_t i = 0; i < dag.n_nodes(); ++i) locals[i] = local_logistic_mll(i, dag.parents(i), data);
  return bic_logistic_combine(locals, dag.edge_count(), data.n());
}

std::optional<double> LocalScoreCache::find(std::size_t node, const ParentMask& parents) const {
  std::shared_lock lock(mutex_);
  const auto it = map_.find(Key{node, parents});
  if (it == map_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return it->second;
}

void LocalScoreCache::insert(std::size_t node, const ParentMask& parents, double value) {
  std::unique_lock lock(mutex_);
  map_.try_emplace(Key{node, parents}, value);
}

std::size_t LocalScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return map_.size();
}

double LocalScoreCache::hit_rate() const {
  const auto h = hits();
  const auto total = h + misses();
  return total == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(total);
}

void LocalScoreCache::clear() {
  std::unique_lock lock(mutex_);
  map_.clear();
  hits_.store(0);
  misses_.store(0);
}

std::vector<std::size_t> select_gp_rows(std::size_t n, std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (max_rows == 0 || n <= max_rows) return rows;
  Rng rng(seed);
  for (std::size_t i = 0; i < max_rows; ++i) std::swap(rows[i], rows[i + rng.below(n - i)]);
  rows.resize(max_rows);
  std::sort(rows.begin(), rows.end());
  return rows;
}

EvaluationRecord score_dag(const Dag& dag, const Dataset& data, const ScoreConfig& config, LocalScoreCache& cache) {
  if (dag.n_nodes() != data.d()) throw std::invalid_argument("DAG and data dimensions differ");
  std::vector<std::size_t> rows;
  if (config.regressor == Regressor::kGp) rows = select_gp_rows(data.n(), config.gp_max_rows, config.gp_subsample_seed);
  EvaluationRecord rec{dag, std::vector<double>(dag.n_nodes()), 0.0};
  for (std::size_t i = 0; i < dag.n_nodes(); ++i) {
    if (auto hit = cache.find(i, dag.parents(i))) {
      rec.locals[i] = *hit;
      continue;
    }
    const double v = config.variant == ScoreVariant::kBicLogistic
                         ? local_logistic_mll(i, dag.parents(i), data)
                         : local_ln_mse(i, dag.parents(i), data, config.regressor, rows, config.gp_noise);
    cache.insert(i, dag.parents(i), v);
    rec.locals[i] = v;
  }
  rec.total = combine_locals(config.variant, rec.locals, dag.edge_count(), data.n());
  return rec;
}

Scorer::Scorer(const Dataset& data, ScoreConfig config) : data_(data), config_(config) {
  check_compatible(data_, config_);
  if (config_.variant != ScoreVariant::kBicLogistic && config_.regressor == Regressor::kLinear) {
    const Eigen::MatrixXd centered = data_.X.rowwise() - data_.X.colwise().mean();
    covariance_ = centered.transpose() * centered / static_cast<double>(data_.n());
  }
  if (config_.regressor == Regressor::kGp) {
    gp_rows_ = select_gp_rows(data_.n(), config_.gp_max_rows, config_.gp_subsample_seed);
  }
}

double Scorer::linear_from_covariance(std::size_t node, const ParentMask& parents) const {
  const auto i = static_cast<Eigen::Index>(node);
  if (parents.empty()) return floored_log(covariance_(i, i));
  const auto cols = parents.indices();
  const auto m = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd sxx(m, m);
  Eigen::VectorXd sxy(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto ca = static_cast<Eigen::Index>(cols[static_cast<std::size_t>(a)]);
    sxy(a) = covariance_(ca, i);
    for (Eigen::Index b = 0; b < m; ++b) sxx(a, b) = covariance_(ca, static_cast<Eigen::Index>(cols[static_cast<std::size_t>(b)]));
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sxx);
  const double scale = sxx.diagonal().maxCoeff();
  const bool well_posed = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                          ldlt.vectorD().minCoeff() > 1e-12 * std::max(scale, 1e-300);
  Eigen::VectorXd beta;
  if (well_posed) {
    beta = ldlt.solve(sxy);
  } else {
    log_event(Event::kPseudoInverse, "singular normal equations for node " + std::to_string(node + 1));
    beta = sxx.completeOrthogonalDecomposition().solve(sxy);
  }
  return floored_log(covariance_(i, i) - sxy.dot(beta));
}

double Scorer::compute_local(std::size_t node, const ParentMask& parents) const {
  if (config_.variant == ScoreVariant::kBicLogistic) return local_logistic_mll(node, parents, data_);
  if (config_.regressor == Regressor::kLinear) return linear_from_covariance(node, parents);
  return gp_ln_mse(node, parents, data_, gp_rows_, config_.gp_noise);
}

double Scorer::local(std::size_t node, const ParentMask& parents) {
  if (cache_enabled_) {
    if (auto hit = cache_.find(node, parents)) return *hit;
  }
  const double v = compute_local(node, parents);
  if (cache_enabled_) cache_.insert(node, parents, v);
  return v;
}

EvaluationRecord Scorer::score(const Dag& dag) {
  if (dag.n_nodes() != data_.d()) throw std::invalid_argument("DAG and data dimensions differ");
  EvaluationRecord rec{dag, std::vector<double>(dag.n_nodes()), 0.0};
  for (std::size_t i = 0; i < dag.n_nodes(); ++i) rec.locals[i] = local(i, dag.parents(i));
  rec.total = combine_locals(config_.variant, rec.locals, dag.edge_count(), data_.n());
  return rec;
}

std::vector<EvaluationRecord> Scorer::score_batch(std::span<const Dag> dags) {
  if (!cache_enabled_) {
    std::vector<EvaluationRecord> out;
    out.reserve(dags.size());
    for (const Dag& g : dags) out.push_back(score(g));
    return out;
  }
  // Pass 1: look every local up once, queue distinct misses.
  struct Job {
    std::size_t node;
    ParentMask parents;
    double value = 0.0;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<std::ptrdiff_t>> slot(dags.size());  // >= 0: job index, < 0: cached
  std::vector<EvaluationRecord> out;
  out.reserve(dags.size());
  std::vector<std::unordered_map<ParentMask, std::size_t, ParentMaskHash>> queued(data_.d());
  for (std::size_t g = 0; g < dags.size(); ++g) {
    const Dag& dag = dags[g];
    if (dag.n_nodes() != data_.d()) throw std::invalid_argument("DAG and data dimensions differ");
    out.push_back(EvaluationRecord{dag, std::vector<double>(dag.n_nodes()), 0.0});
    slot[g].assign(dag.n_nodes(), -1);
    for (std::size_t i = 0; i < dag.n_nodes(); ++i) {
      const ParentMask& pa = dag.parents(i);
      if (auto it = queued[i].find(pa); it != queued[i].end()) {
        slot[g][i] = static_cast<std::ptrdiff_t>(it->second);
      } else if (auto hit = cache_.find(i, pa)) {
        out[g].locals[i] = *hit;
      } else {
        queued[i].emplace(pa, jobs.size());
        slot[g][i] = static_cast<std::ptrdiff_t>(jobs.size());
        jobs.push_back({i, pa});
      }
    }
  }
  // Pass 2: fit misses in parallel.
  const auto count = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    auto& job = jobs[static_cast<std::size_t>(j)];
    job.value = compute_local(job.node, job.parents);
  }
  for (const auto& job : jobs) cache_.insert(job.node, job.parents, job.value);
  for (std::size_t g = 0; g < dags.size(); ++g) {
    for (std::size_t i = 0; i < dags[g].n_nodes(); ++i) {
      if (slot[g][i] >= 0) out[g].locals[i] = jobs[static_cast<std::size_t>(slot[g][i])].value;
    }
    out[g].total = combine_locals(config_.variant, out[g].locals, dags[g].edge_count(), data_.n());
  }
  return out;
}

}  // namespace drbo
