#include "drbo/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "drbo/diagnostics.hpp"

namespace drbo {

namespace {

using DropMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct BatchActivations {
  Eigen::MatrixXd pre;     // N x h, pre-dropout
  Eigen::MatrixXd scaled;  // N x h, after dropout scaling
  Eigen::MatrixXd relu;    // N x h
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd var;  // biased
};

BatchActivations hidden_batch(const NetTensors& p, const Eigen::MatrixXd& X, const DropMatrix& drop, double dropout) {
  BatchActivations a;
  a.pre = X * p.W1;
  a.pre.rowwise() += p.b1.transpose();
  const double inv_keep = 1.0 / (1.0 - dropout);
  a.scaled = a.pre.array() * (1 - drop.cast<double>().array()) * inv_keep;
  a.relu = a.scaled.cwiseMax(0.0);
  const double n = static_cast<double>(X.rows());
  a.mean = a.relu.colwise().sum() / n;
  a.var = (a.relu.rowwise() - a.mean).array().square().colwise().sum() / n;
  return a;
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
  }
}

DropMatrix draw_masks(Eigen::Index rows, Eigen::Index cols, double dropout, Rng& rng) {
  DropMatrix drop(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) drop(r, c) = rng.uniform() < dropout ? 1 : 0;
  }
  return drop;
}

nlohmann::json to_json_vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json tensors_to_json(const NetTensors& t) {
  nlohmann::json j;
  j["W1"] = std::vector<double>(t.W1.data(), t.W1.data() + t.W1.size());
  j["b1"] = to_json_vec(t.b1);
  j["gamma"] = to_json_vec(t.gamma);
  j["beta"] = to_json_vec(t.beta);
  j["W2"] = to_json_vec(t.W2);
  j["b2"] = t.b2;
  return j;
}

NetTensors tensors_from_json(const nlohmann::json& j, std::size_t d_in, std::size_t h) {
  NetTensors t;
  const auto w1 = j.at("W1").get<std::vector<double>>();
  if (w1.size() != d_in * h) throw std::runtime_error("checkpoint W1 has wrong size");
  t.W1 = Eigen::Map<const Eigen::MatrixXd>(w1.data(), static_cast<Eigen::Index>(d_in), static_cast<Eigen::Index>(h));
  t.b1 = vec_from_json(j.at("b1"));
  t.gamma = vec_from_json(j.at("gamma"));
  t.beta = vec_from_json(j.at("beta"));
  t.W2 = vec_from_json(j.at("W2"));
  t.b2 = j.at("b2").get<double>();
  const auto hh = static_cast<Eigen::Index>(h);
  if (t.b1.size() != hh || t.gamma.size() != hh || t.beta.size() != hh || t.W2.size() != hh) {
    throw std::runtime_error("checkpoint hidden-layer vectors have wrong size");
  }
  return t;
}

}  // namespace

NetTensors NetTensors::zeros_like(const NetTensors& t) {
  NetTensors z;
  z.W1 = Eigen::MatrixXd::Zero(t.W1.rows(), t.W1.cols());
  z.b1 = Eigen::VectorXd::Zero(t.b1.size());
  z.gamma = Eigen::VectorXd::Zero(t.gamma.size());
  z.beta = Eigen::VectorXd::Zero(t.beta.size());
  z.W2 = Eigen::VectorXd::Zero(t.W2.size());
  z.b2 = 0.0;
  return z;
}

std::size_t NetTensors::size() const {
  return static_cast<std::size_t>(W1.size() + b1.size() + gamma.size() + beta.size() + W2.size()) + 1;
}

double& NetTensors::at(std::size_t flat) {
  auto i = static_cast<Eigen::Index>(flat);
  if (i < W1.size()) return W1.data()[i];
  i -= W1.size();
  if (i < b1.size()) return b1(i);
  i -= b1.size();
  if (i < gamma.size()) return gamma(i);
  i -= gamma.size();
  if (i < beta.size()) return beta(i);
  i -= beta.size();
  if (i < W2.size()) return W2(i);
  i -= W2.size();
  if (i == 0) return b2;
  throw std::out_of_range("NetTensors index out of range");
}

double NetTensors::at(std::size_t flat) const { return const_cast<NetTensors*>(this)->at(flat); }

bool NetTensors::all_finite() const {
  return W1.allFinite() && b1.allFinite() && gamma.allFinite() && beta.allFinite() && W2.allFinite() &&
         std::isfinite(b2);
}

DropoutNet::DropoutNet(std::size_t d_in, std::size_t hidden, double dropout, Rng& init_rng) : dropout_(dropout) {
  if (!(dropout > 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout rate must be in (0, 1)");
  if (d_in == 0 || hidden == 0) throw std::invalid_argument("network dimensions must be positive");
  const auto di = static_cast<Eigen::Index>(d_in);
  const auto h = static_cast<Eigen::Index>(hidden);
  // Fan-in uniform initialization, as torch.nn.Linear.
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  params_.W1.resize(di, h);
  fill_uniform(params_.W1, bound1, init_rng);
  params_.b1.resize(h);
  fill_uniform(params_.b1, bound1, init_rng);
  params_.gamma = Eigen::VectorXd::Ones(h);
  params_.beta = Eigen::VectorXd::Zero(h);
  params_.W2.resize(h);
  fill_uniform(params_.W2, bound2, init_rng);
  params_.b2 = init_rng.uniform(-bound2, bound2);
  running_mean_ = Eigen::VectorXd::Zero(h);
  running_var_ = Eigen::VectorXd::Ones(h);
}

void DropoutNet::set_running_stats(Eigen::VectorXd mean, Eigen::VectorXd var) {
  if (mean.size() != params_.b1.size() || var.size() != params_.b1.size()) {
    throw std::invalid_argument("running statistics must have one entry per hidden unit");
  }
  running_mean_ = std::move(mean);
  running_var_ = std::move(var);
}

double DropoutNet::forward_with_mask(std::span<const double> x, std::span<const std::uint8_t> drop) const {
  const auto h = params_.b1.size();
  if (x.size() != d_in()) throw std::invalid_argument("input width does not match the network");
  if (static_cast<Eigen::Index>(drop.size()) != h) throw std::invalid_argument("mask width does not match the network");
  const double inv_keep = 1.0 / (1.0 - dropout_);
  double out = params_.b2;
  for (Eigen::Index u = 0; u < h; ++u) {
    double pre = params_.b1(u);
    for (std::size_t j = 0; j < x.size(); ++j) pre += params_.W1(static_cast<Eigen::Index>(j), u) * x[j];
    const double act = drop[static_cast<std::size_t>(u)] != 0 ? 0.0 : std::max(pre * inv_keep, 0.0);
    const double normed = (act - running_mean_(u)) / std::sqrt(running_var_(u) + bn_eps_);
    out += params_.W2(u) * (params_.gamma(u) * normed + params_.beta(u));
  }
  return out;
}

double DropoutNet::forward_stochastic(std::span<const double> x, Rng& rng) const {
  std::vector<std::uint8_t> drop(hidden());
  for (auto& m : drop) m = rng.uniform() < dropout_ ? 1 : 0;
  return forward_with_mask(x, drop);
}

double DropoutNet::batch_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& target, const DropMatrix& drop,
                              NetTensors* grad) const {
  const double n = static_cast<double>(X.rows());
  const BatchActivations a = hidden_batch(params_, X, drop, dropout_);
  const Eigen::RowVectorXd inv_std = (a.var.array() + bn_eps_).rsqrt();
  const Eigen::MatrixXd zhat = (a.relu.rowwise() - a.mean).array().rowwise() * inv_std.array();
  const Eigen::MatrixXd y = (zhat.array().rowwise() * params_.gamma.transpose().array()).rowwise() +
                            params_.beta.transpose().array();
  const Eigen::VectorXd out = (y * params_.W2).array() + params_.b2;
  const Eigen::VectorXd err = out - target;
  const double loss = err.squaredNorm() / n;
  if (grad == nullptr) return loss;

  const Eigen::VectorXd dout = 2.0 * err / n;
  grad->W2 = y.transpose() * dout;
  grad->b2 = dout.sum();
  const Eigen::MatrixXd dy = dout * params_.W2.transpose();
  grad->gamma = (dy.array() * zhat.array()).colwise().sum().transpose();
  grad->beta = dy.colwise().sum().transpose();
  const Eigen::MatrixXd dz = dy.array().rowwise() * params_.gamma.transpose().array();
  const Eigen::RowVectorXd dz_mean = dz.colwise().sum() / n;
  const Eigen::RowVectorXd dzz_mean = (dz.array() * zhat.array()).colwise().sum() / n;
  Eigen::MatrixXd dr = dz.rowwise() - dz_mean;
  dr -= (zhat.array().rowwise() * dzz_mean.array()).matrix();
  dr = dr.array().rowwise() * inv_std.array();
  const double inv_keep = 1.0 / (1.0 - dropout_);
  const Eigen::MatrixXd dpre =
      dr.array() * (a.scaled.array() > 0.0).cast<double>() * (1 - drop.cast<double>().array()) * inv_keep;
  grad->W1 = X.transpose() * dpre;
  grad->b1 = dpre.colwise().sum().transpose();
  return loss;
}

void DropoutNet::update_running_stats(const Eigen::MatrixXd& X, const DropMatrix& drop, double momentum) {
  const BatchActivations a = hidden_batch(params_, X, drop, dropout_);
  const double n = static_cast<double>(X.rows());
  const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
  running_mean_ = (1.0 - momentum) * running_mean_ + momentum * a.mean.transpose();
  running_var_ = (1.0 - momentum) * running_var_ + momentum * unbias * a.var.transpose();
}

double sample_plan(const InferencePlan& plan, double dropout, Rng& rng) {
  double value = plan.full;
  const auto h = static_cast<std::ptrdiff_t>(plan.contrib.size());
  const double log_keep = std::log1p(-dropout);
  std::ptrdiff_t pos = -1;
  while (true) {
    // Number of kept units before the next dropped one ~ Geometric(p).
    const double skip = std::floor(std::log(rng.uniform_pos()) / log_keep);
    if (skip >= static_cast<double>(h)) break;
    pos += 1 + static_cast<std::ptrdiff_t>(skip);
    if (pos >= h) break;
    value -= plan.contrib[static_cast<std::size_t>(pos)];
  }
  return value;
}

void ReplayBuffer::insert(const Item& item, Rng& rng) {
  ++seen_;
  if (items_.size() < capacity_) {
    items_.push_back(item);
    return;
  }
  const std::uint64_t slot = rng.below(seen_);
  if (slot < capacity_) items_[static_cast<std::size_t>(slot)] = item;
}

void ReplayBuffer::restore(std::vector<Item> items, std::uint64_t seen) {
  if (items.size() > capacity_ || items.size() > seen) throw std::invalid_argument("inconsistent replay buffer state");
  items_ = std::move(items);
  seen_ = seen;
}

void reservoir_update(ReplayBuffer& buffer, const ReplayBuffer::Item& item, Rng& rng) { buffer.insert(item, rng); }

void TargetScaler::fit(std::span<const double> values) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  scale = sd > 1e-8 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  fitted = true;
}

SurrogateEnsemble::SurrogateEnsemble(std::size_t n_nodes, SurrogateParams params, std::uint64_t seed)
    : params_(params) {
  if (n_nodes == 0 || n_nodes > kMaxNodes) throw std::invalid_argument("ensemble needs 1..128 nodes");
  nets_.reserve(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    Rng init(derive_seed(seed, 0x1417, i));
    nets_.emplace_back(n_nodes, params_.hidden, params_.dropout, init);
    nets_.back().set_bn_eps(params_.bn_eps);
    adam_.push_back({NetTensors::zeros_like(nets_.back().params()), NetTensors::zeros_like(nets_.back().params()), 0});
    buffers_.emplace_back(params_.replay_capacity);
  }
  scalers_.resize(n_nodes);
}

InferencePlan SurrogateEnsemble::plan(std::size_t node, const ParentMask& parents) const {
  const DropoutNet& net = nets_[node];
  const NetTensors& p = net.params();
  const TargetScaler& sc = scalers_[node];
  const auto h = p.b1.size();
  Eigen::VectorXd pre = p.b1;
  parents.for_each([&](std::size_t j) { pre += p.W1.row(static_cast<Eigen::Index>(j)).transpose(); });

  InferencePlan plan;
  plan.contrib.resize(static_cast<std::size_t>(h));
  const double inv_keep = 1.0 / (1.0 - net.dropout());
  double base = p.b2;
  double total = 0.0;
  for (Eigen::Index u = 0; u < h; ++u) {
    const double inv_std = 1.0 / std::sqrt(net.running_var()(u) + net.bn_eps());
    const double slope = p.W2(u) * p.gamma(u) * inv_std;
    base += p.W2(u) * (p.beta(u) - p.gamma(u) * net.running_mean()(u) * inv_std);
    const double c = (sc.scale * slope * inv_keep) * std::max(pre(u), 0.0);
    plan.contrib[static_cast<std::size_t>(u)] = c;
    total += c;
  }
  plan.base = sc.mean + sc.scale * base;
  plan.full = plan.base + total;
  return plan;
}

double SurrogateEnsemble::sample_local(std::size_t node, const ParentMask& parents, Rng& rng) const {
  const auto x = expand_mask(parents, n_nodes());
  return scalers_[node].mean + scalers_[node].scale * nets_[node].forward_stochastic(x, rng);
}

double SurrogateEnsemble::mean_local(std::size_t node, const ParentMask& parents) const {
  const auto x = expand_mask(parents, n_nodes());
  const std::vector<std::uint8_t> keep_all(nets_[node].hidden(), 0);
  return scalers_[node].mean + scalers_[node].scale * nets_[node].forward_with_mask(x, keep_all);
}

double SurrogateEnsemble::train_node(std::size_t node, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Rng& rng) {
  DropoutNet& net = nets_[node];
  AdamState& adam = adam_[node];
  double lr = params_.learning_rate;
  double last_loss = 0.0;
  NetTensors grad = NetTensors::zeros_like(net.params());
  for (std::size_t step = 0; step < params_.n_grads; ++step) {
    const DropMatrix drop = draw_masks(X.rows(), static_cast<Eigen::Index>(net.hidden()), net.dropout(), rng);
    const double loss = net.batch_loss(X, y, drop, &grad);
    if (!std::isfinite(loss) || !grad.all_finite()) {
      log_event(Event::kNonFiniteLoss, "non-finite surrogate loss at node " + std::to_string(node + 1) +
                                           ", halving the step size");
      lr *= 0.5;
      continue;
    }
    last_loss = loss;
    ++adam.step;
    const double b1 = params_.adam_beta1;
    const double b2 = params_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
    NetTensors& w = net.params();
    NetTensors candidate = w;
    AdamState next = adam;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grad.at(k);
      double& m = next.m.at(k);
      double& v = next.v.at(k);
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g * g;
      candidate.at(k) -= lr * (m / c1) / (std::sqrt(v / c2) + params_.adam_eps);
    }
    if (!candidate.all_finite()) {
      log_event(Event::kNonFiniteLoss, "non-finite surrogate update at node " + std::to_string(node + 1));
      --adam.step;
      lr *= 0.5;
      continue;
    }
    w = std::move(candidate);
    adam = std::move(next);
    net.update_running_stats(X, drop, params_.bn_momentum);
  }
  return last_loss;
}

double SurrogateEnsemble::train_continual(std::span<const EvaluationRecord> batch, Rng& rng) {
  if (batch.empty()) return 0.0;
  const std::size_t d = n_nodes();
  const std::uint64_t call_seed = rng();
  std::vector<double> losses(d, 0.0);
  const auto nodes = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ni = 0; ni < nodes; ++ni) {
    const auto node = static_cast<std::size_t>(ni);
    Rng node_rng(derive_seed(call_seed, node));
    const auto& replay = buffers_[node].items();
    const auto rows = static_cast<Eigen::Index>(batch.size() + replay.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(d));
    Eigen::VectorXd y(rows);
    Eigen::Index r = 0;
    std::vector<double> fresh;
    fresh.reserve(batch.size());
    for (const auto& rec : batch) {
      if (rec.locals.size() != d) throw std::invalid_argument("record width does not match the ensemble");
      rec.dag.parents(node).for_each([&](std::size_t j) { X(r, static_cast<Eigen::Index>(j)) = 1.0; });
      y(r++) = rec.locals[node];
      fresh.push_back(rec.locals[node]);
    }
    for (const auto& item : replay) {
      item.parents.for_each([&](std::size_t j) { X(r, static_cast<Eigen::Index>(j)) = 1.0; });
      y(r++) = item.value;
    }
    TargetScaler& sc = scalers_[node];
    if (!sc.fitted) sc.fit(fresh);
    const Eigen::VectorXd y_std = (y.array() - sc.mean) / sc.scale;
    losses[node] = train_node(node, X, y_std, node_rng);
    for (const auto& rec : batch) buffers_[node].insert({node, rec.dag.parents(node), rec.locals[node]}, node_rng);
  }
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(d);
}

std::string SurrogateEnsemble::to_json() const {
  nlohmann::json j;
  j["format"] = "drbo-surrogate-ensemble";
  j["version"] = 1;
  j["n_nodes"] = n_nodes();
  j["params"] = {{"hidden", params_.hidden},
                 {"dropout", params_.dropout},
                 {"learning_rate", params_.learning_rate},
                 {"n_grads", params_.n_grads},
                 {"replay_capacity", params_.replay_capacity},
                 {"adam_beta1", params_.adam_beta1},
                 {"adam_beta2", params_.adam_beta2},
                 {"adam_eps", params_.adam_eps},
                 {"bn_eps", params_.bn_eps},
                 {"bn_momentum", params_.bn_momentum}};
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < n_nodes(); ++i) {
    nlohmann::json node;
    node["weights"] = tensors_to_json(nets_[i].params());
    node["running_mean"] = to_json_vec(nets_[i].running_mean());
    node["running_var"] = to_json_vec(nets_[i].running_var());
    node["adam"] = {{"step", adam_[i].step}, {"m", tensors_to_json(adam_[i].m)}, {"v", tensors_to_json(adam_[i].v)}};
    node["scaler"] = {{"mean", scalers_[i].mean}, {"scale", scalers_[i].scale}, {"fitted", scalers_[i].fitted}};
    auto items = nlohmann::json::array();
    for (const auto& it : buffers_[i].items()) {
      items.push_back({it.parents.word(0), it.parents.word(1), it.value});
    }
    node["replay"] = {{"seen", buffers_[i].seen()}, {"items", std::move(items)}};
    nodes.push_back(std::move(node));
  }
  return j.dump();
}

SurrogateEnsemble SurrogateEnsemble::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "drbo-surrogate-ensemble") throw std::runtime_error("not a surrogate checkpoint");
  if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
  const auto& pj = j.at("params");
  SurrogateParams params;
  params.hidden = pj.at("hidden").get<std::size_t>();
  params.dropout = pj.at("dropout").get<double>();
  params.learning_rate = pj.at("learning_rate").get<double>();
  params.n_grads = pj.at("n_grads").get<std::size_t>();
  params.replay_capacity = pj.at("replay_capacity").get<std::size_t>();
  params.adam_beta1 = pj.at("adam_beta1").get<double>();
  params.adam_beta2 = pj.at("adam_beta2").get<double>();
  params.adam_eps = pj.at("adam_eps").get<double>();
  params.bn_eps = pj.at("bn_eps").get<double>();
  params.bn_momentum = pj.at("bn_momentum").get<double>();
  const auto d = j.at("n_nodes").get<std::size_t>();
  SurrogateEnsemble ens(d, params, 0);
  const auto& nodes = j.at("nodes");
  if (nodes.size() != d) throw std::runtime_error("checkpoint node count mismatch");
  for (std::size_t i = 0; i < d; ++i) {
    const auto& node = nodes[i];
    ens.nets_[i].params() = tensors_from_json(node.at("weights"), d, params.hidden);
    ens.nets_[i].set_running_stats(vec_from_json(node.at("running_mean")), vec_from_json(node.at("running_var")));
    ens.adam_[i].step = node.at("adam").at("step").get<std::uint64_t>();
    ens.adam_[i].m = tensors_from_json(node.at("adam").at("m"), d, params.hidden);
    ens.adam_[i].v = tensors_from_json(node.at("adam").at("v"), d, params.hidden);
    ens.scalers_[i].mean = node.at("scaler").at("mean").get<double>();
    ens.scalers_[i].scale = node.at("scaler").at("scale").get<double>();
    ens.scalers_[i].fitted = node.at("scaler").at("fitted").get<bool>();
    std::vector<ReplayBuffer::Item> items;
    for (const auto& it : node.at("replay").at("items")) {
      ReplayBuffer::Item item;
      item.node = i;
      const auto w0 = it.at(0).get<std::uint64_t>();
      const auto w1 = it.at(1).get<std::uint64_t>();
      for (std::size_t b = 0; b < 64; ++b) {
        if ((w0 >> b) & 1U) item.parents.set(b);
        if ((w1 >> b) & 1U) item.parents.set(64 + b);
      }
      item.value = it.at(2).get<double>();
      items.push_back(item);
    }
    ens.buffers_[i].restore(std::move(items), node.at("replay").at("seen").get<std::uint64_t>());
  }
  return ens;
}

std::vector<double> expand_mask(const ParentMask& parents, std::size_t d) {
  std::vector<double> x(d, 0.0);
  parents.for_each([&](std::size_t j) {
    if (j < d) x[j] = 1.0;
  });
  return x;
}

std::vector<double> thompson_sample_locals(const SurrogateEnsemble& ensemble, std::span<const ParentMask> parent_masks,
                                           Rng& rng) {
  if (parent_masks.size() != ensemble.n_nodes()) throw std::invalid_argument("one parent mask per node expected");
  std::vector<double> out(parent_masks.size());
  for (std::size_t i = 0; i < parent_masks.size(); ++i) out[i] = ensemble.sample_local(i, parent_masks[i], rng);
  return out;
}

double combine_af(std::span<const double> locals, std::size_t edge_count, std::size_t n, ScoreVariant variant) {
  const double ln_n = std::log(static_cast<double>(n));
  const double penalty = static_cast<double>(edge_count) * ln_n;
  const double nn = static_cast<double>(n);
  switch (variant) {
    case ScoreVariant::kBicNv: {
      double sum = 0.0;
      for (double l : locals) sum += l;
      return -nn * sum - penalty;
    }
    case ScoreVariant::kBicEv: {
      const double d = static_cast<double>(locals.size());
      double hi = locals.empty() ? 0.0 : locals[0];
      for (double l : locals) hi = std::max(hi, l);
      double acc = 0.0;
      for (double l : locals) acc += std::exp(l - hi);
      return -nn * d * (hi + std::log(acc / d)) - penalty;
    }
    case ScoreVariant::kBicLogistic: {
      double sum = 0.0;
      for (double l : locals) sum += l;
      return 2.0 * sum - penalty;
    }
  }
  throw std::logic_error("unhandled score variant");
}

}  // namespace drbo
