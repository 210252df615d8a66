#include "drbo/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drbo/graph.hpp"

namespace drbo {

namespace {

void map_reference(std::span<const double> z, std::size_t d, std::size_t k, std::span<ParentMask> masks) {
  const std::size_t dims = latent_dims(d, k);
  const std::size_t count = z.size() / dims;
  for (std::size_t c = 0; c < count; ++c) {
    const LatentPoint pt(d, k, std::vector<double>(z.begin() + static_cast<std::ptrdiff_t>(c * dims),
                                                   z.begin() + static_cast<std::ptrdiff_t>((c + 1) * dims)));
    const Dag dag = vec_to_dag(pt);
    std::copy(dag.parent_masks().begin(), dag.parent_masks().end(), masks.begin() + static_cast<std::ptrdiff_t>(c * d));
  }
}

void map_parallel(std::span<const double> z, std::size_t d, std::size_t k, std::span<ParentMask> masks) {
  const std::size_t dims = latent_dims(d, k);
  const auto count = static_cast<std::ptrdiff_t>(z.size() / dims);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < count; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    vec_to_parent_masks(z.subspan(uc * dims, dims), d, k, masks.subspan(uc * d, d));
  }
}

std::size_t edge_count(std::span<const ParentMask> row) {
  std::size_t e = 0;
  for (const auto& m : row) e += m.count();
  return e;
}

}  // namespace

void map_candidates(std::span<const double> z, std::size_t d, std::size_t k, std::span<ParentMask> masks,
                    ExecPolicy policy) {
  const std::size_t dims = latent_dims(d, k);
  if (dims == 0 || z.size() % dims != 0) throw std::invalid_argument("latent buffer is not a whole number of points");
  if (masks.size() != z.size() / dims * d) throw std::invalid_argument("mask buffer has the wrong size");
  if (policy == ExecPolicy::kSerialReference) {
    map_reference(z, d, k, masks);
  } else {
    map_parallel(z, d, k, masks);
  }
}

ThompsonSampler::ThompsonSampler(const SurrogateEnsemble& ensemble)
    : hidden_(ensemble.params().hidden), dropout_(ensemble.params().dropout) {
  nodes_.reserve(ensemble.n_nodes());
  for (std::size_t i = 0; i < ensemble.n_nodes(); ++i) {
    const DropoutNet& net = ensemble.net(i);
    const NetTensors& p = net.params();
    const TargetScaler& sc = ensemble.scaler(i);
    const double inv_keep = 1.0 / (1.0 - net.dropout());
    NodeTable t;
    t.coef.resize(p.b1.size());
    double base = p.b2;
    for (Eigen::Index u = 0; u < p.b1.size(); ++u) {
      const double inv_std = 1.0 / std::sqrt(net.running_var()(u) + net.bn_eps());
      const double slope = p.W2(u) * p.gamma(u) * inv_std;
      base += p.W2(u) * (p.beta(u) - p.gamma(u) * net.running_mean()(u) * inv_std);
      t.coef(u) = sc.scale * slope * inv_keep;
    }
    t.base = sc.mean + sc.scale * base;
    t.w1t = p.W1.transpose();
    t.b1 = p.b1;
    nodes_.push_back(std::move(t));
  }
}

double ThompsonSampler::sample(std::size_t node, const ParentMask& parents, Rng& rng, std::span<double> scratch) const {
  const NodeTable& t = nodes_[node];
  const auto h = static_cast<std::ptrdiff_t>(hidden_);
  double* pre = scratch.data();
  double* contrib = scratch.data() + hidden_;
  std::copy(t.b1.data(), t.b1.data() + h, pre);
  parents.for_each([&](std::size_t j) {
    const double* col = t.w1t.data() + static_cast<std::ptrdiff_t>(j) * h;
    for (std::ptrdiff_t u = 0; u < h; ++u) pre[u] += col[u];
  });
  double total = 0.0;
  for (std::ptrdiff_t u = 0; u < h; ++u) {
    contrib[u] = t.coef(u) * std::max(pre[u], 0.0);
    total += contrib[u];
  }
  double value = t.base + total;
  const double log_keep = std::log1p(-dropout_);
  std::ptrdiff_t pos = -1;
  while (true) {
    const double skip = std::floor(std::log(rng.uniform_pos()) / log_keep);
    if (skip >= static_cast<double>(h)) break;
    pos += 1 + static_cast<std::ptrdiff_t>(skip);
    if (pos >= h) break;
    value -= contrib[pos];
  }
  return value;
}

void thompson_acquisition(const SurrogateEnsemble& ensemble, std::span<const ParentMask> masks, std::size_t n,
                          ScoreVariant variant, std::uint64_t stream_seed, std::span<double> out, ExecPolicy policy) {
  const std::size_t d = ensemble.n_nodes();
  if (masks.size() != out.size() * d) throw std::invalid_argument("one score slot per candidate expected");
  const auto count = static_cast<std::ptrdiff_t>(out.size());
  if (policy == ExecPolicy::kSerialReference) {
    std::vector<double> locals(d);
    for (std::ptrdiff_t c = 0; c < count; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      Rng rng(derive_seed(stream_seed, uc));
      const auto row = masks.subspan(uc * d, d);
      for (std::size_t i = 0; i < d; ++i) {
        locals[i] = sample_plan(ensemble.plan(i, row[i]), ensemble.params().dropout, rng);
      }
      out[uc] = combine_af(locals, edge_count(row), n, variant);
    }
    return;
  }
  const ThompsonSampler sampler(ensemble);
#pragma omp parallel
  {
    std::vector<double> locals(d);
    std::vector<double> scratch(2 * sampler.hidden());
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < count; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      Rng rng(derive_seed(stream_seed, uc));
      const auto row = masks.subspan(uc * d, d);
      for (std::size_t i = 0; i < d; ++i) locals[i] = sampler.sample(i, row[i], rng, scratch);
      out[uc] = combine_af(locals, edge_count(row), n, variant);
    }
  }
}

}  // namespace drbo
