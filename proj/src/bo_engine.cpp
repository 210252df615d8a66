#include "drbo/bo_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "drbo/pruning.hpp"

namespace drbo {

namespace {

constexpr std::uint64_t kSobolTag = 0x50B0;
constexpr std::uint64_t kProposalTag = 0x7207;
constexpr std::uint64_t kAcquisitionTag = 0xACC0;
constexpr std::size_t kChunk = 4096;

std::uint64_t row_hash(std::span<const ParentMask> row) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (const auto& m : row) h = splitmix64(h ^ m.hash());
  return h;
}

}  // namespace

TrustRegion::TrustRegion(LatentPoint center, TrustRegionParams params)
    : center_(std::move(center)), params_(params), length_(params.length_init) {
  if (!(params.length_min > 0.0 && params.length_min <= params.length_init && params.length_init <= params.length_max)) {
    throw std::invalid_argument("trust region lengths must satisfy 0 < L_min <= L_init <= L_max");
  }
  if (params.success_tolerance < 1 || params.failure_tolerance < 1) {
    throw std::invalid_argument("trust region tolerances must be positive");
  }
}

void TrustRegion::update(bool improved, const LatentPoint* new_best) {
  if (improved) {
    ++successes_;
    failures_ = 0;
    if (new_best != nullptr) center_ = *new_best;
    if (successes_ >= params_.success_tolerance) {
      length_ = std::min(2.0 * length_, params_.length_max);
      successes_ = 0;
    }
  } else {
    ++failures_;
    successes_ = 0;
    if (failures_ >= params_.failure_tolerance) {
      length_ = std::max(length_ / 2.0, params_.length_min);
      failures_ = 0;
    }
  }
}

void update_trust_region(TrustRegion& tr, bool improved, const std::optional<LatentPoint>& new_best) {
  tr.update(improved, new_best ? &*new_best : nullptr);
}

double perturb_probability(std::size_t dims, double budget) {
  return std::min(1.0, budget / static_cast<double>(dims));
}

void propose_candidate(const TrustRegion& tr, const SobolSequence& sobol, std::uint64_t stream_seed,
                       std::size_t index, std::span<double> out) {
  const auto center = tr.center().z();
  const std::size_t dims = center.size();
  const double prob = perturb_probability(dims, tr.params().perturb_budget);
  const double half = tr.length() / 2.0;
  Rng rng(derive_seed(stream_seed, index));
  auto perturb = [&](std::size_t j) {
    const double lo = std::max(-1.0, center[j] - half);
    const double hi = std::min(1.0, center[j] + half);
    out[j] = lo + (hi - lo) * sobol.coordinate(index, j);
  };
  bool any = false;
  for (std::size_t j = 0; j < dims; ++j) {
    if (rng.uniform() < prob) {
      perturb(j);
      any = true;
    } else {
      out[j] = center[j];
    }
  }
  if (!any) perturb(rng.below(dims));
}

std::vector<double> propose_candidates(const TrustRegion& tr, std::size_t count, std::uint64_t seed,
                                       ExecPolicy policy) {
  const std::size_t dims = tr.center().dims();
  const SobolSequence sobol(dims, derive_seed(seed, kSobolTag), true, std::max<std::size_t>(count, 1));
  const std::uint64_t stream = derive_seed(seed, kProposalTag);
  std::vector<double> out(count * dims);
  const auto n = static_cast<std::ptrdiff_t>(count);
  const std::span<double> all(out);
  if (policy == ExecPolicy::kSerialReference) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      propose_candidate(tr, sobol, stream, ui, all.subspan(ui * dims, dims));
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      propose_candidate(tr, sobol, stream, ui, all.subspan(ui * dims, dims));
    }
  }
  return out;
}

std::vector<LatentPoint> lhd_initial(std::size_t count, std::size_t d, std::size_t k, Rng& rng) {
  const std::size_t dims = latent_dims(d, k);
  const LatinHypercube design(count, dims, rng);
  std::vector<LatentPoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LatentPoint pt(d, k);
    design.point(i, pt.z());
    out.push_back(std::move(pt));
  }
  return out;
}

CandidateDeduplicator::CandidateDeduplicator(std::size_t d) : slots_(1024, 0) { unique_.d = d; }

void CandidateDeduplicator::grow() {
  std::vector<std::uint32_t> slots(slots_.size() * 2, 0);
  const std::size_t mask = slots.size() - 1;
  for (std::size_t u = 0; u < hashes_.size(); ++u) {
    std::size_t pos = hashes_[u] & mask;
    while (slots[pos] != 0) pos = (pos + 1) & mask;
    slots[pos] = static_cast<std::uint32_t>(u + 1);
  }
  slots_ = std::move(slots);
}

bool CandidateDeduplicator::add(std::size_t source, std::span<const ParentMask> row) {
  const std::size_t d = unique_.d;
  if (row.size() != d) throw std::invalid_argument("candidate row has the wrong width");
  const std::uint64_t h = row_hash(row);
  const std::size_t mask = slots_.size() - 1;
  std::size_t pos = h & mask;
  while (slots_[pos] != 0) {
    const std::size_t u = slots_[pos] - 1;
    if (hashes_[u] == h && std::equal(row.begin(), row.end(), unique_.masks.begin() + static_cast<std::ptrdiff_t>(u * d))) {
      return false;
    }
    pos = (pos + 1) & mask;
  }
  slots_[pos] = static_cast<std::uint32_t>(hashes_.size() + 1);
  hashes_.push_back(h);
  unique_.source.push_back(source);
  unique_.masks.insert(unique_.masks.end(), row.begin(), row.end());
  if (2 * hashes_.size() > slots_.size()) grow();
  return true;
}

UniqueCandidates dedup_candidates(std::span<const ParentMask> masks, std::size_t d) {
  CandidateDeduplicator dedup(d);
  const std::size_t count = masks.size() / d;
  for (std::size_t c = 0; c < count; ++c) dedup.add(c, masks.subspan(c * d, d));
  return dedup.take();
}

std::vector<std::size_t> acquisition_rank(const UniqueCandidates& unique, const SurrogateEnsemble& ensemble,
                                          std::size_t n, ScoreVariant variant, std::size_t batch,
                                          std::uint64_t stream_seed, ExecPolicy policy, std::vector<double>* values) {
  std::vector<double> af(unique.size());
  thompson_acquisition(ensemble, unique.masks, n, variant, stream_seed, af, policy);
  std::vector<std::size_t> order(unique.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(batch, order.size());
  auto better = [&](std::size_t a, std::size_t b) { return af[a] > af[b] || (af[a] == af[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  order.resize(take);
  if (values != nullptr) *values = std::move(af);
  return order;
}

void RunConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  if (batch > candidates) throw std::invalid_argument("batch size must not exceed the candidate count");
  if (evaluations < batch) throw std::invalid_argument("evaluation budget must be at least one batch");
  if (rank == 0) throw std::invalid_argument("rank must be positive");
  if (candidates > UINT32_MAX) throw std::invalid_argument("candidate count must be below 2^32");
  if (!(score.gp_noise > 0.0)) throw std::invalid_argument("GP noise must be positive");
}

bool RunTrace::best_score_monotone() const {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].best_score < records[i - 1].best_score) return false;
  }
  return true;
}

void write_trace_record(std::ostream& os, const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["iter"] = r.iter;
  j["evals"] = r.evals;
  j["best_score"] = r.best_score;
  j["shd_vs_truth"] = r.shd_vs_truth ? nlohmann::ordered_json(*r.shd_vs_truth) : nlohmann::ordered_json();
  j["L"] = r.length;
  j["elapsed_s"] = r.elapsed_s;
  j["cache_hit_rate"] = r.cache_hit_rate;
  j["unique_candidates"] = r.unique_candidates;
  j["train_loss"] = r.train_loss;
  os << j.dump() << '\n';
}

RunResult run(const Dataset& data, const RunConfig& config, const RunOptions& options) {
  config.validate();
  check_compatible(data, config.score);
  const std::size_t d = data.d();
  const std::size_t k = config.rank;
  const std::size_t dims = latent_dims(d, k);
  if (options.truth != nullptr && options.truth->n_nodes() != d) {
    throw std::invalid_argument("ground-truth graph and data disagree on the number of nodes");
  }
  const auto start = std::chrono::steady_clock::now();

  Scorer scorer(data, config.score);
  SurrogateEnsemble ensemble(d, config.surrogate, derive_seed(config.seed, 0xE45E));
  Rng train_rng(derive_seed(config.seed, 0x7A1));

  RunResult result;
  std::optional<TrustRegion> tr;
  bool have_best = false;
  std::vector<double> chunk_z(kChunk * dims);
  std::vector<ParentMask> chunk_masks(kChunk * d);

  for (std::size_t iter = 0; result.evaluations < config.evaluations; ++iter) {
    const std::uint64_t iter_seed = derive_seed(config.seed, 0x17E2, iter);
    std::optional<LatinHypercube> lhd;
    std::optional<SobolSequence> sobol;
    if (!tr) {
      Rng lhd_rng(iter_seed);
      lhd.emplace(config.candidates, dims, lhd_rng);
    } else {
      sobol.emplace(dims, derive_seed(iter_seed, kSobolTag), true, config.candidates);
    }
    const std::uint64_t proposal_stream = derive_seed(iter_seed, kProposalTag);

    CandidateDeduplicator dedup(d);
    std::vector<double> unique_z;
    for (std::size_t begin = 0; begin < config.candidates; begin += kChunk) {
      const std::size_t count = std::min(kChunk, config.candidates - begin);
      const std::span<double> zs(chunk_z.data(), count * dims);
      const auto n_chunk = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static) if (config.kernels == ExecPolicy::kParallel)
      for (std::ptrdiff_t c = 0; c < n_chunk; ++c) {
        const auto uc = static_cast<std::size_t>(c);
        const auto out = zs.subspan(uc * dims, dims);
        if (lhd) {
          lhd->point(begin + uc, out);
        } else {
          propose_candidate(*tr, *sobol, proposal_stream, begin + uc, out);
        }
      }
      const std::span<ParentMask> ms(chunk_masks.data(), count * d);
      map_candidates(zs, d, k, ms, config.kernels);
      for (std::size_t c = 0; c < count; ++c) {
        if (dedup.add(begin + c, ms.subspan(c * d, d))) {
          unique_z.insert(unique_z.end(), zs.begin() + static_cast<std::ptrdiff_t>(c * dims),
                          zs.begin() + static_cast<std::ptrdiff_t>((c + 1) * dims));
        }
      }
    }
    const UniqueCandidates& unique = dedup.result();

    auto chosen = acquisition_rank(unique, ensemble, data.n(), config.score.variant, config.batch,
                                   derive_seed(iter_seed, kAcquisitionTag), config.kernels);
    // A collapsed trust region can yield fewer than B distinct DAGs; the batch
    // is then refilled with the ranked ones again (served from the cache) so
    // every iteration still adds B evaluations.
    for (std::size_t r = 0; chosen.size() < config.batch; ++r) chosen.push_back(chosen[r]);
    std::vector<Dag> dags;
    dags.reserve(chosen.size());
    for (std::size_t u : chosen) {
      const auto row = unique.row(u);
      dags.push_back(Dag::from_parent_masks_unchecked(std::vector<ParentMask>(row.begin(), row.end())));
      if (!is_acyclic(dags.back().adjacency())) throw std::logic_error("candidate map produced a cyclic graph");
    }
    const std::vector<EvaluationRecord> records = scorer.score_batch(dags);
    result.evaluations += records.size();

    std::size_t batch_best = 0;
    for (std::size_t b = 1; b < records.size(); ++b) {
      if (records[b].total > records[batch_best].total) batch_best = b;
    }
    const bool improved = !have_best || records[batch_best].total > result.best_score;
    std::optional<LatentPoint> new_best;
    if (improved) {
      const std::size_t u = chosen[batch_best];
      new_best.emplace(d, k,
                       std::vector<double>(unique_z.begin() + static_cast<std::ptrdiff_t>(u * dims),
                                           unique_z.begin() + static_cast<std::ptrdiff_t>((u + 1) * dims)));
      result.best_dag = records[batch_best].dag;
      result.best_score = records[batch_best].total;
      result.best_point = *new_best;
    }

    TraceRecord rec;
    rec.train_loss = ensemble.train_continual(records, train_rng);

    if (!tr) {
      // The initial design only seeds the incumbent; streaks start afterwards.
      tr.emplace(*new_best, config.trust_region);
    } else {
      tr->update(improved, new_best ? &*new_best : nullptr);
    }
    have_best = true;

    rec.iter = iter;
    rec.evals = result.evaluations;
    rec.best_score = result.best_score;
    if (options.truth != nullptr) rec.shd_vs_truth = structural_hamming_distance(result.best_dag, *options.truth);
    rec.length = tr->length();
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.cache_hit_rate = scorer.cache().hit_rate();
    rec.unique_candidates = unique.size();
    result.trace.records.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
    result.iterations = iter + 1;
  }
  return result;
}

std::size_t diversity_probe(std::size_t d, std::size_t k, std::size_t count, Rng& rng) {
  const std::size_t dims = latent_dims(d, k);
  std::vector<double> z(dims);
  std::vector<ParentMask> masks(d);
  CandidateDeduplicator dedup(d);
  for (std::size_t c = 0; c < count; ++c) {
    for (auto& v : z) v = rng.uniform(-1.0, 1.0);
    vec_to_parent_masks(z, d, k, masks);
    dedup.add(c, masks);
  }
  return dedup.result().size();
}

}  // namespace drbo
