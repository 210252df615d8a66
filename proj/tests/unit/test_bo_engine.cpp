#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "drbo/bo_engine.hpp"
#include "drbo/experiments.hpp"

using namespace drbo;

namespace {

LatentPoint center_point(std::size_t d, std::size_t k, Rng& rng) {
  LatentPoint pt(d, k);
  for (double& v : pt.z()) v = rng.uniform(-1.0, 1.0);
  return pt;
}

RunConfig small_config(std::size_t evals) {
  RunConfig c;
  c.batch = 16;
  c.candidates = 2000;
  c.evaluations = evals;
  c.rank = 4;
  c.seed = 3;
  return c;
}

SyntheticProblem small_problem(std::uint64_t seed = 0) {
  SimulationSpec spec;
  spec.nodes = 5;
  spec.edges_per_node = 1.0;
  spec.seed = seed;
  return make_problem(spec);
}

}  // namespace

TEST_CASE("trust region: expansion, floor, counter resets") {
  Rng rng(1);
  TrustRegion tr(center_point(3, 2, rng));
  CHECK(tr.length() == 1.0);
  for (int i = 0; i < 3; ++i) update_trust_region(tr, true, center_point(3, 2, rng));
  CHECK(tr.length() == 2.0);
  for (int i = 0; i < 3; ++i) update_trust_region(tr, true, std::nullopt);
  CHECK(tr.length() == 2.0);

  TrustRegionParams params;
  params.length_init = 0.015;
  TrustRegion small(center_point(3, 2, rng), params);
  for (int i = 0; i < 5; ++i) update_trust_region(small, false, std::nullopt);
  CHECK(small.length() == 0.01);

  TrustRegion counters(center_point(3, 2, rng));
  for (int i = 0; i < 4; ++i) update_trust_region(counters, false, std::nullopt);
  CHECK(counters.failures() == 4);
  const LatentPoint better = center_point(3, 2, rng);
  update_trust_region(counters, true, better);
  CHECK(counters.failures() == 0);
  CHECK(counters.successes() == 1);
  CHECK(std::equal(better.z().begin(), better.z().end(), counters.center().z().begin()));
  CHECK(counters.length() == 1.0);
}

TEST_CASE("proposals: low dimension perturbs everything, boxes hold, budget of ~20") {
  Rng rng(2);
  TrustRegion low(center_point(4, 3, rng));  // 16 dims, probability 1
  const auto z = propose_candidates(low, 500, 9);
  for (std::size_t c = 0; c < 500; ++c) {
    for (std::size_t j = 0; j < 16; ++j) CHECK(z[c * 16 + j] != low.center().z()[j]);
  }

  TrustRegionParams params;
  params.length_init = 0.3;
  TrustRegion tr(center_point(30, 8, rng), params);
  const std::size_t dims = tr.center().dims();
  const std::size_t count = 10000;
  const auto cands = propose_candidates(tr, count, 10);
  double perturbed = 0.0;
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t j = 0; j < dims; ++j) {
      const double x = cands[c * dims + j];
      const double ctr = tr.center().z()[j];
      if (x == ctr) continue;
      perturbed += 1.0;
      CHECK(x >= std::max(-1.0, ctr - 0.15));
      CHECK(x <= std::min(1.0, ctr + 0.15));
    }
  }
  const double q = 20.0 / static_cast<double>(dims);
  const double sd_mean = std::sqrt(static_cast<double>(dims) * q * (1.0 - q) / static_cast<double>(count));
  CHECK(std::abs(perturbed / static_cast<double>(count) - 20.0) < 3.0 * sd_mean);
  CHECK(perturb_probability(16, 20.0) == 1.0);
}

TEST_CASE("dedup keeps first appearances") {
  std::vector<ParentMask> masks(4 * 3);
  masks[0 * 3 + 1].set(0);
  masks[2 * 3 + 1].set(0);
  masks[3 * 3 + 2].set(1);
  const UniqueCandidates u = dedup_candidates(masks, 3);
  CHECK(u.size() == 3);
  CHECK(u.source == std::vector<std::size_t>{0, 1, 3});

  Rng rng(3);
  std::vector<ParentMask> many(5000 * 6);
  std::set<std::vector<std::uint64_t>> distinct;
  for (std::size_t c = 0; c < 5000; ++c) {
    std::vector<std::uint64_t> key;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (rng.uniform() < 0.15) many[c * 6 + i].set(j);
      }
      key.push_back(many[c * 6 + i].word(0));
    }
    distinct.insert(key);
  }
  CHECK(dedup_candidates(many, 6).size() == distinct.size());
}

TEST_CASE("acquisition_rank: full batch, dominant candidate, unique DAGs") {
  // Synthetic experience: one DAG with locals of -5 at every node, others at 0,
  // none sharing a (node, parent set) pair with it.
  const std::size_t d = 5;
  Rng rng(5);
  const Dag star = vec_to_dag(center_point(d, 3, rng));
  std::vector<Dag> dags{star};
  while (dags.size() < 40) {
    const Dag g = vec_to_dag(center_point(d, 3, rng));
    bool shares = false;
    for (std::size_t i = 0; i < d; ++i) shares = shares || g.parents(i) == star.parents(i);
    if (!shares) dags.push_back(g);
  }
  std::vector<EvaluationRecord> records;
  for (const Dag& g : dags) {
    const double l = g == star ? -5.0 : 0.0;
    records.push_back({g, std::vector<double>(d, l), 0.0});
  }
  SurrogateEnsemble ens(d, SurrogateParams{}, 4);
  for (int it = 0; it < 60; ++it) (void)ens.train_continual(records, rng);

  std::vector<ParentMask> masks;
  for (const Dag& g : dags) masks.insert(masks.end(), g.parent_masks().begin(), g.parent_masks().end());
  for (const Dag& g : dags) masks.insert(masks.end(), g.parent_masks().begin(), g.parent_masks().end());
  const UniqueCandidates unique = dedup_candidates(masks, d);
  CHECK(unique.size() == dags.size());
  const auto all = acquisition_rank(unique, ens, 1000, ScoreVariant::kBicEv, unique.size(), 1);
  CHECK(all.size() == unique.size());
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == unique.size());

  int first = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    first += acquisition_rank(unique, ens, 1000, ScoreVariant::kBicEv, 1, s).front() == 0;
  }
  CHECK(first >= 95);
}

TEST_CASE("run: single batch, determinism, budget, trust-region bounds") {
  const SyntheticProblem p = small_problem(1);
  {
    const RunResult r = run(p.data, small_config(16));
    CHECK(r.iterations == 1);
    CHECK(r.evaluations == 16);
    Scorer scorer(p.data, ScoreConfig{});
    CHECK(scorer.score(r.best_dag).total == r.best_score);
  }

  const RunConfig cfg = small_config(200);
  const RunResult a = run(p.data, cfg);
  const RunResult b = run(p.data, cfg);
  CHECK(a.best_dag == b.best_dag);
  REQUIRE(a.trace.records.size() == b.trace.records.size());
  for (std::size_t i = 0; i < a.trace.records.size(); ++i) {
    CHECK(a.trace.records[i].best_score == b.trace.records[i].best_score);
    CHECK(a.trace.records[i].length == b.trace.records[i].length);
  }
  CHECK(a.trace.best_score_monotone());
  CHECK(a.evaluations >= 200);
  CHECK(a.evaluations < 200 + cfg.batch);
  for (const auto& r : a.trace.records) {
    CHECK(r.length >= 0.01);
    CHECK(r.length <= 2.0);
  }
  CHECK(is_acyclic(a.best_dag.adjacency()));
}

TEST_CASE("run: serial reference and parallel kernels give the same search") {
  const SyntheticProblem p = small_problem(2);
  RunConfig cfg = small_config(96);
  cfg.kernels = ExecPolicy::kSerialReference;
  const RunResult serial = run(p.data, cfg);
  cfg.kernels = ExecPolicy::kParallel;
  const RunResult parallel = run(p.data, cfg);
  CHECK(serial.best_dag == parallel.best_dag);
  for (std::size_t i = 0; i < serial.trace.records.size(); ++i) {
    CHECK(serial.trace.records[i].best_score == parallel.trace.records[i].best_score);
  }
}

TEST_CASE("run: trace records carry truth distance and serialize in key order") {
  const SyntheticProblem p = small_problem(3);
  std::vector<TraceRecord> seen;
  RunOptions opts;
  opts.truth = &p.scm.graph;
  opts.on_iteration = [&](const TraceRecord& r) { seen.push_back(r); };
  const RunResult r = run(p.data, small_config(48), opts);
  CHECK(seen.size() == r.trace.records.size());
  CHECK(seen.back().shd_vs_truth.has_value());
  std::ostringstream os;
  write_trace_record(os, seen.front());
  CHECK(os.str().rfind("{\"iter\":0,\"evals\":16,\"best_score\":", 0) == 0);
  CHECK(os.str().find("\"shd_vs_truth\":") < os.str().find("\"L\":"));
}

TEST_CASE("run config validation") {
  const SyntheticProblem p = small_problem();
  RunConfig c = small_config(8);
  CHECK_THROWS_AS((void)run(p.data, c), std::invalid_argument);
  c = small_config(100);
  c.batch = 0;
  CHECK_THROWS_AS((void)c.validate(), std::invalid_argument);
  c = small_config(100);
  c.score.gp_noise = 0.0;
  CHECK_THROWS_AS((void)c.validate(), std::invalid_argument);
}

TEST_CASE("diversity probe: a single draw is one DAG") {
  Rng rng(6);
  CHECK(diversity_probe(30, 8, 1, rng) == 1);
  CHECK(diversity_probe(30, 2, 200, rng) <= 200);
}
