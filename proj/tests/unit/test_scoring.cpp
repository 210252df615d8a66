#include <doctest.h>

#include <cmath>
#include <vector>

#include "drbo/experiments.hpp"
#include "drbo/scoring.hpp"

using namespace drbo;

namespace {

Dataset chain_data(std::size_t n, std::uint64_t seed) {
  BinaryMatrix adj = BinaryMatrix::Zero(2, 2);
  adj(0, 1) = 1;
  Rng rng(seed);
  ScmSpec spec = make_scm(Dag::from_adjacency(adj), Mechanism::kLinear, NoiseFamily::kGaussian, rng);
  spec.weights(0, 1) = 1.0;
  return simulate(spec, n, rng);
}

Dag random_dag(std::size_t d, Rng& rng) {
  LatentPoint pt(d, 3);
  for (double& v : pt.z()) v = rng.uniform(-1.0, 1.0);
  return vec_to_dag(pt);
}

ParentMask mask_of(std::initializer_list<std::size_t> nodes) {
  ParentMask m;
  for (auto j : nodes) m.set(j);
  return m;
}

}  // namespace

TEST_CASE("local ln MSE: intercept only, true parent, supersets") {
  const Dataset ds = chain_data(100000, 1);
  const Eigen::VectorXd x = ds.X.col(1);
  const double var = (x.array() - x.mean()).square().mean();
  CHECK(local_ln_mse(1, ParentMask{}, ds, Regressor::kLinear) == doctest::Approx(std::log(var)).epsilon(1e-10));
  CHECK(std::abs(local_ln_mse(1, mask_of({0}), ds, Regressor::kLinear)) < 0.05);

  SimulationSpec spec;
  spec.nodes = 8;
  spec.edges_per_node = 2.0;
  spec.seed = 4;
  const SyntheticProblem p = make_problem(spec);
  for (std::size_t i = 0; i < 8; ++i) {
    const ParentMask truth = p.scm.graph.parents(i);
    const double base = local_ln_mse(i, truth, p.data, Regressor::kLinear);
    for (std::size_t extra = 0; extra < 8; ++extra) {
      if (extra == i || truth.test(extra)) continue;
      ParentMask sup = truth;
      sup.set(extra);
      CHECK(local_ln_mse(i, sup, p.data, Regressor::kLinear) <= base + 1e-12);
    }
  }
  CHECK_THROWS_AS((void)local_ln_mse(1, mask_of({1}), ds, Regressor::kLinear), std::invalid_argument);
}

TEST_CASE("bic_nv and bic_ev formulas") {
  CHECK(bic_nv(std::vector<double>{0.0, 0.0, 0.0}, 0, 100) == 0.0);
  const std::vector<double> two{0.0, std::log(2.0)};
  CHECK(bic_nv(two, 1, 100) == doctest::Approx(-100.0 * std::log(2.0) - std::log(100.0)).epsilon(1e-14));
  CHECK(bic_nv(two, 1, 100) - bic_nv(two, 2, 100) == doctest::Approx(std::log(100.0)).epsilon(1e-14));

  for (double l : {-3.0, 0.0, 0.7}) {
    const std::vector<double> one{l};
    CHECK(bic_ev(one, 0, 50) == doctest::Approx(bic_nv(one, 0, 50)).epsilon(1e-14));
    const std::vector<double> equal(4, l);
    CHECK(bic_ev(equal, 3, 50) == doctest::Approx(-50.0 * 4.0 * l - 3.0 * std::log(50.0)).epsilon(1e-12));
  }
  const std::vector<double> a{0.1, -0.4, 1.3, 0.0};
  const std::vector<double> b{1.3, 0.0, 0.1, -0.4};
  CHECK(bic_ev(a, 2, 1000) == doctest::Approx(bic_ev(b, 2, 1000)).epsilon(1e-14));
}

TEST_CASE("penalty differences are exact multiples of ln n") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> locals(5);
    for (double& v : locals) v = rng.uniform(-2.0, 2.0);
    const std::size_t n = 10 + rng.below(5000);
    for (auto variant : {ScoreVariant::kBicEv, ScoreVariant::kBicNv, ScoreVariant::kBicLogistic}) {
      const double s0 = combine_locals(variant, locals, 0, n);
      const double s4 = combine_locals(variant, locals, 4, n);
      CHECK(s0 - s4 == doctest::Approx(4.0 * std::log(static_cast<double>(n))).epsilon(1e-9));
    }
  }
}

TEST_CASE("logistic: empty graph is the Bernoulli solution, edges never lower the likelihood") {
  SimulationSpec spec;
  spec.nodes = 4;
  spec.edges_per_node = 1.0;
  spec.mechanism = Mechanism::kLogistic;
  spec.seed = 3;
  const SyntheticProblem p = make_problem(spec);
  const double n = static_cast<double>(p.data.n());
  for (std::size_t i = 0; i < 4; ++i) {
    const double q = p.data.X.col(static_cast<Eigen::Index>(i)).mean();
    const double expected = n * (q * std::log(q) + (1.0 - q) * std::log(1.0 - q));
    CHECK(local_logistic_mll(i, ParentMask{}, p.data) == doctest::Approx(expected).epsilon(1e-8));
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == i) continue;
      CHECK(local_logistic_mll(i, mask_of({j}), p.data) >= local_logistic_mll(i, ParentMask{}, p.data) - 1e-8);
    }
  }
}

// At n = 1,000 with weights from U([-2,-0.5] U [0.5,2]) the dense true graphs
// of several seeds lose to sparser DAGs under the ln n penalty (checked with
// an independent Newton fit), so the 90% rate is reported but not enforced.
TEST_CASE("logistic: the true graph beats every other 4-node DAG on most seeds" * doctest::may_fail()) {
  const std::vector<Dag> all = enumerate_dags(4);
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SimulationSpec spec;
    spec.nodes = 4;
    spec.edges_per_node = 1.0;
    spec.mechanism = Mechanism::kLogistic;
    spec.seed = seed;
    const SyntheticProblem p = make_problem(spec);
    ScoreConfig cfg;
    cfg.variant = ScoreVariant::kBicLogistic;
    Scorer scorer(p.data, cfg);
    const double truth = scorer.score(p.scm.graph).total;
    bool best = true;
    for (const Dag& g : all) {
      if (scorer.score(g).total > truth + 1e-9) {
        best = false;
        break;
      }
    }
    wins += best;
  }
  MESSAGE("true graph is a global maximum on ", wins, " of 20 seeds");
  CHECK(wins >= 18);
}

// Values from an independent Newton-Raphson logistic fit of the CSV written by
// `drbo simulate --graph er --nodes 4 --epn 1 --mech logistic --seed 9`.
TEST_CASE("logistic BIC matches an independent fit") {
  SimulationSpec spec;
  spec.nodes = 4;
  spec.edges_per_node = 1.0;
  spec.mechanism = Mechanism::kLogistic;
  spec.seed = 9;
  const SyntheticProblem p = make_problem(spec);
  BinaryMatrix truth = BinaryMatrix::Zero(4, 4);
  truth(0, 2) = truth(0, 3) = truth(1, 3) = truth(2, 1) = truth(2, 3) = 1;
  CHECK(p.scm.graph.adjacency() == truth);
  BinaryMatrix sparser = BinaryMatrix::Zero(4, 4);
  sparser(0, 1) = sparser(3, 1) = sparser(0, 2) = sparser(0, 3) = sparser(2, 3) = 1;
  CHECK(bic_logistic(p.data, p.scm.graph) == doctest::Approx(-4764.147926592579).epsilon(1e-9));
  CHECK(bic_logistic(p.data, Dag::from_adjacency(sparser)) == doctest::Approx(-4763.649348847692).epsilon(1e-9));
}

TEST_CASE("score_dag: cache hits, single-node recompute, decomposition") {
  SimulationSpec spec;
  spec.nodes = 6;
  spec.edges_per_node = 1.0;
  const SyntheticProblem p = make_problem(spec);
  ScoreConfig cfg;
  LocalScoreCache cache;
  const EvaluationRecord first = score_dag(p.scm.graph, p.data, cfg, cache);
  CHECK(cache.misses() == 6);
  const EvaluationRecord second = score_dag(p.scm.graph, p.data, cfg, cache);
  CHECK(cache.hits() == 6);
  CHECK(first.total == second.total);
  CHECK(first.locals == second.locals);
  CHECK(first.total == combine_locals(cfg.variant, first.locals, p.scm.graph.edge_count(), p.data.n()));

  Dag changed = p.scm.graph;
  std::size_t node = 0;
  while (p.scm.graph.parents(node).empty()) ++node;
  changed.remove_edge(p.scm.graph.parents(node).indices().front(), node);
  (void)score_dag(changed, p.data, cfg, cache);
  CHECK(cache.misses() == 7);
}

TEST_CASE("Scorer and score_dag agree; the cache is transparent") {
  Rng rng(21);
  for (auto variant : {ScoreVariant::kBicEv, ScoreVariant::kBicNv}) {
    SimulationSpec spec;
    spec.nodes = 7;
    spec.edges_per_node = 1.5;
    spec.seed = static_cast<std::uint64_t>(variant);
    const SyntheticProblem p = make_problem(spec);
    ScoreConfig cfg;
    cfg.variant = variant;
    Scorer cached(p.data, cfg);
    Scorer uncached(p.data, cfg);
    uncached.set_cache_enabled(false);
    for (int t = 0; t < 50; ++t) {
      const Dag g = random_dag(7, rng);
      LocalScoreCache cache;
      const EvaluationRecord ref = score_dag(g, p.data, cfg, cache);
      const EvaluationRecord a = cached.score(g);
      const EvaluationRecord b = cached.score(g);
      const EvaluationRecord c = uncached.score(g);
      CHECK(a.total == b.total);
      CHECK(a.total == c.total);
      CHECK(std::abs(a.total - ref.total) <= 1e-9 * std::abs(ref.total));
    }
  }
}

TEST_CASE("GP scores: cache transparency and finite values") {
  SimulationSpec spec;
  spec.nodes = 4;
  spec.edges_per_node = 1.0;
  spec.mechanism = Mechanism::kGpNonlinear;
  spec.samples = 150;
  const SyntheticProblem p = make_problem(spec);
  ScoreConfig cfg;
  cfg.variant = ScoreVariant::kBicNv;
  cfg.regressor = Regressor::kGp;
  cfg.gp_max_rows = 100;
  Scorer scorer(p.data, cfg);
  LocalScoreCache cache;
  const EvaluationRecord a = scorer.score(p.scm.graph);
  const EvaluationRecord b = score_dag(p.scm.graph, p.data, cfg, cache);
  CHECK(std::isfinite(a.total));
  CHECK(a.total == b.total);
  CHECK(scorer.gp_rows().size() == 100);
}

TEST_CASE("BIC-EV prefers the true DAG over random DAGs") {
  SimulationSpec spec;
  spec.nodes = 20;
  spec.edges_per_node = 2.0;
  spec.seed = 8;
  const SyntheticProblem p = make_problem(spec);
  Scorer scorer(p.data, ScoreConfig{});
  const double truth = scorer.score(p.scm.graph).total;
  Rng rng(9);
  int wins = 0;
  for (int t = 0; t < 100; ++t) wins += truth > scorer.score(random_dag(20, rng)).total;
  CHECK(wins >= 95);
}

TEST_CASE("score and data type compatibility") {
  const Dataset continuous = chain_data(50, 2);
  ScoreConfig logistic;
  logistic.variant = ScoreVariant::kBicLogistic;
  CHECK_THROWS_AS((void)check_compatible(continuous, logistic), std::invalid_argument);
  Dataset binary;
  binary.X = Eigen::MatrixXd::Zero(10, 2);
  binary.X(3, 1) = 1.0;
  CHECK_THROWS_AS((void)check_compatible(binary, ScoreConfig{}), std::invalid_argument);
  CHECK(parse_score_variant("bic-nv") == ScoreVariant::kBicNv);
  CHECK_THROWS_AS((void)parse_regressor("spline"), std::invalid_argument);
}
