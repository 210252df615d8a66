#include <doctest.h>

#include <cmath>
#include <vector>

#include "drbo/experiments.hpp"
#include "drbo/surrogate.hpp"

using namespace drbo;

namespace {

using DropMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

DropoutNet small_net(std::size_t d_in, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  DropoutNet net(d_in, h, 0.1, rng);
  Eigen::VectorXd mean(static_cast<Eigen::Index>(h));
  Eigen::VectorXd var(static_cast<Eigen::Index>(h));
  for (Eigen::Index u = 0; u < mean.size(); ++u) {
    mean(u) = rng.uniform(0.0, 0.5);
    var(u) = rng.uniform(0.5, 2.0);
  }
  net.set_running_stats(mean, var);
  return net;
}

Dag random_dag(std::size_t d, Rng& rng) {
  LatentPoint pt(d, 3);
  for (double& v : pt.z()) v = rng.uniform(-1.0, 1.0);
  return vec_to_dag(pt);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("forward pass with no dropped unit matches the closed form") {
  const DropoutNet net = small_net(5, 8, 1);
  const std::vector<double> x{1.0, 0.0, 1.0, 1.0, 0.0};
  const auto& p = net.params();
  double expected = p.b2;
  for (Eigen::Index u = 0; u < 8; ++u) {
    double pre = p.b1(u);
    for (Eigen::Index j = 0; j < 5; ++j) pre += x[static_cast<std::size_t>(j)] * p.W1(j, u);
    const double act = std::max(pre / 0.9, 0.0);
    const double bn = p.gamma(u) * (act - net.running_mean()(u)) / std::sqrt(net.running_var()(u) + net.bn_eps()) + p.beta(u);
    expected += p.W2(u) * bn;
  }
  const std::vector<std::uint8_t> none(8, 0);
  CHECK(net.forward_with_mask(x, none) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("stochastic passes differ; zero output weights give b2") {
  DropoutNet net = small_net(4, 64, 2);
  const std::vector<double> x{1.0, 1.0, 0.0, 1.0};
  Rng a(10);
  Rng b(20);
  int differ = 0;
  for (int t = 0; t < 100; ++t) differ += net.forward_stochastic(x, a) != net.forward_stochastic(x, b);
  CHECK(differ > 90);

  net.params().W2.setZero();
  net.params().b2 = 0.375;
  for (int t = 0; t < 20; ++t) CHECK(net.forward_stochastic(x, a) == 0.375);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(3);
  DropoutNet net(5, 8, 0.1, rng);
  Eigen::MatrixXd X(16, 5);
  for (Eigen::Index r = 0; r < 16; ++r) {
    for (Eigen::Index c = 0; c < 5; ++c) X(r, c) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  Eigen::VectorXd y(16);
  for (Eigen::Index r = 0; r < 16; ++r) y(r) = rng.normal();
  DropMatrix drop(16, 8);
  for (Eigen::Index r = 0; r < 16; ++r) {
    for (Eigen::Index u = 0; u < 8; ++u) drop(r, u) = rng.uniform() < 0.1 ? 1 : 0;
  }
  NetTensors grad = NetTensors::zeros_like(net.params());
  (void)net.batch_loss(X, y, drop, &grad);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = net.params().at(i);
    net.params().at(i) = keep + 1e-4;
    const double up = net.batch_loss(X, y, drop, nullptr);
    net.params().at(i) = keep - 1e-4;
    const double down = net.batch_loss(X, y, drop, nullptr);
    net.params().at(i) = keep;
    const double fd = (up - down) / 2e-4;
    num += (fd - grad.at(i)) * (fd - grad.at(i));
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-4);
}

TEST_CASE("sample_plan draws match the net's dropout distribution") {
  SurrogateEnsemble ens(6, SurrogateParams{}, 4);
  ParentMask parents;
  parents.set(1);
  parents.set(4);
  const InferencePlan plan = ens.plan(0, parents);
  CHECK(plan.full == doctest::Approx(ens.mean_local(0, parents)).epsilon(1e-12));

  Rng a(5);
  Rng b(6);
  const std::size_t draws = 20000;
  double m1 = 0.0;
  double m2 = 0.0;
  double v1 = 0.0;
  for (std::size_t t = 0; t < draws; ++t) {
    const double s1 = sample_plan(plan, 0.1, a);
    const double s2 = ens.sample_local(0, parents, b);
    m1 += s1;
    m2 += s2;
    v1 += s1 * s1;
  }
  m1 /= draws;
  m2 /= draws;
  const double sd = std::sqrt(v1 / draws - m1 * m1);
  CHECK(std::abs(m1 - m2) < 4.0 * sd * std::sqrt(2.0 / draws));
}

TEST_CASE("Thompson samples: finite, stochastic, and centered after fitting one point") {
  SurrogateEnsemble ens(3, SurrogateParams{}, 7);
  std::vector<ParentMask> masks(3);
  masks[1].set(0);
  masks[2].set(0);
  masks[2].set(1);
  Rng rng(8);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto l = thompson_sample_locals(ens, masks, rng);
    for (double v : l) REQUIRE(std::isfinite(v));
    sum += l[2];
    sum_sq += l[2] * l[2];
  }
  CHECK(sum_sq / 200.0 - (sum / 200.0) * (sum / 200.0) > 0.0);

  std::vector<ParentMask> parents = masks;
  EvaluationRecord rec{Dag::from_parent_masks_unchecked(parents), {0.5, -1.25, 2.0}, 0.0};
  std::vector<EvaluationRecord> batch(16, rec);
  for (int it = 0; it < 100; ++it) (void)ens.train_continual(batch, rng);
  for (std::size_t node = 0; node < 3; ++node) {
    std::vector<double> s(1000);
    double m = 0.0;
    for (double& v : s) {
      v = ens.sample_local(node, masks[node], rng);
      m += v / 1000.0;
    }
    double var = 0.0;
    for (double v : s) var += (v - m) * (v - m) / 999.0;
    // A converged net can shrink the dropout spread below the fit error, so
    // the band is floored at 1e-6 relative.
    const double se = std::sqrt(var / 1000.0);
    CHECK_MESSAGE(std::abs(m - rec.locals[node]) <= std::max(3.0 * se, 1e-6 * std::abs(rec.locals[node])), "node ",
                  node);
  }
}

TEST_CASE("combine_af reproduces the exact score rules") {
  const std::vector<double> zeros(4, 0.0);
  CHECK(combine_af(zeros, 0, 100, ScoreVariant::kBicNv) == 0.0);
  const std::vector<double> equal(3, -0.4);
  CHECK(combine_af(equal, 2, 500, ScoreVariant::kBicEv) ==
        doctest::Approx(-500.0 * 3.0 * -0.4 - 2.0 * std::log(500.0)).epsilon(1e-12));

  Rng rng(9);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> l(1 + rng.below(30));
    for (double& v : l) v = rng.uniform(-30.0, 30.0);
    const std::size_t edges = rng.below(100);
    const std::size_t n = 1 + rng.below(5000);
    for (auto v : {ScoreVariant::kBicEv, ScoreVariant::kBicNv, ScoreVariant::kBicLogistic}) {
      const double exact = combine_locals(v, l, edges, n);
      CHECK(std::abs(combine_af(l, edges, n, v) - exact) <= 1e-9 * std::max(1.0, std::abs(exact)));
    }
  }
}

TEST_CASE("reservoir: fill phase, capacity bound, uniform survivor") {
  Rng rng(10);
  ReplayBuffer buf(1024);
  for (std::size_t t = 0; t < 1024; ++t) reservoir_update(buf, {0, ParentMask{}, static_cast<double>(t)}, rng);
  for (std::size_t t = 0; t < 1024; ++t) CHECK(buf.items()[t].value == static_cast<double>(t));
  for (std::size_t t = 1024; t < 10000; ++t) reservoir_update(buf, {0, ParentMask{}, static_cast<double>(t)}, rng);
  CHECK(buf.size() == 1024);
  CHECK(buf.seen() == 10000);

  const int stream = 5;
  const int trials = 50000;
  std::vector<int> counts(stream, 0);
  for (int t = 0; t < trials; ++t) {
    ReplayBuffer one(1);
    for (int i = 0; i < stream; ++i) reservoir_update(one, {0, ParentMask{}, static_cast<double>(i)}, rng);
    ++counts[static_cast<std::size_t>(one.items()[0].value)];
  }
  const double p = 1.0 / stream;
  for (int c : counts) CHECK(std::abs(c - trials * p) < 4.0 * std::sqrt(trials * p * (1 - p)));
}

TEST_CASE("continual training: buffers, finiteness, node independence") {
  SimulationSpec spec;
  spec.nodes = 5;
  spec.edges_per_node = 1.0;
  const SyntheticProblem p = make_problem(spec);
  Scorer scorer(p.data, ScoreConfig{});
  Rng dags(11);
  std::vector<EvaluationRecord> batch;
  for (int t = 0; t < 8; ++t) batch.push_back(scorer.score(random_dag(5, dags)));

  SurrogateEnsemble a(5, SurrogateParams{}, 12);
  SurrogateEnsemble b(5, SurrogateParams{}, 12);
  std::vector<EvaluationRecord> altered = batch;
  for (auto& r : altered) r.locals[0] += 3.0;
  Rng ra(13);
  Rng rb(13);
  (void)a.train_continual(batch, ra);
  (void)b.train_continual(altered, rb);
  CHECK(a.buffer(0).size() == 8);
  for (std::size_t node = 0; node < 5; ++node) CHECK(a.net(node).params().all_finite());
  CHECK(a.net(0).params().W1 != b.net(0).params().W1);
  for (std::size_t node = 1; node < 5; ++node) {
    CHECK(a.net(node).params().W1 == b.net(node).params().W1);
    CHECK(a.net(node).params().W2 == b.net(node).params().W2);
  }
}

TEST_CASE("surrogate predictions track held-out local scores") {
  SimulationSpec spec;
  spec.nodes = 8;
  spec.edges_per_node = 2.0;
  spec.seed = 2;
  const SyntheticProblem p = make_problem(spec);
  Scorer scorer(p.data, ScoreConfig{});
  SurrogateEnsemble ens(8, SurrogateParams{}, 14);
  Rng rng(15);
  for (int it = 0; it < 50; ++it) {
    std::vector<Dag> dags;
    for (int t = 0; t < 64; ++t) dags.push_back(random_dag(8, rng));
    (void)ens.train_continual(scorer.score_batch(dags), rng);
  }
  double mean_r = 0.0;
  for (std::size_t node = 0; node < 8; ++node) {
    std::vector<double> truth;
    std::vector<double> pred;
    for (int t = 0; t < 200; ++t) {
      const Dag g = random_dag(8, rng);
      truth.push_back(scorer.local(node, g.parents(node)));
      pred.push_back(ens.mean_local(node, g.parents(node)));
    }
    mean_r += pearson(truth, pred) / 8.0;
  }
  CHECK(mean_r >= 0.8);
}

TEST_CASE("checkpoint round trip restores predictions and training state") {
  SimulationSpec spec;
  spec.nodes = 4;
  spec.edges_per_node = 1.0;
  const SyntheticProblem p = make_problem(spec);
  Scorer scorer(p.data, ScoreConfig{});
  SurrogateEnsemble ens(4, SurrogateParams{}, 16);
  Rng rng(17);
  std::vector<Dag> dags;
  for (int t = 0; t < 16; ++t) dags.push_back(random_dag(4, rng));
  const auto records = scorer.score_batch(dags);
  (void)ens.train_continual(records, rng);

  SurrogateEnsemble copy = SurrogateEnsemble::from_json(ens.to_json());
  ParentMask m;
  m.set(0);
  for (std::size_t node = 1; node < 4; ++node) CHECK(copy.mean_local(node, m) == ens.mean_local(node, m));
  Rng r1(18);
  Rng r2(18);
  (void)ens.train_continual(records, r1);
  (void)copy.train_continual(records, r2);
  CHECK(copy.to_json() == ens.to_json());
  CHECK_THROWS((void)SurrogateEnsemble::from_json("{\"format\":\"something-else\"}"));
}

TEST_CASE("expand_mask encodes parents as 0/1") {
  ParentMask m;
  m.set(0);
  m.set(3);
  CHECK(expand_mask(m, 5) == std::vector<double>{1.0, 0.0, 0.0, 1.0, 0.0});
}
