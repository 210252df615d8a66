#include "drbo/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "drbo/pruning.hpp"
#include "drbo/scoring.hpp"
#include "drbo/surrogate.hpp"

namespace drbo {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void logf(const SuiteOptions& o, const std::string& line) {
  if (o.log != nullptr) *o.log << "  " << line << std::endl;
}

LatentPoint uniform_point(std::size_t d, std::size_t k, Rng& rng) {
  LatentPoint pt(d, k);
  for (auto& v : pt.z()) v = rng.uniform(-1.0, 1.0);
  return pt;
}

// ---- graph properties -------------------------------------------------------

CriterionOutcome lemma_acyclic() {
  std::size_t checked = 0;
  std::size_t cyclic = 0;
  for (std::size_t d : {5, 30, 100}) {
    for (std::size_t k : {1, 8}) {
      Rng rng(derive_seed(101, d, k));
      for (int t = 0; t < 10000; ++t) {
        if (!is_acyclic(vec_to_dag(uniform_point(d, k, rng)).adjacency())) ++cyclic;
        ++checked;
      }
    }
  }
  CriterionOutcome o;
  o.passed = cyclic == 0;
  o.measured = std::to_string(cyclic) + " cyclic of " + std::to_string(checked);
  o.bound = "0 cyclic";
  return o;
}

CriterionOutcome lemma_scale() {
  Rng rng(202);
  std::size_t mismatches = 0;
  std::size_t nonempty = 0;
  const std::size_t ds[] = {5, 30, 100};
  const std::size_t ks[] = {1, 8};
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = ds[rng.below(3)];
    const std::size_t k = ks[rng.below(2)];
    const LatentPoint pt = uniform_point(d, k, rng);
    const Dag base = vec_to_dag(pt);
    if (base.edge_count() > 0) ++nonempty;
    for (double alpha : {0.5, 2.0, 10.0}) {
      if (!(vec_to_dag(pt.scaled(alpha)) == base)) ++mismatches;
    }
  }
  CriterionOutcome o;
  o.passed = mismatches == 0;
  o.measured = std::to_string(mismatches) + " mismatches in 3000 comparisons (" + std::to_string(nonempty) +
               " non-empty graphs)";
  o.bound = "0 mismatches";
  return o;
}

// ---- scoring ---------------------------------------------------------------

CriterionOutcome decomposition_identity() {
  Rng rng(303);
  double worst = 0.0;
  std::size_t failures = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 2 + rng.below(7);
    const Dag dag = sample_er_dag(d, std::min(1.5, static_cast<double>(d - 1) / 2.0), rng);
    const ScmSpec scm = make_scm(sample_er_dag(d, std::min(1.0, static_cast<double>(d - 1) / 2.0), rng), Mechanism::kLinear, NoiseFamily::kGaussian, rng);
    const Dataset data = simulate(scm, 50 + rng.below(451), rng);
    for (ScoreVariant v : {ScoreVariant::kBicEv, ScoreVariant::kBicNv}) {
      LocalScoreCache cache;
      ScoreConfig cfg;
      cfg.variant = v;
      const EvaluationRecord rec = score_dag(dag, data, cfg, cache);
      const double af = combine_af(rec.locals, dag.edge_count(), data.n(), v);
      const double rel = std::abs(af - rec.total) / std::max(1.0, std::abs(rec.total));
      worst = std::max(worst, rel);
      if (!(rel <= 1e-9)) ++failures;
    }
  }
  CriterionOutcome o;
  o.passed = failures == 0;
  o.measured = "max relative gap " + fmt("%.3g", worst) + ", " + std::to_string(failures) + " of 2000 over";
  o.bound = "<= 1e-9 relative";
  return o;
}

CriterionOutcome true_score_dominance() {
  std::size_t wins = 0;
  std::size_t total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const SyntheticProblem p = make_problem({"er", 10, 2.0, Mechanism::kLinear, NoiseFamily::kGaussian, 1000, 800 + s});
    Scorer scorer(p.data, ScoreConfig{});
    const double truth = scorer.score(p.scm.graph).total;
    Rng rng(derive_seed(808, s));
    for (int r = 0; r < 100; ++r) {
      const Dag other = sample_er_dag(10, 2.0, rng);
      if (truth > scorer.score(other).total) ++wins;
      ++total;
    }
  }
  const double frac = static_cast<double>(wins) / static_cast<double>(total);
  CriterionOutcome o;
  o.passed = frac >= 0.95;
  o.measured = std::to_string(wins) + "/" + std::to_string(total) + " = " + fmt("%.4f", frac);
  o.bound = ">= 0.95";
  return o;
}

// ---- surrogate -------------------------------------------------------------

CriterionOutcome gradient_check() {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed(1010, t));
    DropoutNet net(5, 8, 0.1, rng);
    NetTensors& p = net.params();
    for (Eigen::Index u = 0; u < p.gamma.size(); ++u) {
      p.gamma(u) = rng.uniform(0.5, 1.5);
      p.beta(u) = rng.uniform(-0.5, 0.5);
    }
    const Eigen::Index rows = 16;
    Eigen::MatrixXd X(rows, 5);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    Eigen::VectorXd y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) y(i) = rng.normal();
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> drop(rows, 8);
    for (Eigen::Index i = 0; i < drop.size(); ++i) drop.data()[i] = rng.uniform() < 0.1 ? 1 : 0;

    NetTensors grad = NetTensors::zeros_like(p);
    (void)net.batch_loss(X, y, drop, &grad);
    double diff2 = 0.0;
    double ga2 = 0.0;
    double gn2 = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double w = p.at(k);
      p.at(k) = w + 1e-4;
      const double up = net.batch_loss(X, y, drop, nullptr);
      p.at(k) = w - 1e-4;
      const double down = net.batch_loss(X, y, drop, nullptr);
      p.at(k) = w;
      const double numeric = (up - down) / 2e-4;
      diff2 += (grad.at(k) - numeric) * (grad.at(k) - numeric);
      ga2 += grad.at(k) * grad.at(k);
      gn2 += numeric * numeric;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(ga2), std::sqrt(gn2), 1e-12}));
  }
  CriterionOutcome o;
  o.passed = worst <= 1e-4;
  o.measured = "max relative error " + fmt("%.3g", worst) + " over 20 networks";
  o.bound = "<= 1e-4";
  return o;
}

CriterionOutcome reservoir_uniformity() {
  constexpr std::size_t kCapacity = 1024;
  constexpr std::size_t kStream = 10240;
  constexpr std::size_t kTrials = 1000;
  std::vector<std::size_t> hits(kStream, 0);
  for (std::size_t t = 0; t < kTrials; ++t) {
    Rng rng(derive_seed(1111, t));
    ReplayBuffer buffer(kCapacity);
    for (std::size_t i = 0; i < kStream; ++i) buffer.insert({0, ParentMask{}, static_cast<double>(i)}, rng);
    for (const auto& item : buffer.items()) ++hits[static_cast<std::size_t>(item.value)];
  }
  // Each item's inclusion count is Binomial(trials, q); the normalized sum of
  // squares is approximately chi-square with stream - 1 degrees of freedom.
  const double q = static_cast<double>(kCapacity) / static_cast<double>(kStream);
  const double mean = static_cast<double>(kTrials) * q;
  const double var = mean * (1.0 - q);
  double stat = 0.0;
  for (std::size_t h : hits) stat += (static_cast<double>(h) - mean) * (static_cast<double>(h) - mean) / var;
  const boost::math::chi_squared dist(static_cast<double>(kStream - 1));
  const double pvalue = boost::math::cdf(boost::math::complement(dist, stat));
  CriterionOutcome o;
  o.passed = pvalue >= 0.01;
  o.measured = "chi2 " + fmt("%.1f", stat) + " on " + std::to_string(kStream - 1) + " df, p = " + fmt("%.4f", pvalue);
  o.bound = "p >= 0.01";
  return o;
}

// ---- optimizer runs --------------------------------------------------------

struct SeedRun {
  RunResult result;
  std::size_t shd = 0;
  bool monotone = true;
  bool within_budget = true;
};

enum class Prune { kNone, kThreshold };

SeedRun run_seed(const SyntheticProblem& p, const RunConfig& cfg, Prune prune, const SuiteOptions& opts) {
  SeedRun s;
  RunOptions ro;
  ro.truth = &p.scm.graph;
  const auto t0 = std::chrono::steady_clock::now();
  s.result = run(p.data, cfg, ro);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Dag final_dag = prune == Prune::kThreshold ? prune_linear_threshold(s.result.best_dag, p.data) : s.result.best_dag;
  s.shd = structural_hamming_distance(final_dag, p.scm.graph);
  s.monotone = s.result.trace.best_score_monotone();
  s.within_budget = s.result.evaluations < cfg.evaluations + cfg.batch;
  std::ostringstream line;
  line << "seed " << cfg.seed << ": shd " << s.shd << " (unpruned "
       << structural_hamming_distance(s.result.best_dag, p.scm.graph) << "), best " << fmt("%.4f", s.result.best_score)
       << ", evals " << s.result.evaluations << ", " << fmt("%.1f", secs) << " s";
  logf(opts, line.str());
  return s;
}

RunConfig base_config(std::size_t evaluations, std::uint64_t seed, const SuiteOptions& opts) {
  RunConfig cfg;
  cfg.evaluations = evaluations;
  cfg.seed = seed;
  cfg.kernels = opts.kernels;
  return cfg;
}

CriterionOutcome mean_shd(const SimulationSpec& spec_template, const RunConfig& cfg_template, std::size_t seeds,
                          Prune prune, double bound, const SuiteOptions& opts) {
  double sum = 0.0;
  bool monotone = true;
  std::string per_seed;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    SimulationSpec spec = spec_template;
    spec.seed = s;
    RunConfig cfg = cfg_template;
    cfg.seed = s;
    const SeedRun r = run_seed(make_problem(spec), cfg, prune, opts);
    sum += static_cast<double>(r.shd);
    monotone = monotone && r.monotone && r.within_budget;
    per_seed += (per_seed.empty() ? "" : ",") + std::to_string(r.shd);
  }
  const double mean = sum / static_cast<double>(seeds);
  CriterionOutcome o;
  o.passed = mean <= bound && monotone;
  o.measured = "mean SHD " + fmt("%.2f", mean) + " [" + per_seed + "]" + (monotone ? "" : ", trace not monotone");
  o.bound = "<= " + fmt("%g", bound);
  return o;
}

CriterionOutcome exhaustive_oracle(const SimulationSpec& spec_template, ScoreConfig score, std::size_t need,
                                   const SuiteOptions& opts) {
  std::size_t hits = 0;
  bool monotone = true;
  std::string per_seed;
  const std::vector<Dag> all = enumerate_dags(spec_template.nodes);
  for (std::uint64_t s = 0; s < 5; ++s) {
    SimulationSpec spec = spec_template;
    spec.seed = s;
    const SyntheticProblem p = make_problem(spec);
    LocalScoreCache cache;
    double best = -INFINITY;
    for (const Dag& g : all) best = std::max(best, score_dag(g, p.data, score, cache).total);
    RunConfig cfg = base_config(2000, s, opts);
    cfg.score = score;
    const SeedRun r = run_seed(p, cfg, Prune::kNone, opts);
    const double found = score_dag(r.result.best_dag, p.data, score, cache).total;
    const bool hit = found >= best - 1e-9 * std::max(1.0, std::abs(best));
    hits += hit ? 1 : 0;
    monotone = monotone && r.monotone && r.within_budget;
    per_seed += std::string(per_seed.empty() ? "" : ",") + (hit ? "hit" : "miss");
    logf(opts, "seed " + std::to_string(s) + ": exhaustive max " + fmt("%.6f", best) + ", found " + fmt("%.6f", found));
  }
  CriterionOutcome o;
  o.passed = hits >= need && monotone;
  o.measured = std::to_string(hits) + "/5 seeds reach the exhaustive maximum [" + per_seed + "]" +
               (monotone ? "" : ", trace not monotone") + " over " + std::to_string(all.size()) + " DAGs";
  o.bound = ">= " + std::to_string(need) + "/5";
  return o;
}

CriterionOutcome monotone_traces(const SuiteOptions& opts) {
  struct Case {
    SimulationSpec spec;
    ScoreConfig score;
    std::size_t evals;
  };
  ScoreConfig nv;
  nv.variant = ScoreVariant::kBicNv;
  ScoreConfig logistic;
  logistic.variant = ScoreVariant::kBicLogistic;
  ScoreConfig gp;
  gp.variant = ScoreVariant::kBicNv;
  gp.regressor = Regressor::kGp;
  gp.gp_max_rows = 128;
  const std::vector<Case> cases = {
      {{"er", 4, 1.0, Mechanism::kLinear, NoiseFamily::kGaussian, 1000, 0}, {}, 640},
      {{"er", 10, 2.0, Mechanism::kLinear, NoiseFamily::kGaussian, 1000, 1}, {}, 1280},
      {{"sf", 8, 1.0, Mechanism::kLinear, NoiseFamily::kGumbel, 500, 2}, nv, 640},
      {{"er", 4, 1.0, Mechanism::kLogistic, NoiseFamily::kGaussian, 1000, 3}, logistic, 640},
      {{"er", 5, 1.0, Mechanism::kGpNonlinear, NoiseFamily::kGaussian, 200, 4}, gp, 320},
  };
  std::size_t ok = 0;
  for (const Case& c : cases) {
    RunConfig cfg = base_config(c.evals, c.spec.seed, opts);
    cfg.score = c.score;
    const SeedRun r = run_seed(make_problem(c.spec), cfg, Prune::kNone, opts);
    if (r.monotone && r.within_budget) ++ok;
  }
  CriterionOutcome o;
  o.passed = ok == cases.size();
  o.measured = std::to_string(ok) + "/" + std::to_string(cases.size()) + " runs non-decreasing within budget";
  o.bound = "all runs";
  return o;
}

CriterionOutcome diversity(const SuiteOptions& opts) {
  auto mean_unique = [](std::size_t k) {
    double sum = 0.0;
    for (std::uint64_t r = 0; r < 10; ++r) {
      Rng rng(derive_seed(909, k, r));
      sum += static_cast<double>(diversity_probe(30, k, 1000, rng));
    }
    return sum / 10.0;
  };
  const double k2 = mean_unique(2);
  const double k32 = mean_unique(32);
  logf(opts, "k=2: " + fmt("%.1f", k2) + " unique, k=32: " + fmt("%.1f", k32) + " unique (mean of 10 probes)");
  CriterionOutcome o;
  o.passed = k2 >= 906 && k2 <= 948 && k32 >= 62 && k32 <= 120;
  o.measured = "k=2 " + fmt("%.1f", k2) + ", k=32 " + fmt("%.1f", k32);
  o.bound = "k=2 in [906, 948], k=32 in [62, 120]";
  return o;
}

const std::vector<CriterionInfo> kCriteria = {
    {1, "vec_to_dag always acyclic (10,000 draws per d, k)"},
    {2, "vec_to_dag scale invariance"},
    {3, "combine_af over exact locals equals score_dag total"},
    {4, "10ER2 linear, T=10,000, threshold pruning: mean SHD <= 1"},
    {5, "15ER4 linear, T=20,000: mean SHD <= 5"},
    {6, "d=4 linear: run reaches exhaustive BIC-EV maximum"},
    {7, "best-score-so-far traces are non-decreasing"},
    {8, "true DAG outscores random DAGs"},
    {9, "unique-DAG counts of uniform draws, d=30"},
    {10, "surrogate gradients match finite differences"},
    {11, "reservoir buffer inclusion is uniform"},
    {12, "d=4 logistic: run reaches exhaustive BIC-logistic maximum"},
    {13, "7ER2 GP data, BIC-NV with GP regression, T=3,000: mean SHD <= 4"},
};

}  // namespace

SyntheticProblem make_problem(const SimulationSpec& spec) {
  Rng rng(spec.seed);
  Dag graph;
  if (spec.graph == "er") {
    graph = sample_er_dag(spec.nodes, spec.edges_per_node, rng);
  } else if (spec.graph == "sf") {
    const double rounded = std::round(spec.edges_per_node);
    if (rounded < 1.0 || std::abs(rounded - spec.edges_per_node) > 1e-12) {
      throw std::invalid_argument("scale-free graphs need a positive integer number of edges per node");
    }
    graph = sample_sf_dag(spec.nodes, static_cast<std::size_t>(rounded), rng);
  } else {
    throw std::invalid_argument("unknown graph model '" + spec.graph + "' (expected er or sf)");
  }
  SyntheticProblem p;
  p.scm = make_scm(std::move(graph), spec.mechanism, spec.noise, rng);
  p.data = simulate(p.scm, spec.samples, rng);
  return p;
}

std::vector<Dag> enumerate_dags(std::size_t d) {
  if (d == 0 || d > 5) throw std::invalid_argument("exhaustive enumeration supports 1 <= d <= 5");
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i != j) slots.emplace_back(i, j);
    }
  }
  std::vector<Dag> out;
  BinaryMatrix adj(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << slots.size()); ++bits) {
    adj.setZero();
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if ((bits >> s) & 1U) adj(static_cast<Eigen::Index>(slots[s].first), static_cast<Eigen::Index>(slots[s].second)) = 1;
    }
    if (is_acyclic(adj)) out.push_back(Dag::from_adjacency(adj));
  }
  return out;
}

const std::vector<CriterionInfo>& acceptance_criteria() { return kCriteria; }

CriterionOutcome run_criterion(int id, const SuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionOutcome o;
  ScoreConfig logistic;
  logistic.variant = ScoreVariant::kBicLogistic;
  ScoreConfig gp;
  gp.variant = ScoreVariant::kBicNv;
  gp.regressor = Regressor::kGp;
  gp.gp_max_rows = 256;
  RunConfig gp_cfg = base_config(3000, 0, options);
  gp_cfg.score = gp;
  switch (id) {
    case 1: o = lemma_acyclic(); break;
    case 2: o = lemma_scale(); break;
    case 3: o = decomposition_identity(); break;
    case 4:
      o = mean_shd({"er", 10, 2.0, Mechanism::kLinear, NoiseFamily::kGaussian, 1000, 0}, base_config(10000, 0, options),
                   5, Prune::kThreshold, 1.0, options);
      break;
    case 5:
      o = mean_shd({"er", 15, 4.0, Mechanism::kLinear, NoiseFamily::kGaussian, 1000, 0}, base_config(20000, 0, options),
                   5, Prune::kThreshold, 5.0, options);
      break;
    case 6:
      o = exhaustive_oracle({"er", 4, 1.0, Mechanism::kLinear, NoiseFamily::kGaussian, 1000, 0}, ScoreConfig{}, 4,
                            options);
      break;
    case 7: o = monotone_traces(options); break;
    case 8: o = true_score_dominance(); break;
    case 9: o = diversity(options); break;
    case 10: o = gradient_check(); break;
    case 11: o = reservoir_uniformity(); break;
    case 12:
      o = exhaustive_oracle({"er", 4, 1.0, Mechanism::kLogistic, NoiseFamily::kGaussian, 1000, 0}, logistic, 3, options);
      break;
    case 13:
      o = mean_shd({"er", 7, 2.0, Mechanism::kGpNonlinear, NoiseFamily::kGaussian, 500, 0}, gp_cfg, 3, Prune::kNone,
                   4.0, options);
      break;
    default: throw std::invalid_argument("no acceptance criterion " + std::to_string(id));
  }
  o.id = id;
  o.title = kCriteria[static_cast<std::size_t>(id - 1)].title;
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return o;
}

std::vector<int> suite_criteria(std::string_view suite) {
  if (suite == "linear-small") return {6, 4};
  if (suite == "linear-dense") return {5};
  if (suite == "nonlinear-small") return {13};
  if (suite == "logistic-oracle") return {12};
  if (suite == "diversity") return {9};
  throw std::invalid_argument("unknown bench suite '" + std::string(suite) + "'");
}

std::vector<std::string> suite_names() {
  return {"linear-small", "linear-dense", "nonlinear-small", "logistic-oracle", "diversity"};
}

std::string format_outcome(const CriterionOutcome& o) {
  char head[64];
  std::snprintf(head, sizeof head, "criterion %-2d %s  ", o.id, o.passed ? "PASS" : "FAIL");
  return std::string(head) + o.title + ": " + o.measured + " (bound " + o.bound + ", " + fmt("%.1f", o.seconds) + " s)";
}

}  // namespace drbo
