#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drbo/bo_engine.hpp"
#include "drbo/data_gen.hpp"
#include "drbo/diagnostics.hpp"
#include "drbo/experiments.hpp"
#include "drbo/graph.hpp"
#include "drbo/pruning.hpp"
#include "drbo/rng.hpp"
#include "drbo/scoring.hpp"

namespace fs = std::filesystem;
using namespace drbo;

namespace {

struct RunArgs {
  std::string data;
  std::string truth;
  std::string score = "bic-ev";
  std::string regressor = "linear";
  std::size_t rank = 8;
  std::size_t evals = 10000;
  std::size_t batch = 64;
  std::size_t cands = 100000;
  std::vector<std::uint64_t> seeds{0};
  std::string prune = "none";
  double threshold = 0.3;
  double alpha = 0.001;
  bool standardize = false;
  std::size_t gp_rows = 512;
  double gp_noise = 1.0;
  std::size_t hidden = 64;
  double dropout = 0.1;
  double lr = 0.1;
  std::size_t n_grads = 10;
  std::size_t replay = 1024;
  double tr_init = 1.0;
  double tr_min = 0.01;
  double tr_max = 2.0;
  int tr_succ = 3;
  int tr_fail = 5;
  std::string kernels = "parallel";
  std::string out;
};

struct SimulateArgs {
  std::string graph = "er";
  std::size_t nodes = 10;
  double epn = 2.0;
  std::string mech = "linear";
  std::string noise = "gaussian";
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

struct EvalArgs {
  std::string est;
  std::string truth;
  std::string out;
};

struct ProbeArgs {
  std::size_t nodes = 30;
  std::size_t rank = 8;
  std::size_t count = 1000;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
};

/// Config echo restricted to one subcommand's dotted keys, so the file can be
/// passed back through --config.
std::string config_echo(const CLI::App& app, const std::string& command) {
  std::istringstream all(app.config_to_str(true, false));
  std::string out;
  for (std::string line; std::getline(all, line);) {
    if (line.rfind(command + ".", 0) == 0) out += line + "\n";
  }
  return out;
}

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void prepare_out_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
}

RunConfig make_run_config(const RunArgs& a) {
  RunConfig c;
  c.batch = a.batch;
  c.candidates = a.cands;
  c.evaluations = a.evals;
  c.rank = a.rank;
  c.score.variant = parse_score_variant(a.score);
  c.score.regressor = parse_regressor(a.regressor);
  c.score.gp_max_rows = a.gp_rows;
  c.score.gp_noise = a.gp_noise;
  c.surrogate.hidden = a.hidden;
  c.surrogate.dropout = a.dropout;
  c.surrogate.learning_rate = a.lr;
  c.surrogate.n_grads = a.n_grads;
  c.surrogate.replay_capacity = a.replay;
  c.trust_region.length_init = a.tr_init;
  c.trust_region.length_min = a.tr_min;
  c.trust_region.length_max = a.tr_max;
  c.trust_region.success_tolerance = a.tr_succ;
  c.trust_region.failure_tolerance = a.tr_fail;
  if (a.kernels == "parallel") {
    c.kernels = ExecPolicy::kParallel;
  } else if (a.kernels == "serial") {
    c.kernels = ExecPolicy::kSerialReference;
  } else {
    throw UsageError("--kernels must be parallel or serial");
  }
  c.validate();
  return c;
}

Dag apply_pruning(const RunArgs& a, const Dag& dag, const Dataset& data) {
  if (a.prune == "none") return dag;
  if (a.prune == "threshold") return prune_linear_threshold(dag, data, a.threshold);
  if (a.prune == "ci") return prune_ci(dag, data, a.alpha);
  throw UsageError("--prune must be none, threshold or ci");
}

int cmd_run(const RunArgs& a, const std::string& echo) {
  const RunConfig config = make_run_config(a);
  if (a.prune != "none" && a.prune != "threshold" && a.prune != "ci") {
    throw UsageError("--prune must be none, threshold or ci");
  }
  Dataset data = read_dataset_csv(a.data);
  if (a.standardize) data = standardize(data);
  check_compatible(data, config.score);
  std::optional<Dag> truth;
  if (!a.truth.empty()) {
    const BinaryMatrix adj = read_adjacency_csv(a.truth);
    if (static_cast<std::size_t>(adj.rows()) != data.d()) {
      throw std::runtime_error("truth graph has " + std::to_string(adj.rows()) + " nodes but data has " +
                               std::to_string(data.d()) + " columns");
    }
    truth = Dag::from_adjacency(adj);
  }

  prepare_out_dir(a.out);
  const fs::path out(a.out);
  write_text(out / "config.ini", echo);
  std::ofstream metrics_csv;
  if (truth) {
    metrics_csv.open(out / "metrics.csv");
    metrics_csv << "seed," << metrics_csv_header() << '\n';
  }

  for (const std::uint64_t seed : a.seeds) {
    RunConfig c = config;
    c.seed = seed;
    const std::string tag = "seed" + std::to_string(seed);
    std::ofstream trace(out / ("trace_" + tag + ".jsonl"));
    RunOptions opts;
    if (truth) opts.truth = &*truth;
    opts.on_iteration = [&trace](const TraceRecord& r) {
      write_trace_record(trace, r);
      trace.flush();
    };
    const RunResult result = run(data, c, opts);
    const Dag final_dag = apply_pruning(a, result.best_dag, data);
    write_adjacency_csv((out / ("adjacency_" + tag + ".csv")).string(), final_dag.adjacency());

    std::cout << "seed " << seed << ": best score " << std::setprecision(10) << result.best_score << ", "
              << result.evaluations << " evaluations, " << result.iterations << " iterations, "
              << final_dag.edge_count() << " edges\n";
    if (truth) {
      const MetricReport m = metrics(final_dag, *truth);
      metrics_csv << seed << ',' << metrics_csv_row(m) << '\n';
      print_metrics(std::cout, m);
    }
  }
  return 0;
}

int cmd_simulate(const SimulateArgs& a, const std::string& echo) {
  SimulationSpec spec;
  spec.graph = a.graph;
  spec.nodes = a.nodes;
  spec.edges_per_node = a.epn;
  spec.mechanism = parse_mechanism(a.mech);
  spec.noise = parse_noise(a.noise);
  spec.samples = a.n;
  spec.seed = a.seed;
  const SyntheticProblem problem = make_problem(spec);

  prepare_out_dir(a.out);
  const fs::path out(a.out);
  write_dataset_csv((out / "data.csv").string(), problem.data);
  write_adjacency_csv((out / "truth.csv").string(), problem.scm.graph.adjacency());
  write_text(out / "config.ini", echo);
  std::cout << "wrote " << problem.data.n() << " rows x " << problem.data.d() << " columns, "
            << problem.scm.graph.edge_count() << " true edges to " << a.out << '\n';
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const BinaryMatrix est = read_adjacency_csv(a.est);
  const BinaryMatrix truth = read_adjacency_csv(a.truth);
  if (est.rows() != truth.rows()) {
    throw std::runtime_error("estimate has " + std::to_string(est.rows()) + " nodes but truth has " +
                             std::to_string(truth.rows()));
  }
  const MetricReport m = metrics(Dag::from_adjacency(est), Dag::from_adjacency(truth));
  print_metrics(std::cout, m);
  if (!a.out.empty()) {
    const fs::path path(a.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n");
  }
  return 0;
}

int cmd_bench(const std::string& suite, bool serial) {
  std::vector<int> ids;
  try {
    ids = suite_criteria(suite);
  } catch (const std::invalid_argument&) {
    std::string known;
    for (const auto& s : suite_names()) known += (known.empty() ? "" : ", ") + s;
    throw UsageError("unknown suite '" + suite + "' (known: " + known + ")");
  }
  SuiteOptions opts;
  opts.log = &std::cerr;
  opts.kernels = serial ? ExecPolicy::kSerialReference : ExecPolicy::kParallel;
  std::vector<CriterionOutcome> outcomes;
  for (const int id : ids) outcomes.push_back(run_criterion(id, opts));

  std::cout << "suite " << suite << '\n';
  int failed = 0;
  for (const auto& o : outcomes) {
    std::cout << format_outcome(o) << '\n';
    if (!o.passed) {
      ++failed;
      std::cerr << "bound violated: criterion " << o.id << " (" << o.title << ")\n";
    }
  }
  return failed == 0 ? 0 : 1;
}

int cmd_probe(const ProbeArgs& a) {
  Rng rng(a.seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < a.trials; ++t) {
    const auto unique = static_cast<double>(diversity_probe(a.nodes, a.rank, a.count, rng));
    std::cout << "trial " << t << ": " << unique << " unique DAGs of " << a.count << '\n';
    sum += unique;
    sum_sq += unique * unique;
  }
  const double trials = static_cast<double>(a.trials);
  const double mean = sum / trials;
  const double sd = a.trials > 1 ? std::sqrt(std::max(0.0, (sum_sq - trials * mean * mean) / (trials - 1.0))) : 0.0;
  std::cout << "d=" << a.nodes << " k=" << a.rank << ": mean " << mean << " sd " << sd << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal structure search with Bayesian optimization over low-rank DAG embeddings"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value file, one dotted key per line (e.g. run.evals=2000)");
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Report numerical fallbacks on stderr");

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Search for a DAG on a CSV dataset");
  run_cmd->add_option("--data", ra.data, "Data CSV with header x1..xd")->required();
  run_cmd->add_option("--truth", ra.truth, "Ground-truth adjacency CSV");
  run_cmd->add_option("--score", ra.score, "bic-ev, bic-nv or bic-logistic")->capture_default_str();
  run_cmd->add_option("--regressor", ra.regressor, "linear or gp")->capture_default_str();
  run_cmd->add_option("--rank", ra.rank, "Embedding rank k")->capture_default_str();
  run_cmd->add_option("--evals", ra.evals, "Evaluation budget T")->capture_default_str();
  run_cmd->add_option("--batch", ra.batch, "Batch size B")->capture_default_str();
  run_cmd->add_option("--cands", ra.cands, "Candidates per iteration C")->capture_default_str();
  run_cmd->add_option("--seed", ra.seeds, "One or more seeds")->capture_default_str();
  run_cmd->add_option("--prune", ra.prune, "none, threshold or ci")->capture_default_str();
  run_cmd->add_option("--threshold", ra.threshold, "Weight threshold for threshold pruning")->capture_default_str();
  run_cmd->add_option("--alpha", ra.alpha, "Significance level for ci pruning")->capture_default_str();
  run_cmd->add_flag("--standardize", ra.standardize, "z-score every column before the search");
  run_cmd->add_option("--gp-rows", ra.gp_rows, "Rows used per GP fit")->capture_default_str();
  run_cmd->add_option("--gp-noise", ra.gp_noise, "GP kernel noise")->capture_default_str();
  run_cmd->add_option("--hidden", ra.hidden, "Surrogate hidden units")->capture_default_str();
  run_cmd->add_option("--dropout", ra.dropout, "Surrogate dropout rate")->capture_default_str();
  run_cmd->add_option("--lr", ra.lr, "Surrogate learning rate")->capture_default_str();
  run_cmd->add_option("--n-grads", ra.n_grads, "Gradient steps per iteration")->capture_default_str();
  run_cmd->add_option("--replay", ra.replay, "Replay buffer capacity")->capture_default_str();
  run_cmd->add_option("--tr-init", ra.tr_init, "Initial trust-region length")->capture_default_str();
  run_cmd->add_option("--tr-min", ra.tr_min, "Minimum trust-region length")->capture_default_str();
  run_cmd->add_option("--tr-max", ra.tr_max, "Maximum trust-region length")->capture_default_str();
  run_cmd->add_option("--tr-succ", ra.tr_succ, "Successes before expanding")->capture_default_str();
  run_cmd->add_option("--tr-fail", ra.tr_fail, "Failures before shrinking")->capture_default_str();
  run_cmd->add_option("--kernels", ra.kernels, "parallel or serial")->capture_default_str();
  run_cmd->add_option("--out", ra.out, "Output directory")->required();

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset and its true DAG");
  sim_cmd->add_option("--graph", sa.graph, "er or sf")->capture_default_str();
  sim_cmd->add_option("--nodes", sa.nodes, "Number of nodes")->capture_default_str();
  sim_cmd->add_option("--epn", sa.epn, "Expected edges per node")->capture_default_str();
  sim_cmd->add_option("--mech", sa.mech, "linear, gp, cosine or logistic")->capture_default_str();
  sim_cmd->add_option("--noise", sa.noise, "gaussian, exponential, gumbel, laplace or uniform")
      ->capture_default_str();
  sim_cmd->add_option("--n", sa.n, "Number of samples")->capture_default_str();
  sim_cmd->add_option("--seed", sa.seed, "Seed")->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "Output directory")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Compare an estimated adjacency CSV with the truth");
  eval_cmd->add_option("--est", ea.est, "Estimated adjacency CSV")->required();
  eval_cmd->add_option("--truth", ea.truth, "True adjacency CSV")->required();
  eval_cmd->add_option("--out", ea.out, "Also write the metrics as a CSV file");

  std::string suite;
  bool bench_serial = false;
  auto* bench_cmd = app.add_subcommand("bench", "Run an acceptance suite and compare with its bounds");
  bench_cmd->add_option("suite", suite, "linear-small, linear-dense, nonlinear-small, logistic-oracle, diversity")
      ->required();
  bench_cmd->add_flag("--serial", bench_serial, "Use the serial reference kernels");

  ProbeArgs pa;
  auto* probe_cmd = app.add_subcommand("probe", "Count distinct DAGs among uniform latent draws");
  probe_cmd->add_option("--nodes", pa.nodes, "Number of nodes")->capture_default_str();
  probe_cmd->add_option("--rank", pa.rank, "Embedding rank k")->capture_default_str();
  probe_cmd->add_option("--count", pa.count, "Draws per trial")->capture_default_str();
  probe_cmd->add_option("--trials", pa.trials, "Number of trials")->capture_default_str();
  probe_cmd->add_option("--seed", pa.seed, "Seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  set_verbose(verbose);

  try {
    if (*run_cmd) {
      if (ra.seeds.empty()) throw UsageError("--seed needs at least one value");
      return cmd_run(ra, config_echo(app, "run"));
    }
    if (*sim_cmd) return cmd_simulate(sa, config_echo(app, "simulate"));
    if (*eval_cmd) return cmd_eval(ea);
    if (*bench_cmd) return cmd_bench(suite, bench_serial);
    if (*probe_cmd) return cmd_probe(pa);
  } catch (const UsageError& e) {
    std::cerr << "drbo: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "drbo: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
