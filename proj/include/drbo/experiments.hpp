#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "drbo/bo_engine.hpp"
#include "drbo/data_gen.hpp"
#include "drbo/graph.hpp"

namespace drbo {

/// Synthetic benchmark problem, fully determined by its fields.
struct SimulationSpec {
  std::string graph = "er";  // er | sf
  std::size_t nodes = 10;
  double edges_per_node = 2.0;
  Mechanism mechanism = Mechanism::kLinear;
  NoiseFamily noise = NoiseFamily::kGaussian;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

struct SyntheticProblem {
  ScmSpec scm;
  Dataset data;
};

[[nodiscard]] SyntheticProblem make_problem(const SimulationSpec& spec);

/// Every DAG on d labelled nodes (d <= 5), by brute force over adjacency
/// bit patterns. 543 graphs for d = 4.
[[nodiscard]] std::vector<Dag> enumerate_dags(std::size_t d);

struct CriterionOutcome {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string measured;
  std::string bound;
  double seconds = 0.0;
};

struct CriterionInfo {
  int id;
  const char* title;
};

[[nodiscard]] const std::vector<CriterionInfo>& acceptance_criteria();

struct SuiteOptions {
  std::ostream* log = nullptr;  // per-seed progress lines
  ExecPolicy kernels = ExecPolicy::kParallel;
};

[[nodiscard]] CriterionOutcome run_criterion(int id, const SuiteOptions& options);

/// Criteria exercised by a bench suite (linear-small, linear-dense,
/// nonlinear-small, logistic-oracle, diversity). Throws std::invalid_argument
/// for an unknown suite.
[[nodiscard]] std::vector<int> suite_criteria(std::string_view suite);
[[nodiscard]] std::vector<std::string> suite_names();

/// "criterion 4  PASS  measured ... (bound ...)  12.3 s"
[[nodiscard]] std::string format_outcome(const CriterionOutcome& o);

}  // namespace drbo
