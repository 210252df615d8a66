#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "drbo/data_gen.hpp"
#include "drbo/graph.hpp"
#include "drbo/kernels.hpp"
#include "drbo/rng.hpp"
#include "drbo/scoring.hpp"
#include "drbo/sobol.hpp"
#include "drbo/surrogate.hpp"

namespace drbo {

struct TrustRegionParams {
  double length_init = 1.0;
  double length_min = 0.01;
  double length_max = 2.0;
  int success_tolerance = 3;
  int failure_tolerance = 5;
  /// Expected number of perturbed coordinates per candidate.
  double perturb_budget = 20.0;
};

class TrustRegion {
 public:
  TrustRegion(LatentPoint center, TrustRegionParams params = {});

  [[nodiscard]] const LatentPoint& center() const { return center_; }
  [[nodiscard]] double length() const { return length_; }
  [[nodiscard]] int successes() const { return successes_; }
  [[nodiscard]] int failures() const { return failures_; }
  [[nodiscard]] const TrustRegionParams& params() const { return params_; }

  /// A success zeroes the failure streak and vice versa. n_succ successes in a
  /// row double L, n_fail failures halve it (clipped to [L_min, L_max]); the
  /// center moves to new_best on every improvement.
  void update(bool improved, const LatentPoint* new_best);

 private:
  LatentPoint center_;
  TrustRegionParams params_;
  double length_;
  int successes_ = 0;
  int failures_ = 0;
};

void update_trust_region(TrustRegion& tr, bool improved, const std::optional<LatentPoint>& new_best);

/// Probability that a coordinate is perturbed: min(1, budget / dims).
[[nodiscard]] double perturb_probability(std::size_t dims, double budget);

/// Writes candidate `index` of a trust-region proposal into out: each
/// coordinate is, with the perturbation probability, replaced by the scrambled
/// Sobol coordinate mapped into [max(-1, c-L/2), min(1, c+L/2)]; at least one
/// coordinate is always replaced. Random choices come from
/// Rng(derive_seed(stream_seed, index)).
void propose_candidate(const TrustRegion& tr, const SobolSequence& sobol, std::uint64_t stream_seed,
                       std::size_t index, std::span<double> out);

/// count candidates, row-major.
[[nodiscard]] std::vector<double> propose_candidates(const TrustRegion& tr, std::size_t count, std::uint64_t seed,
                                                     ExecPolicy policy = ExecPolicy::kParallel);

[[nodiscard]] std::vector<LatentPoint> lhd_initial(std::size_t count, std::size_t d, std::size_t k, Rng& rng);

/// Candidates that map to distinct DAGs, in order of first appearance.
struct UniqueCandidates {
  std::size_t d = 0;
  std::vector<std::size_t> source;  // index of the representative in the input
  std::vector<ParentMask> masks;    // row-major, size() x d

  [[nodiscard]] std::size_t size() const { return source.size(); }
  [[nodiscard]] std::span<const ParentMask> row(std::size_t u) const { return {masks.data() + u * d, d}; }
};

/// Streaming de-duplication of candidate DAGs.
class CandidateDeduplicator {
 public:
  explicit CandidateDeduplicator(std::size_t d);
  /// Returns true if the DAG was new.
  bool add(std::size_t source, std::span<const ParentMask> row);
  [[nodiscard]] const UniqueCandidates& result() const { return unique_; }
  [[nodiscard]] UniqueCandidates take() { return std::move(unique_); }

 private:
  void grow();

  UniqueCandidates unique_;
  std::vector<std::uint64_t> hashes_;
  std::vector<std::uint32_t> slots_;  // open addressing, 0 = empty, else unique index + 1
};

[[nodiscard]] UniqueCandidates dedup_candidates(std::span<const ParentMask> masks, std::size_t d);

/// Thompson-samples the acquisition value of every unique candidate and
/// returns the positions (into `unique`) of the `batch` best, best first.
/// Ties keep the earlier candidate.
[[nodiscard]] std::vector<std::size_t> acquisition_rank(const UniqueCandidates& unique,
                                                        const SurrogateEnsemble& ensemble, std::size_t n,
                                                        ScoreVariant variant, std::size_t batch,
                                                        std::uint64_t stream_seed,
                                                        ExecPolicy policy = ExecPolicy::kParallel,
                                                        std::vector<double>* values = nullptr);

struct RunConfig {
  std::size_t batch = 64;
  std::size_t candidates = 100000;
  std::size_t evaluations = 10000;
  std::size_t rank = 8;
  ScoreConfig score;
  std::uint64_t seed = 0;
  SurrogateParams surrogate;
  TrustRegionParams trust_region;
  ExecPolicy kernels = ExecPolicy::kParallel;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct TraceRecord {
  std::size_t iter = 0;
  std::size_t evals = 0;
  double best_score = 0.0;
  std::optional<std::size_t> shd_vs_truth;
  double length = 0.0;
  double elapsed_s = 0.0;
  double cache_hit_rate = 0.0;
  std::size_t unique_candidates = 0;
  double train_loss = 0.0;
};

struct RunTrace {
  std::vector<TraceRecord> records;
  [[nodiscard]] bool best_score_monotone() const;
};

/// One JSON object per line.
void write_trace_record(std::ostream& os, const TraceRecord& r);

struct RunOptions {
  const Dag* truth = nullptr;
  std::function<void(const TraceRecord&)> on_iteration;
};

struct RunResult {
  Dag best_dag;
  double best_score = 0.0;
  LatentPoint best_point{1, 1};
  RunTrace trace;
  std::size_t evaluations = 0;
  std::size_t iterations = 0;
};

/// Full optimization loop; stops once at least config.evaluations DAGs have
/// been scored.
[[nodiscard]] RunResult run(const Dataset& data, const RunConfig& config, const RunOptions& options = {});

/// Number of distinct DAGs among `count` uniform draws of z in [-1,1]^{d(1+k)}.
[[nodiscard]] std::size_t diversity_probe(std::size_t d, std::size_t k, std::size_t count, Rng& rng);

}  // namespace drbo
