#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "malpoison/embedding.hpp"
#include "malpoison/hac.hpp"
#include "malpoison/metrics.hpp"
#include "malpoison/random.hpp"

namespace malpoison {

enum class StrategyKind { random, random_best, bridge_best, bridge_hard, bridge_soft, fmeasure_best };

inline constexpr StrategyKind all_strategies[] = {StrategyKind::random,      StrategyKind::random_best,
                                                  StrategyKind::bridge_best, StrategyKind::bridge_hard,
                                                  StrategyKind::bridge_soft, StrategyKind::fmeasure_best};

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);

enum class CutoffMode { worst_case, fixed };

std::string to_string(CutoffMode mode);
CutoffMode parse_cutoff_mode(const std::string& name);

/// KDE bandwidth for the soft bridge strategy. `value` is used only when
/// `automatic` is false.
struct Bandwidth {
  bool automatic = true;
  double value = 0.0;
};

/// An attack point: a clone of working sample `base_index` with the features
/// in `added` switched on.
struct PoisonCandidate {
  SparseBinaryVector vector;
  std::size_t base_index = 0;
  std::vector<FeatureIndex> added;
};

/// Closest pairs of the k-1 merges above the current cut, by increasing height.
std::vector<std::pair<std::size_t, std::size_t>> candidate_links(const Dendrogram& dend, std::size_t k);

struct BridgePoint {
  SparseBinaryVector vector;
  bool base_is_first = true;
  std::vector<FeatureIndex> added;
  double imbalance = 0.0;
};

/// |d(a, base) - d(a, other)| for the base clone extended by m features of
/// other \ base.
double bridge_imbalance(std::size_t base_size, std::size_t other_size, std::size_t shared, std::size_t m);

/// Point between x1 and x2 reachable by feature addition from the endpoint
/// with fewer active features. Empty when the other endpoint adds nothing.
std::optional<BridgePoint> bridge_point(const SparseBinaryVector& x1, const SparseBinaryVector& x2);

/// Gaussian KDE cluster posteriors with equal cluster priors; each point
/// contributes its own kernel to its cluster density.
SoftAssignment soft_posteriors(std::span<const SparseBinaryVector> points, const Partition& part, double h);

/// Mean distance over all unordered pairs.
double auto_bandwidth(std::span<const SparseBinaryVector> points);

struct AttackConfig {
  StrategyKind kind = StrategyKind::bridge_best;
  Bandwidth bandwidth;
  std::size_t max_points = 1;
  CutoffMode cutoff_mode = CutoffMode::worst_case;
  double cutoff = 0.0;  // calibrated cutoff defining the reference clustering
  std::uint64_t seed = 0;
  bool count_all_clusters = false;
  std::size_t jobs = 1;
  std::size_t max_random_attempts = 64;
};

/// Score of one candidate as seen by the selection rule.
struct CandidateScore {
  std::size_t base_index = 0;
  std::string base_id;
  std::vector<FeatureIndex> added;
  double score = 0.0;
  std::size_t clusters = 0;
};

struct StepLog {
  std::size_t step = 0;
  std::vector<CandidateScore> candidates;
  std::size_t skipped_duplicates = 0;
  std::size_t skipped_inadmissible = 0;
  std::optional<std::size_t> chosen;
};

struct AttackTrace {
  StrategyKind kind = StrategyKind::random;
  CutoffMode cutoff_mode = CutoffMode::worst_case;
  double reference_cutoff = 0.0;
  double bandwidth = 0.0;
  std::vector<MetricsRecord> records;
  std::vector<StepLog> steps;
  std::vector<PoisonCandidate> injected;
  std::vector<std::string> injected_base_ids;  // originating original sample of each injection
  bool terminated_early = false;
  std::string termination_reason;
  std::size_t clustering_runs = 0;
};

/// Evaluation of one working set under the configured cutoff mode.
struct ClusteringView {
  Dendrogram dendrogram;
  double cutoff = 0.0;
  Partition working;    // over every working point
  Partition originals;  // projection onto the original samples
  std::uint64_t discordant = 0;
  double objective = 0.0;
  FMeasure quality;
};

/// Greedy poisoning state over the evaluation split S.
class AttackState {
 public:
  AttackState(EmbeddedDataset originals, AttackConfig cfg);

  const AttackConfig& config() const { return cfg_; }
  const EmbeddedDataset& working() const { return working_; }
  const Partition& reference() const { return reference_; }
  const ClusteringView& current() const { return current_; }
  const std::vector<MetricsRecord>& records() const { return records_; }
  std::size_t clustering_runs() const { return clustering_runs_; }
  std::size_t injected_count() const { return working_.size() - originals_.size(); }
  double bandwidth() const { return bandwidth_; }
  Rng& rng() { return rng_; }

  /// True when the active set already occurs in the working data.
  bool is_duplicate(const SparseBinaryVector& v) const;

  /// Clusters working data plus `extra` (when given) under the cutoff mode.
  ClusteringView evaluate(const SparseBinaryVector* extra) const;

  /// Metrics of a view, as a trace row for the current poison count.
  MetricsRecord record_for(const ClusteringView& view, std::size_t poison_count) const;

  /// Appends the candidate to the working data, re-clusters once and
  /// records the new metrics.
  void commit(const PoisonCandidate& candidate);

  /// Root original sample id behind working point i.
  const std::string& root_id(std::size_t i) const { return root_ids_[i]; }

  void count_clusterings(std::size_t n) { clustering_runs_ += n; }

 private:
  AttackConfig cfg_;
  EmbeddedDataset working_;
  std::vector<std::size_t> originals_;
  std::vector<std::string> root_ids_;
  std::set<std::vector<FeatureIndex>> active_sets_;
  Partition reference_;
  ClusteringView current_;
  std::vector<MetricsRecord> records_;
  std::size_t clustering_runs_ = 0;
  double bandwidth_ = 0.0;
  Rng rng_;
};

struct StepResult {
  std::optional<PoisonCandidate> chosen;
  StepLog log;
  std::string stop_reason;  // set when no candidate could be produced
};

/// Proposes and scores candidates for one greedy iteration without
/// committing; consumes the state rng for generation and tie-breaking.
StepResult strategy_step(AttackState& state, StrategyKind kind);

AttackTrace run_attack(const EmbeddedDataset& s, const AttackConfig& cfg);

/// JSON sidecar: configuration plus per-step candidate scores and choices.
void write_attack_log_json(const AttackTrace& trace, std::ostream& out);

}  // namespace malpoison
