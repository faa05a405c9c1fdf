#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malpoison/attack.hpp"
#include "malpoison/dataset.hpp"

namespace malpoison {

/// Either a report file or a synthetic generator configuration.
struct DataSource {
  std::optional<std::filesystem::path> path;
  ReportFormat format = ReportFormat::jsonl;
  std::optional<SynthConfig> synth;
};

struct ExperimentConfig {
  DataSource source;
  std::size_t q = 1;
  std::vector<StrategyKind> strategies;
  double max_fraction = 0.05;
  std::size_t repetitions = 5;
  CutoffMode cutoff_mode = CutoffMode::worst_case;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir;
  bool stratified = true;
  Bandwidth bandwidth;
  bool count_all_clusters = false;
  std::size_t jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Mean and sample standard deviation of one metric along the schedule.
struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct StrategyAggregate {
  StrategyKind kind = StrategyKind::random;
  std::vector<std::size_t> poison_counts;
  std::vector<double> fractions;
  SeriesStats objective;
  SeriesStats clusters;
  SeriesStats precision;
  SeriesStats recall;
  SeriesStats f_measure;
};

struct RepetitionResult {
  std::uint64_t seed = 0;
  double cutoff = 0.0;
  std::size_t calibration_size = 0;
  std::size_t evaluation_size = 0;
  std::vector<AttackTrace> traces;  // aligned with ExperimentConfig::strategies
};

struct ExperimentResult {
  ExperimentConfig config;
  std::size_t injections = 0;
  std::vector<RepetitionResult> repetitions;
  std::vector<StrategyAggregate> aggregates;
};

/// Number of injections for a poisoning budget over |S| samples.
std::size_t injection_budget(double max_fraction, std::size_t evaluation_size);

/// Repeats split, calibration and every attack; deterministic in master_seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Pads each trace to `injections + 1` rows by carrying its final row, then
/// averages across repetitions.
StrategyAggregate aggregate(StrategyKind kind, std::span<const std::vector<MetricsRecord>> traces,
                            std::size_t injections, std::size_t evaluation_size);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string sha256;
};

/// Writes aggregate and per-repetition CSVs, attack logs, the config echo and
/// manifest.txt. Refuses a non-empty directory unless `force`.
std::vector<ManifestEntry> write_results(const ExperimentResult& res, const std::filesystem::path& dir,
                                         bool force = false);

std::string sha256_hex(const std::string& bytes);

void write_aggregate_csv(const StrategyAggregate& agg, std::ostream& out);
std::vector<StrategyAggregate> load_aggregates(const std::filesystem::path& dir);

/// objective.svg, clusters.svg and f_measure.svg: one polyline per strategy.
std::vector<std::filesystem::path> render_curves(std::span<const StrategyAggregate> aggregates,
                                                 const std::filesystem::path& dir);

}  // namespace malpoison
