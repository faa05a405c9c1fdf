#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace malpoison {

/// Raised for malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One behavioral report: an ordered stream of level-1 event category tokens.
struct Report {
  std::string id;
  std::optional<std::string> family;
  std::vector<std::string> events;
};

enum class Provenance { ingested, synthetic };

enum class ReportFormat { token_lines, jsonl };

/// Immutable, validated collection of reports.
///
/// Ids are unique, every report has at least one event, and either every
/// report carries a family label or none does.
class ReportSet {
 public:
  ReportSet() = default;
  ReportSet(std::vector<Report> reports, Provenance provenance);

  const std::vector<Report>& reports() const { return reports_; }
  Provenance provenance() const { return provenance_; }
  std::size_t size() const { return reports_.size(); }
  bool empty() const { return reports_.empty(); }
  bool labeled() const { return !reports_.empty() && reports_.front().family.has_value(); }
  const Report& operator[](std::size_t i) const { return reports_[i]; }

 private:
  std::vector<Report> reports_;
  Provenance provenance_ = Provenance::ingested;
};

/// Parameters for the synthetic family generator.
///
/// Each family owns a disjoint block of `core_tokens_per_family` tokens from
/// the vocabulary. A sample keeps each core token of its family with
/// probability `core_inclusion_prob` and adds a uniform number of noise tokens
/// drawn from the whole vocabulary. Consecutive families (f, f+1) share
/// `shared_tokens` core tokens, which places their clusters close together.
struct SynthConfig {
  std::size_t family_count = 10;
  std::size_t samples_min = 20;
  std::size_t samples_max = 20;
  std::size_t vocabulary_size = 85;
  std::size_t core_tokens_per_family = 8;
  double core_inclusion_prob = 0.9;
  std::size_t noise_min = 0;
  std::size_t noise_max = 2;
  std::size_t shared_tokens = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

ReportSet load_reports(const std::filesystem::path& path, ReportFormat format);
ReportFormat parse_report_format(const std::string& name);

/// Writes the set as jsonl; the output is a deterministic function of the set.
void write_reports_jsonl(const ReportSet& set, std::ostream& out);

ReportSet synth_generate(const SynthConfig& cfg);

struct SplitResult {
  ReportSet calibration;  // T
  ReportSet evaluation;   // S
};

/// Random two-way split into halves whose sizes differ by at most one; T gets
/// the extra report when the total is odd. With `stratified` (and labels),
/// every family is split as evenly as possible.
SplitResult split(const ReportSet& set, std::uint64_t seed, bool stratified = true);

}  // namespace malpoison
