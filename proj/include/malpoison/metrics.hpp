#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace malpoison {

using ClusterId = std::uint32_t;

/// Hard sample-to-cluster assignment. Cluster ids are dense in [0, k) and
/// numbered by the smallest member index, so two partitions are equal as set
/// partitions exactly when their assignment vectors are equal.
class Partition {
 public:
  Partition() = default;

  /// Renumbers arbitrary labels by first occurrence.
  template <typename Label>
  static Partition from_labels(std::span<const Label> labels);
  static Partition from_labels(std::span<const std::size_t> labels) { return from_labels<std::size_t>(labels); }
  static Partition singletons(std::size_t n);

  std::size_t size() const { return assignment_.size(); }
  std::size_t cluster_count() const { return k_; }
  ClusterId operator[](std::size_t i) const { return assignment_[i]; }
  std::span<const ClusterId> assignment() const { return assignment_; }
  std::vector<std::size_t> cluster_sizes() const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<ClusterId> assignment_;
  std::size_t k_ = 0;
};

template <typename Label>
Partition Partition::from_labels(std::span<const Label> labels) {
  Partition p;
  p.assignment_.reserve(labels.size());
  std::map<Label, ClusterId> seen;
  for (const auto& label : labels) {
    auto [it, inserted] = seen.emplace(label, static_cast<ClusterId>(seen.size()));
    p.assignment_.push_back(it->second);
  }
  p.k_ = seen.size();
  return p;
}

/// Row-stochastic n x k matrix of cluster posteriors.
class SoftAssignment {
 public:
  static constexpr double row_tolerance = 1e-9;

  SoftAssignment(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t i, std::size_t c) const { return values_[i * cols_ + c]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

  static SoftAssignment one_hot(const Partition& part);

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

/// Number of unordered sample pairs co-clustered in exactly one partition.
std::uint64_t discordant_pairs(const Partition& y, const Partition& yp);

/// Frobenius distance between co-association matrices, sqrt(2 * discordant pairs).
double clustering_distance(const Partition& y, const Partition& yp);

/// Frobenius distance between YY^T and P P^T for a soft estimate P.
double clustering_distance_soft(const Partition& y, const SoftAssignment& yp);

struct FMeasure {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

FMeasure f_measure(const Partition& part, std::span<const std::string> labels);

/// Projection onto `original_indices`: keeps those samples in the given
/// order and renumbers the surviving clusters.
Partition restrict(const Partition& part, std::span<const std::size_t> original_indices);

/// One row of an attack trace.
struct MetricsRecord {
  std::size_t poison_count = 0;
  double poison_fraction = 0.0;
  double objective_dc = 0.0;
  std::size_t clusters = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

inline constexpr const char* metrics_csv_header =
    "poison_count,poison_fraction,objective_dc,clusters,precision,recall,f_measure";

/// Shortest round-trip decimal form, so CSV output is reproducible bit for bit.
std::string format_real(double value);

void write_metrics_csv(std::span<const MetricsRecord> records, std::ostream& out);

}  // namespace malpoison
