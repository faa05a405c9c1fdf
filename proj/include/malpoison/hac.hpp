#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "malpoison/embedding.hpp"
#include "malpoison/metrics.hpp"

namespace malpoison {

/// One agglomeration step. Leaves are nodes [0, n); merge t creates node n + t.
/// `pair_i < pair_j` is the closest pair realizing the linkage distance, with
/// pair_i inside `left` and pair_j inside `right`.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t pair_i = 0;
  std::size_t pair_j = 0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

class Dendrogram {
 public:
  Dendrogram() = default;
  Dendrogram(std::size_t n, std::vector<Merge> merges);

  std::size_t size() const { return n_; }
  const std::vector<Merge>& merges() const { return merges_; }

 private:
  std::size_t n_ = 0;
  std::vector<Merge> merges_;
};

using DistanceFn = std::function<double(std::size_t, std::size_t)>;

/// Exact single-linkage hierarchy from a Prim minimum spanning tree.
/// Equal distances are ordered by the (min index, max index) pair.
Dendrogram single_linkage(std::size_t n, const DistanceFn& dist);
Dendrogram single_linkage(std::span<const SparseBinaryVector> points);
Dendrogram single_linkage(const EmbeddedDataset& data);

/// Connected components of all merges with height <= cutoff.
Partition cut(const Dendrogram& dend, double cutoff);

/// Partition after applying the first `merge_count` merges.
Partition cut_after(const Dendrogram& dend, std::size_t merge_count);

/// A distinct flat clustering reachable by cutting the hierarchy. `cutoff`
/// lies strictly between the last applied and the first skipped merge height.
struct CutCandidate {
  double cutoff = 0.0;
  std::size_t merges_applied = 0;
};

std::vector<CutCandidate> candidate_cutoffs(const Dendrogram& dend);

/// Calls `visit(candidate, partition)` for every candidate cutoff in
/// increasing order.
void sweep_cuts(const Dendrogram& dend, const std::function<void(const CutCandidate&, const Partition&)>& visit);

/// Cutoff maximizing the F-measure against `labels`; ties go to fewer
/// clusters, then to the smaller cutoff.
double calibrate_cutoff(const Dendrogram& dend, std::span<const std::string> labels);
double calibrate_cutoff(const EmbeddedDataset& labeled);

struct WorstCaseCut {
  Partition partition;  // restricted to the original indices
  double cutoff = 0.0;
  std::size_t merges_applied = 0;
  std::uint64_t discordant = 0;
  double objective = 0.0;
};

/// Among all candidate cutoffs of `dend`, the one whose projection onto
/// `original_indices` is closest (in clustering distance) to `reference`.
/// Ties go to the cluster count closest to the reference, then to the
/// smaller cutoff.
WorstCaseCut worst_case_cut(const Dendrogram& dend, const Partition& reference,
                            std::span<const std::size_t> original_indices);

/// CSV "merge_index,left,right,height,pair_i,pair_j".
void write_dendrogram_csv(const Dendrogram& dend, std::ostream& out);

}  // namespace malpoison
