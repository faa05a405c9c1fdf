#include "malpoison/hac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace malpoison {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Returns the surviving root.
  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return a;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct Edge {
  double height;
  std::size_t i;
  std::size_t j;

  auto key() const { return std::tie(height, i, j); }
  bool operator<(const Edge& other) const { return key() < other.key(); }
};

Partition partition_of(DisjointSets& sets, std::size_t n) {
  std::vector<std::size_t> roots(n);
  for (std::size_t i = 0; i < n; ++i) roots[i] = sets.find(i);
  return Partition::from_labels(std::span<const std::size_t>(roots));
}

}  // namespace

Dendrogram::Dendrogram(std::size_t n, std::vector<Merge> merges) : n_(n), merges_(std::move(merges)) {
  if (n_ == 0) throw std::invalid_argument("dendrogram needs at least one leaf");
  if (merges_.size() != n_ - 1) {
    throw std::invalid_argument("dendrogram over " + std::to_string(n_) + " leaves needs " + std::to_string(n_ - 1) +
                                " merges, got " + std::to_string(merges_.size()));
  }
  std::vector<bool> consumed(2 * n_ - 1, false);
  for (std::size_t t = 0; t < merges_.size(); ++t) {
    const auto& m = merges_[t];
    if (!(m.height >= 0.0)) throw std::invalid_argument("merge height must be non-negative");
    if (t > 0 && m.height < merges_[t - 1].height) {
      throw std::invalid_argument("merge heights must be non-decreasing (merge " + std::to_string(t) + ")");
    }
    for (auto node : {m.left, m.right}) {
      if (node >= n_ + t || consumed[node]) {
        throw std::invalid_argument("merge " + std::to_string(t) + " references an invalid node");
      }
      consumed[node] = true;
    }
    if (m.pair_i >= n_ || m.pair_j >= n_) throw std::invalid_argument("merge pair outside the leaves");
  }
}

Dendrogram single_linkage(std::size_t n, const DistanceFn& dist) {
  if (n < 2) throw std::invalid_argument("single linkage needs at least 2 points, got " + std::to_string(n));

  // Prim's algorithm over the complete graph with a strict total order on
  // edges, so the spanning tree (and every realizing pair) is unique.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<bool> in_tree(n, false);
  std::vector<Edge> best(n, Edge{inf, 0, 0});
  std::vector<Edge> tree;
  tree.reserve(n - 1);

  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const Edge candidate{dist(current, v), std::min(current, v), std::max(current, v)};
      if (candidate < best[v]) best[v] = candidate;
      if (next == n || best[v] < best[next]) next = v;
    }
    in_tree[next] = true;
    tree.push_back(best[next]);
    current = next;
  }

  std::sort(tree.begin(), tree.end());
  DisjointSets sets(n);
  std::vector<std::size_t> node_of_root(n);
  std::iota(node_of_root.begin(), node_of_root.end(), 0);
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  for (const auto& e : tree) {
    const std::size_t ri = sets.find(e.i);
    const std::size_t rj = sets.find(e.j);
    merges.push_back(Merge{node_of_root[ri], node_of_root[rj], e.height, e.i, e.j});
    node_of_root[sets.unite(ri, rj)] = n + merges.size() - 1;
  }
  return Dendrogram(n, std::move(merges));
}

Dendrogram single_linkage(std::span<const SparseBinaryVector> points) {
  return single_linkage(points.size(), [&](std::size_t a, std::size_t b) { return distance(points[a], points[b]); });
}

Dendrogram single_linkage(const EmbeddedDataset& data) { return single_linkage(std::span(data.vectors)); }

Partition cut_after(const Dendrogram& dend, std::size_t merge_count) {
  DisjointSets sets(dend.size());
  for (std::size_t t = 0; t < merge_count && t < dend.merges().size(); ++t) {
    sets.unite(dend.merges()[t].pair_i, dend.merges()[t].pair_j);
  }
  return partition_of(sets, dend.size());
}

Partition cut(const Dendrogram& dend, double cutoff) {
  if (!(cutoff >= 0.0)) throw std::invalid_argument("cutoff must be non-negative");
  std::size_t applied = 0;
  while (applied < dend.merges().size() && dend.merges()[applied].height <= cutoff) ++applied;
  return cut_after(dend, applied);
}

std::vector<CutCandidate> candidate_cutoffs(const Dendrogram& dend) {
  const auto& merges = dend.merges();
  std::vector<CutCandidate> out;
  if (merges.empty()) {
    out.push_back({0.0, 0});
    return out;
  }
  if (merges.front().height > 0.0) out.push_back({merges.front().height / 2.0, 0});
  for (std::size_t t = 0; t < merges.size(); ++t) {
    const bool group_end = t + 1 == merges.size() || merges[t + 1].height > merges[t].height;
    if (!group_end) continue;
    const double cutoff =
        t + 1 == merges.size() ? merges[t].height + 1.0 : merges[t].height + (merges[t + 1].height - merges[t].height) / 2.0;
    out.push_back({cutoff, t + 1});
  }
  return out;
}

void sweep_cuts(const Dendrogram& dend, const std::function<void(const CutCandidate&, const Partition&)>& visit) {
  DisjointSets sets(dend.size());
  std::size_t applied = 0;
  for (const auto& candidate : candidate_cutoffs(dend)) {
    for (; applied < candidate.merges_applied; ++applied) {
      sets.unite(dend.merges()[applied].pair_i, dend.merges()[applied].pair_j);
    }
    visit(candidate, partition_of(sets, dend.size()));
  }
}

double calibrate_cutoff(const Dendrogram& dend, std::span<const std::string> labels) {
  if (labels.size() != dend.size()) throw std::invalid_argument("calibration needs one label per sample");
  double best_f = -1.0;
  std::size_t best_k = 0;
  double best_cutoff = 0.0;
  sweep_cuts(dend, [&](const CutCandidate& candidate, const Partition& part) {
    const double f = f_measure(part, labels).f;
    const std::size_t k = part.cluster_count();
    if (f > best_f || (f == best_f && k < best_k)) {
      best_f = f;
      best_k = k;
      best_cutoff = candidate.cutoff;
    }
  });
  return best_cutoff;
}

double calibrate_cutoff(const EmbeddedDataset& labeled) {
  if (!labeled.labels) throw std::invalid_argument("cutoff calibration needs family labels");
  return calibrate_cutoff(single_linkage(labeled), *labeled.labels);
}

WorstCaseCut worst_case_cut(const Dendrogram& dend, const Partition& reference,
                            std::span<const std::size_t> original_indices) {
  if (reference.size() != original_indices.size()) {
    throw std::invalid_argument("worst-case cut: reference covers " + std::to_string(reference.size()) +
                                " samples but " + std::to_string(original_indices.size()) + " original indices given");
  }
  const auto distance_to_ref_k = [&](const Partition& p) {
    const auto k = p.cluster_count();
    const auto kr = reference.cluster_count();
    return k > kr ? k - kr : kr - k;
  };

  WorstCaseCut best;
  bool have_best = false;
  sweep_cuts(dend, [&](const CutCandidate& candidate, const Partition& part) {
    Partition projected = restrict(part, original_indices);
    const std::uint64_t discordant = discordant_pairs(reference, projected);
    // Candidates arrive in increasing cutoff order, so strict comparisons keep the smaller cutoff on ties.
    if (!have_best || discordant < best.discordant ||
        (discordant == best.discordant && distance_to_ref_k(projected) < distance_to_ref_k(best.partition))) {
      best.partition = std::move(projected);
      best.cutoff = candidate.cutoff;
      best.merges_applied = candidate.merges_applied;
      best.discordant = discordant;
      have_best = true;
    }
  });
  best.objective = std::sqrt(2.0 * static_cast<double>(best.discordant));
  return best;
}

void write_dendrogram_csv(const Dendrogram& dend, std::ostream& out) {
  out << "merge_index,left,right,height,pair_i,pair_j\n";
  for (std::size_t t = 0; t < dend.merges().size(); ++t) {
    const auto& m = dend.merges()[t];
    out << t << ',' << m.left << ',' << m.right << ',' << format_real(m.height) << ',' << m.pair_i << ','
        << m.pair_j << '\n';
  }
}

}  // namespace malpoison
