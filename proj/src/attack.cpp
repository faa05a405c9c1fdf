#include "malpoison/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "malpoison/parallel.hpp"

namespace malpoison {

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

struct StrategyName {
  StrategyKind kind;
  const char* name;
};

constexpr StrategyName strategy_names[] = {
    {StrategyKind::random, "random"},           {StrategyKind::random_best, "random-best"},
    {StrategyKind::bridge_best, "bridge-best"}, {StrategyKind::bridge_hard, "bridge-hard"},
    {StrategyKind::bridge_soft, "bridge-soft"}, {StrategyKind::fmeasure_best, "fmeasure-best"},
};

// Row-major n x k matrix of log sum_{j in C_c} exp(-d(i, j)^2 / (2 h^2)).
std::vector<double> kernel_log_sums(std::span<const SparseBinaryVector> points, const Partition& part, double h) {
  const std::size_t n = points.size();
  const std::size_t k = part.cluster_count();
  const double scale = 1.0 / (2.0 * h * h);
  std::vector<double> out(n * k, -std::numeric_limits<double>::infinity());
  std::vector<double> exponents(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = distance(points[i], points[j]);
      exponents[j] = -d * d * scale;
    }
    double* row = out.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) row[part[j]] = std::max(row[part[j]], exponents[j]);
    std::vector<double> sums(k, 0.0);
    for (std::size_t j = 0; j < n; ++j) sums[part[j]] += std::exp(exponents[j] - row[part[j]]);
    for (std::size_t c = 0; c < k; ++c) row[c] += std::log(sums[c]);
  }
  return out;
}

double log_add(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(lo - hi));
}

// Softmax of per-row log scores into a soft assignment.
SoftAssignment softmax_rows(std::size_t rows, std::size_t cols, std::vector<double> scores) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = scores.data() + i * cols;
    const double top = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - top);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
  return SoftAssignment(rows, cols, std::move(scores));
}

}  // namespace

std::string to_string(StrategyKind kind) {
  for (const auto& s : strategy_names) {
    if (s.kind == kind) return s.name;
  }
  return "unknown";
}

StrategyKind parse_strategy(const std::string& name) {
  for (const auto& s : strategy_names) {
    if (name == s.name) return s.kind;
  }
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

std::string to_string(CutoffMode mode) { return mode == CutoffMode::worst_case ? "worst-case" : "fixed"; }

CutoffMode parse_cutoff_mode(const std::string& name) {
  if (name == "worst-case" || name == "worst_case") return CutoffMode::worst_case;
  if (name == "fixed") return CutoffMode::fixed;
  throw std::invalid_argument("unknown cutoff mode '" + name + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> candidate_links(const Dendrogram& dend, std::size_t k) {
  if (k < 2) throw std::invalid_argument("candidate links need at least 2 clusters");
  if (k > dend.size()) throw std::invalid_argument("more clusters than samples");
  std::vector<std::pair<std::size_t, std::size_t>> links;
  const auto& merges = dend.merges();
  for (std::size_t t = merges.size() - (k - 1); t < merges.size(); ++t) {
    links.emplace_back(merges[t].pair_i, merges[t].pair_j);
  }
  return links;
}

double bridge_imbalance(std::size_t base_size, std::size_t other_size, std::size_t shared, std::size_t m) {
  const double to_base = unit_binary_distance(base_size, base_size + m, base_size);
  const double to_other = unit_binary_distance(shared + m, base_size + m, other_size);
  return std::abs(to_base - to_other);
}

std::optional<BridgePoint> bridge_point(const SparseBinaryVector& x1, const SparseBinaryVector& x2) {
  const auto a1 = x1.active();
  const auto a2 = x2.active();
  bool first_is_base;
  if (a1.size() != a2.size()) {
    first_is_base = a1.size() < a2.size();
  } else {
    first_is_base = std::lexicographical_compare(a1.begin(), a1.end(), a2.begin(), a2.end()) ||
                    std::equal(a1.begin(), a1.end(), a2.begin(), a2.end());
  }
  const auto& base = first_is_base ? x1 : x2;
  const auto& other = first_is_base ? x2 : x1;

  std::vector<FeatureIndex> extra;
  std::set_difference(other.active().begin(), other.active().end(), base.active().begin(), base.active().end(),
                      std::back_inserter(extra));
  if (extra.empty()) return std::nullopt;
  const std::size_t shared = other.size() - extra.size();

  // Distances to both endpoints depend only on how many features are added.
  // Nested endpoints give exactly tied counts in real arithmetic; the
  // tolerance keeps rounding from deciding those ties.
  constexpr double tie_tolerance = 1e-12;
  std::size_t best_m = 0;
  double best = bridge_imbalance(base.size(), other.size(), shared, 0);
  for (std::size_t m = 1; m <= extra.size(); ++m) {
    const double imbalance = bridge_imbalance(base.size(), other.size(), shared, m);
    if (imbalance < best - tie_tolerance) {
      best = imbalance;
      best_m = m;
    }
  }

  BridgePoint out;
  out.base_is_first = first_is_base;
  out.added.assign(extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(best_m));
  std::vector<FeatureIndex> active;
  std::set_union(base.active().begin(), base.active().end(), out.added.begin(), out.added.end(),
                 std::back_inserter(active));
  out.vector = SparseBinaryVector(std::move(active));
  out.imbalance = best;
  return out;
}

SoftAssignment soft_posteriors(std::span<const SparseBinaryVector> points, const Partition& part, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("KDE bandwidth must be positive");
  if (points.size() != part.size()) throw std::invalid_argument("soft posteriors: partition size mismatch");
  const std::size_t k = part.cluster_count();
  auto scores = kernel_log_sums(points, part, h);
  const auto sizes = part.cluster_sizes();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) scores[i * k + c] -= std::log(static_cast<double>(sizes[c]));
  }
  return softmax_rows(points.size(), k, std::move(scores));
}

double auto_bandwidth(std::span<const SparseBinaryVector> points) {
  if (points.size() < 2) throw std::invalid_argument("bandwidth needs at least 2 points");
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) total += distance(points[i], points[j]);
  }
  const double pairs = static_cast<double>(points.size()) * static_cast<double>(points.size() - 1) / 2.0;
  return total / pairs;
}

AttackState::AttackState(EmbeddedDataset originals, AttackConfig cfg)
    : cfg_(cfg), working_(std::move(originals)), rng_(cfg.seed) {
  working_.validate();
  if (working_.size() < 2) throw std::invalid_argument("attack needs at least 2 samples");
  if (working_.original_count() != working_.size()) throw std::invalid_argument("attack input already contains poison");
  if (!(cfg_.cutoff >= 0.0)) throw std::invalid_argument("reference cutoff must be non-negative");
  if ((cfg_.kind == StrategyKind::fmeasure_best) && !working_.labels) {
    throw std::invalid_argument("fmeasure-best needs family labels");
  }

  for (std::size_t i = 0; i < working_.size(); ++i) {
    originals_.push_back(i);
    root_ids_.push_back(working_.vectors[i].origin_id().value_or("s" + std::to_string(i)));
    const auto active = working_.vectors[i].active();
    active_sets_.emplace(active.begin(), active.end());
  }

  reference_ = cut(single_linkage(working_), cfg_.cutoff);
  ++clustering_runs_;
  current_ = evaluate(nullptr);
  ++clustering_runs_;
  records_.push_back(record_for(current_, 0));

  if (cfg_.kind == StrategyKind::bridge_soft) {
    bandwidth_ = cfg_.bandwidth.automatic ? auto_bandwidth(working_.vectors) : cfg_.bandwidth.value;
    if (!(bandwidth_ > 0.0)) throw std::invalid_argument("KDE bandwidth must be positive, got " + format_real(bandwidth_));
  }
}

bool AttackState::is_duplicate(const SparseBinaryVector& v) const {
  const auto active = v.active();
  return active_sets_.count(std::vector<FeatureIndex>(active.begin(), active.end())) != 0;
}

ClusteringView AttackState::evaluate(const SparseBinaryVector* extra) const {
  const auto& vectors = working_.vectors;
  const std::size_t n = vectors.size() + (extra ? 1 : 0);
  const auto point = [&](std::size_t i) -> const SparseBinaryVector& { return i < vectors.size() ? vectors[i] : *extra; };

  ClusteringView view;
  view.dendrogram = single_linkage(n, [&](std::size_t a, std::size_t b) { return distance(point(a), point(b)); });
  if (cfg_.cutoff_mode == CutoffMode::worst_case) {
    auto worst = worst_case_cut(view.dendrogram, reference_, originals_);
    view.cutoff = worst.cutoff;
    view.working = cut_after(view.dendrogram, worst.merges_applied);
    view.originals = std::move(worst.partition);
    view.discordant = worst.discordant;
  } else {
    view.cutoff = cfg_.cutoff;
    view.working = cut(view.dendrogram, cfg_.cutoff);
    view.originals = restrict(view.working, originals_);
    view.discordant = discordant_pairs(reference_, view.originals);
  }
  view.objective = std::sqrt(2.0 * static_cast<double>(view.discordant));
  if (working_.labels) {
    view.quality = f_measure(view.originals, std::span(*working_.labels).first(originals_.size()));
  } else {
    view.quality = {nan_value, nan_value, nan_value};
  }
  return view;
}

MetricsRecord AttackState::record_for(const ClusteringView& view, std::size_t poison_count) const {
  MetricsRecord r;
  r.poison_count = poison_count;
  r.poison_fraction = static_cast<double>(poison_count) / static_cast<double>(originals_.size());
  r.objective_dc = view.objective;
  r.clusters = cfg_.count_all_clusters ? view.working.cluster_count() : view.originals.cluster_count();
  r.precision = view.quality.precision;
  r.recall = view.quality.recall;
  r.f_measure = view.quality.f;
  return r;
}

void AttackState::commit(const PoisonCandidate& candidate) {
  if (injected_count() >= cfg_.max_points) throw std::logic_error("attack budget exhausted");
  if (candidate.base_index >= working_.size()) throw std::invalid_argument("candidate base outside working data");
  const auto& base = working_.vectors[candidate.base_index];
  const auto active = candidate.vector.active();
  const bool superset = std::includes(active.begin(), active.end(), base.active().begin(), base.active().end());
  if (!superset || active.size() <= base.size()) {
    throw std::invalid_argument("candidate violates feature addition from its base");
  }
  if (is_duplicate(candidate.vector)) throw std::invalid_argument("candidate duplicates a working point");

  const std::string root = root_ids_[candidate.base_index];
  const std::size_t index = working_.size();
  working_.vectors.emplace_back(std::vector<FeatureIndex>(active.begin(), active.end()),
                                "poison-" + std::to_string(index - originals_.size() + 1));
  if (working_.labels) working_.labels->emplace_back();
  working_.poison_mask.push_back(true);
  root_ids_.push_back(root);
  active_sets_.emplace(active.begin(), active.end());

  current_ = evaluate(nullptr);
  ++clustering_runs_;
  records_.push_back(record_for(current_, injected_count()));
}

namespace {

std::optional<PoisonCandidate> random_candidate(AttackState& state) {
  const auto& working = state.working();
  const std::size_t originals = working.original_count();
  const std::size_t base_index = uniform_below(state.rng(), originals);
  const auto& base = working.vectors[base_index];
  const std::size_t d = working.space->dimension();
  if (base.size() >= d) return std::nullopt;

  std::vector<FeatureIndex> unset;
  for (FeatureIndex f = 0; f < d; ++f) {
    if (!base.contains(f)) unset.push_back(f);
  }
  const std::size_t count = uniform_between(state.rng(), 1, unset.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + uniform_below(state.rng(), unset.size() - i);
    std::swap(unset[i], unset[j]);
  }
  PoisonCandidate c;
  c.base_index = base_index;
  c.added.assign(unset.begin(), unset.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(c.added.begin(), c.added.end());
  std::vector<FeatureIndex> active;
  std::set_union(base.active().begin(), base.active().end(), c.added.begin(), c.added.end(),
                 std::back_inserter(active));
  c.vector = SparseBinaryVector(std::move(active));
  return c;
}

bool same_active(const SparseBinaryVector& a, const SparseBinaryVector& b) { return a == b; }

// Admissible random candidates, at most `wanted`, within the attempt budget.
std::vector<PoisonCandidate> random_candidates(AttackState& state, std::size_t wanted, StepLog& log) {
  std::vector<PoisonCandidate> out;
  for (std::size_t attempt = 0; attempt < state.config().max_random_attempts && out.size() < wanted; ++attempt) {
    auto c = random_candidate(state);
    if (!c) {
      ++log.skipped_inadmissible;
      continue;
    }
    const bool repeated = std::any_of(out.begin(), out.end(), [&](const auto& o) { return same_active(o.vector, c->vector); });
    if (repeated || state.is_duplicate(c->vector)) {
      ++log.skipped_duplicates;
      continue;
    }
    out.push_back(std::move(*c));
  }
  return out;
}

// Bridge candidates with the endpoint pair each one was built from.
std::vector<PoisonCandidate> bridge_candidates(const AttackState& state, StepLog& log,
                                               std::vector<std::pair<std::size_t, std::size_t>>& links) {
  const auto& view = state.current();
  const auto& vectors = state.working().vectors;
  std::vector<PoisonCandidate> out;
  for (const auto& [i, j] : candidate_links(view.dendrogram, view.working.cluster_count())) {
    auto bridge = bridge_point(vectors[i], vectors[j]);
    if (!bridge) {
      ++log.skipped_inadmissible;
      continue;
    }
    PoisonCandidate c{std::move(bridge->vector), bridge->base_is_first ? i : j, std::move(bridge->added)};
    const bool repeated = std::any_of(out.begin(), out.end(), [&](const auto& o) { return same_active(o.vector, c.vector); });
    if (c.added.empty() || repeated || state.is_duplicate(c.vector)) {
      ++log.skipped_duplicates;
      continue;
    }
    out.push_back(std::move(c));
    links.emplace_back(i, j);
  }
  return out;
}

// For each candidate link, the pair of original-space clusters it would merge
// (same value twice when an endpoint's cluster holds no original sample).
std::vector<std::pair<ClusterId, ClusterId>> merged_clusters(const AttackState& state,
                                                             std::span<const PoisonCandidate> candidates,
                                                             std::span<const std::pair<std::size_t, std::size_t>> links) {
  const auto& view = state.current();
  const std::size_t originals = view.originals.size();
  constexpr ClusterId none = std::numeric_limits<ClusterId>::max();
  std::vector<ClusterId> to_original(view.working.cluster_count(), none);
  for (std::size_t o = 0; o < originals; ++o) to_original[view.working[o]] = view.originals[o];

  std::vector<std::pair<ClusterId, ClusterId>> out;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto a = to_original[view.working[links[c].first]];
    const auto b = to_original[view.working[links[c].second]];
    if (a == none || b == none) {
      const auto keep = a == none ? b : a;
      out.emplace_back(keep, keep);
    } else {
      out.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  return out;
}

Partition merge_estimate(const Partition& current, ClusterId a, ClusterId b) {
  std::vector<ClusterId> labels(current.assignment().begin(), current.assignment().end());
  for (auto& l : labels) {
    if (l == b) l = a;
  }
  return Partition::from_labels<ClusterId>(labels);
}

// Index of the best score; ties go to fewer clusters, then to a uniform draw.
std::size_t select_best(std::span<const CandidateScore> scores, bool maximize, Rng& rng) {
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (tied.empty()) {
      tied.push_back(i);
      continue;
    }
    const auto& best = scores[tied.front()];
    const auto& s = scores[i];
    const bool better = maximize ? s.score > best.score : s.score < best.score;
    if (better || (s.score == best.score && s.clusters < best.clusters)) {
      tied.assign(1, i);
    } else if (s.score == best.score && s.clusters == best.clusters) {
      tied.push_back(i);
    }
  }
  if (tied.size() == 1) return tied.front();
  return tied[uniform_below(rng, tied.size())];
}

}  // namespace

StepResult strategy_step(AttackState& state, StrategyKind kind) {
  StepResult result;
  result.log.step = state.injected_count() + 1;
  const auto& view = state.current();
  const std::size_t k = view.working.cluster_count();

  std::vector<PoisonCandidate> candidates;
  std::vector<std::pair<std::size_t, std::size_t>> links;
  switch (kind) {
    case StrategyKind::random:
      candidates = random_candidates(state, 1, result.log);
      break;
    case StrategyKind::random_best:
      candidates = random_candidates(state, std::max<std::size_t>(k, 2) - 1, result.log);
      break;
    case StrategyKind::bridge_best:
    case StrategyKind::bridge_hard:
    case StrategyKind::bridge_soft:
    case StrategyKind::fmeasure_best:
      if (k < 2) {
        result.stop_reason = "working data forms a single cluster";
        return result;
      }
      candidates = bridge_candidates(state, result.log, links);
      break;
  }
  if (candidates.empty()) {
    result.stop_reason = kind == StrategyKind::random || kind == StrategyKind::random_best
                             ? "no admissible random candidate"
                             : "no admissible bridge candidate";
    return result;
  }

  std::vector<CandidateScore> scores(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    scores[c].base_index = candidates[c].base_index;
    scores[c].base_id = state.root_id(candidates[c].base_index);
    scores[c].added = candidates[c].added;
    scores[c].score = nan_value;
  }

  bool maximize = true;
  switch (kind) {
    case StrategyKind::random:
      break;
    case StrategyKind::random_best:
    case StrategyKind::bridge_best:
    case StrategyKind::fmeasure_best: {
      const bool by_f = kind == StrategyKind::fmeasure_best;
      maximize = !by_f;
      const AttackState& snapshot = state;
      parallel_for(candidates.size(), state.config().jobs, [&](std::size_t c) {
        const auto evaluated = snapshot.evaluate(&candidates[c].vector);
        const auto record = snapshot.record_for(evaluated, snapshot.injected_count() + 1);
        scores[c].score = by_f ? evaluated.quality.f : evaluated.objective;
        scores[c].clusters = record.clusters;
      });
      state.count_clusterings(candidates.size());
      break;
    }
    case StrategyKind::bridge_hard: {
      const auto merges = merged_clusters(state, candidates, links);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto estimate = merge_estimate(view.originals, merges[c].first, merges[c].second);
        scores[c].score = clustering_distance(state.reference(), estimate);
        scores[c].clusters = estimate.cluster_count();
      }
      break;
    }
    case StrategyKind::bridge_soft: {
      const auto merges = merged_clusters(state, candidates, links);
      const std::size_t n = view.originals.size();
      const std::size_t kc = view.originals.cluster_count();
      const auto originals = std::span(state.working().vectors).first(n);
      const auto log_sums = kernel_log_sums(originals, view.originals, state.bandwidth());
      const auto sizes = view.originals.cluster_sizes();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto [a, b] = merges[c];
        // Column layout: every cluster except b; a absorbs b when they differ.
        std::vector<std::size_t> column_of(kc);
        std::size_t cols = 0;
        for (std::size_t q = 0; q < kc; ++q) {
          if (a != b && q == b) continue;
          column_of[q] = cols++;
        }
        if (a != b) column_of[b] = column_of[a];
        std::vector<double> column_size(cols, 0.0);
        for (std::size_t q = 0; q < kc; ++q) column_size[column_of[q]] += static_cast<double>(sizes[q]);

        std::vector<double> scores_matrix(n * cols, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t q = 0; q < kc; ++q) {
            double& cell = scores_matrix[i * cols + column_of[q]];
            cell = log_add(cell, log_sums[i * kc + q]);
          }
          for (std::size_t col = 0; col < cols; ++col) scores_matrix[i * cols + col] -= std::log(column_size[col]);
        }
        const auto soft = softmax_rows(n, cols, std::move(scores_matrix));
        scores[c].score = clustering_distance_soft(state.reference(), soft);
        scores[c].clusters = cols;
      }
      break;
    }
  }

  const std::size_t chosen = kind == StrategyKind::random ? 0 : select_best(scores, maximize, state.rng());
  result.log.candidates = std::move(scores);
  result.log.chosen = chosen;
  result.chosen = std::move(candidates[chosen]);
  return result;
}

AttackTrace run_attack(const EmbeddedDataset& s, const AttackConfig& cfg) {
  if (cfg.max_points == 0) throw std::invalid_argument("attack needs a positive injection budget");
  AttackState state(s, cfg);

  AttackTrace trace;
  trace.kind = cfg.kind;
  trace.cutoff_mode = cfg.cutoff_mode;
  trace.reference_cutoff = cfg.cutoff;
  trace.bandwidth = state.bandwidth();
  while (state.injected_count() < cfg.max_points) {
    auto step = strategy_step(state, cfg.kind);
    trace.steps.push_back(step.log);
    if (!step.chosen) {
      trace.terminated_early = true;
      trace.termination_reason = step.stop_reason;
      break;
    }
    trace.injected_base_ids.push_back(state.root_id(step.chosen->base_index));
    state.commit(*step.chosen);
    trace.injected.push_back(std::move(*step.chosen));
  }
  trace.records = state.records();
  trace.clustering_runs = state.clustering_runs();
  return trace;
}

void write_attack_log_json(const AttackTrace& trace, std::ostream& out) {
  nlohmann::json j;
  j["strategy"] = to_string(trace.kind);
  j["cutoff_mode"] = to_string(trace.cutoff_mode);
  j["reference_cutoff"] = trace.reference_cutoff;
  j["bandwidth"] = trace.bandwidth;
  j["terminated_early"] = trace.terminated_early;
  j["termination_reason"] = trace.termination_reason;
  j["clustering_runs"] = trace.clustering_runs;
  auto& steps = j["steps"] = nlohmann::json::array();
  for (const auto& step : trace.steps) {
    nlohmann::json s;
    s["step"] = step.step;
    s["skipped_duplicates"] = step.skipped_duplicates;
    s["skipped_inadmissible"] = step.skipped_inadmissible;
    auto& cands = s["candidates"] = nlohmann::json::array();
    for (const auto& c : step.candidates) {
      cands.push_back({{"base_id", c.base_id}, {"added", c.added}, {"score", c.score}, {"clusters", c.clusters}});
    }
    if (step.chosen) {
      const auto& c = step.candidates[*step.chosen];
      s["chosen"] = *step.chosen;
      s["base_id"] = c.base_id;
      s["added"] = c.added;
    } else {
      s["chosen"] = nullptr;
    }
    steps.push_back(std::move(s));
  }
  out << j.dump(2) << '\n';
}

}  // namespace malpoison
