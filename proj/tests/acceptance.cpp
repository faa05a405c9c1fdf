// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "malpoison/attack.hpp"
#include "malpoison/harness.hpp"
#include "oracles.hpp"

using namespace malpoison;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << what << " (" << detail << ")" << std::endl;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::setprecision(digits) << std::fixed << v;
  return out.str();
}

Partition random_partition(std::mt19937_64& rng, std::size_t n) {
  const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
  std::vector<std::size_t> l(n);
  for (auto& x : l) x = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
  return Partition::from_labels(std::span<const std::size_t>(l));
}

void distance_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
    const auto a = random_partition(rng, n);
    // Half the pairs are small perturbations so both near and far pairs occur.
    Partition b = random_partition(rng, n);
    if (trial % 2 == 0) {
      std::vector<std::size_t> l(a.assignment().begin(), a.assignment().end());
      l[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = n;
      b = Partition::from_labels(std::span<const std::size_t>(l));
    }
    const auto expected = oracle::brute_discordant(a, b);
    if (discordant_pairs(a, b) != expected ||
        clustering_distance(a, b) != std::sqrt(2.0 * static_cast<double>(expected))) {
      ++mismatches;
    }
  }
  const double elapsed = seconds_since(start);
  report(1, mismatches == 0 && elapsed < 5.0, "clustering distance equals brute-force pair enumeration",
         "200 pairs, " + std::to_string(mismatches) + " mismatches, " + fixed(elapsed, 2) + " s, limit 5 s");
}

void linkage_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1002);
  std::size_t mismatches = 0;
  std::size_t cutoffs = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(4, 40)(rng);
    std::vector<SparseBinaryVector> points;
    for (std::size_t i = 0; i < n; ++i) points.emplace_back(fixture::random_active(rng, d, 0.25));
    const auto dend = single_linkage(points);
    const auto dist = oracle::distance_matrix(points);
    sweep_cuts(dend, [&](const CutCandidate& candidate, const Partition& part) {
      ++cutoffs;
      if (part != oracle::naive_single_linkage_cut(dist, candidate.cutoff)) ++mismatches;
    });
  }
  const double elapsed = seconds_since(start);
  report(2, mismatches == 0 && elapsed < 30.0, "single-linkage partitions equal the naive agglomerative oracle",
         "50 datasets, " + std::to_string(cutoffs) + " cutoffs, " + std::to_string(mismatches) + " mismatches, " +
             fixed(elapsed, 2) + " s, limit 30 s");
}

void ideal_bridge() {
  const auto b = bridge_point(SparseBinaryVector(std::vector<FeatureIndex>{1}), SparseBinaryVector(std::vector<FeatureIndex>{0}));
  double error = 1.0;
  if (b) {
    const auto dense = b->vector.to_dense(2);
    const double target = 1.0 / std::sqrt(2.0);
    error = std::max(std::abs(dense[0] - target), std::abs(dense[1] - target));
  }
  report(3, b.has_value() && error <= 1e-12, "bridge of (0,1) and (1,0) is (1/sqrt2, 1/sqrt2)",
         "max coordinate error " + format_real(error) + ", tolerance 1e-12");
}

void bridge_optimality() {
  std::mt19937_64 rng(1004);
  std::size_t compared = 0;
  std::size_t mismatches = 0;
  std::size_t skipped = 0;
  while (compared < 500) {
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 40)(rng);
    const double density = std::uniform_real_distribution<double>(0.05, 0.7)(rng);
    const SparseBinaryVector a(fixture::random_active(rng, d, density));
    SparseBinaryVector c(fixture::random_active(rng, d, density));
    if (compared % 5 == 0) {
      // Nested endpoints exercise the interior optimum.
      std::vector<FeatureIndex> sup(a.active().begin(), a.active().end());
      for (auto f : c.active()) sup.push_back(f);
      std::sort(sup.begin(), sup.end());
      sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
      c = SparseBinaryVector(sup);
    }
    const auto b = bridge_point(a, c);
    if (!b) {
      ++skipped;
      continue;
    }
    const auto& base = b->base_is_first ? a : c;
    const auto& other = b->base_is_first ? c : a;
    const auto o = oracle::bridge_enumerate(base, other);
    if (b->added.size() != o.best_m) ++mismatches;
    ++compared;
  }
  report(4, mismatches == 0, "bridge count minimizes the equidistance imbalance over all m",
         "500 pairs, " + std::to_string(mismatches) + " mismatches, " + std::to_string(skipped) +
             " pairs without a bridge skipped");
}

struct ConstraintTally {
  std::size_t traces = 0;
  std::size_t injections = 0;
  std::size_t violations = 0;
};

void check_trace(const EmbeddedDataset& s, const AttackTrace& trace, std::size_t max_points, ConstraintTally& tally) {
  ++tally.traces;
  if (trace.injected.size() > max_points) ++tally.violations;
  std::vector<SparseBinaryVector> working = s.vectors;
  for (const auto& p : trace.injected) {
    ++tally.injections;
    if (p.base_index >= working.size()) {
      ++tally.violations;
      continue;
    }
    const auto base = working[p.base_index].active();
    const auto active = p.vector.active();
    const bool superset = std::includes(active.begin(), active.end(), base.begin(), base.end());
    if (!superset || active.size() <= base.size()) ++tally.violations;
    double norm = 0.0;
    for (double x : p.vector.to_dense(s.space->dimension())) norm += x * x;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-12) ++tally.violations;
    working.push_back(p.vector);
  }
}

ExperimentConfig desk_scale(CutoffMode mode) {
  ExperimentConfig cfg;
  cfg.source.synth = SynthConfig{};
  cfg.strategies.assign(std::begin(all_strategies), std::end(all_strategies));
  cfg.max_fraction = 0.05;
  cfg.repetitions = 5;
  cfg.cutoff_mode = mode;
  cfg.master_seed = 2024;
  return cfg;
}

const StrategyAggregate& find(const ExperimentResult& res, StrategyKind kind) {
  for (const auto& agg : res.aggregates) {
    if (agg.kind == kind) return agg;
  }
  throw std::logic_error("strategy missing from result");
}

void attack_criteria() {
  const auto start = Clock::now();
  const auto cfg = desk_scale(CutoffMode::fixed);
  const auto res = run_experiment(cfg);
  const double elapsed = seconds_since(start);
  const auto worst = run_experiment(desk_scale(CutoffMode::worst_case));

  // Criterion 5 over every trace of both runs, replaying each split.
  ConstraintTally tally;
  const auto reports = synth_generate(*cfg.source.synth);
  auto space = std::make_shared<const FeatureSpace>(build_feature_space(reports, 1));
  for (const auto* run : {&res, &worst}) {
    for (const auto& rep : run->repetitions) {
      const auto parts = split(reports, derive_seed(rep.seed, 0), cfg.stratified);
      const auto s = embed_all(parts.evaluation, space);
      for (const auto& trace : rep.traces) check_trace(s, trace, run->injections, tally);
    }
  }
  report(5, tally.violations == 0 && tally.traces == 60,
         "injected points are strict supersets of their base, unit norm, within budget",
         std::to_string(tally.traces) + " traces, " + std::to_string(tally.injections) + " injections, " +
             std::to_string(tally.violations) + " violations");

  const auto& random = find(res, StrategyKind::random);
  const auto& best = find(res, StrategyKind::bridge_best);
  const auto& hard = find(res, StrategyKind::bridge_hard);
  const double best_final = best.objective.mean.back();
  const double objective_tolerance = 0.05 * best_final;
  const double random_shift = std::abs(random.objective.mean.back() - random.objective.mean.front());
  const double f0 = random.f_measure.mean.front();
  const double f_shift = std::abs(random.f_measure.mean.back() - f0);
  const bool a = random_shift <= objective_tolerance && f_shift <= 0.05 * f0;
  const double k0 = best.clusters.mean.front();
  const double k_final = best.clusters.mean.back();
  const bool b = k_final <= 0.5 * k0;
  const bool c = best_final >= hard.objective.mean.back() && best_final >= random.objective.mean.back();
  const std::size_t s_size = res.repetitions.front().evaluation_size;
  report(6, a && b && c && elapsed < 600.0,
         "desk-scale attack comparison at 5% poisoning, calibrated cut",
         "|S|=" + std::to_string(s_size) + ", " + std::to_string(res.injections) + " injections, 5 seeds; (a) random " +
             "objective shift " + fixed(random_shift) + " <= " + fixed(objective_tolerance) + ", F shift " +
             fixed(f_shift) + " <= " + fixed(0.05 * f0) + (a ? " ok" : " no") + "; (b) bridge-best clusters " +
             fixed(k0, 1) + " -> " + fixed(k_final, 1) + (b ? " ok" : " no") + "; (c) objective bridge-best " +
             fixed(best_final) + ", bridge-hard " + fixed(hard.objective.mean.back()) + ", random " +
             fixed(random.objective.mean.back()) + (c ? " ok" : " no") + "; " + fixed(elapsed, 1) + " s, limit 600 s");

  const auto& wbest = find(worst, StrategyKind::bridge_best);
  const auto& wrandom = find(worst, StrategyKind::random);
  std::cout << "info  worst-case cut, same data: bridge-best objective " << fixed(wbest.objective.mean.back())
            << ", clusters " << fixed(wbest.clusters.mean.front(), 1) << " -> " << fixed(wbest.clusters.mean.back(), 1)
            << ", F " << fixed(wbest.f_measure.mean.back()) << "; random objective "
            << fixed(wrandom.objective.mean.back()) << std::endl;

}

void f_measure_values() {
  const std::vector<std::string> perfect_labels{"a", "a", "b", "b", "c"};
  const std::vector<std::size_t> perfect{0, 0, 1, 1, 2};
  const double f_perfect = f_measure(Partition::from_labels(std::span<const std::size_t>(perfect)), perfect_labels).f;
  const std::vector<std::string> merged_labels{"a", "a", "a", "b"};
  const std::vector<std::size_t> merged{0, 0, 0, 0};
  const double f_merged = f_measure(Partition::from_labels(std::span<const std::size_t>(merged)), merged_labels).f;
  report(7, f_perfect == 1.0 && std::abs(f_merged - 6.0 / 7.0) <= 1e-12, "F-measure hand values",
         "perfect " + format_real(f_perfect) + ", merged (3,1) " + format_real(f_merged));
}

void determinism() {
  const auto cfg = desk_scale(CutoffMode::fixed);
  const auto dir_a = fixture::temp_dir("acceptance-a");
  const auto dir_b = fixture::temp_dir("acceptance-b");
  write_results(run_experiment(cfg), dir_a);
  write_results(run_experiment(cfg), dir_b);
  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
  };
  const auto manifest_a = slurp(dir_a / "manifest.txt");
  const auto manifest_b = slurp(dir_b / "manifest.txt");
  const std::size_t files = static_cast<std::size_t>(std::count(manifest_a.begin(), manifest_a.end(), '\n'));
  report(8, !manifest_a.empty() && manifest_a == manifest_b, "identical configurations give identical manifests",
         std::to_string(files) + " hashed files");
}

void soft_checks() {
  std::mt19937_64 rng(1009);
  std::size_t rows = 0;
  double worst_sum = 0.0;
  double worst_uniform = 0.0;
  std::size_t not_one_hot = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 40)(rng);
    std::vector<SparseBinaryVector> points;
    for (std::size_t i = 0; i < n; ++i) points.emplace_back(fixture::random_active(rng, 20, 0.3));
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    std::vector<std::size_t> l(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = i % k;
    const auto part = Partition::from_labels(std::span<const std::size_t>(l));
    for (double h : {1e-6, 0.05, 0.2, 0.5, 1.0, 10.0, 1e3}) {
      const auto p = soft_posteriors(points, part, h);
      for (std::size_t i = 0; i < p.rows(); ++i, ++rows) {
        double sum = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) {
          sum += p(i, c);
          if (h == 1e3) worst_uniform = std::max(worst_uniform, std::abs(p(i, c) - 1.0 / static_cast<double>(k)));
          if (h == 1e-6 && p(i, c) != (c == part[i] ? 1.0 : 0.0)) ++not_one_hot;
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      }
    }
  }
  report(9, worst_sum <= 1e-9 && worst_uniform <= 1e-3 && not_one_hot == 0,
         "soft assignments are row-stochastic with the expected bandwidth limits",
         std::to_string(rows) + " rows, max row-sum error " + format_real(worst_sum) + ", h=1e3 max deviation from 1/k " +
             format_real(worst_uniform) + ", h=1e-6 non one-hot entries " + std::to_string(not_one_hot));
}

}  // namespace

int main() {
  try {
    distance_oracle();
    linkage_oracle();
    ideal_bridge();
    bridge_optimality();
    attack_criteria();  // criteria 5 and 6
    f_measure_values();
    determinism();
    soft_checks();
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance suite aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
