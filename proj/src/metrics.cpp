#include "malpoison/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace malpoison {

Partition Partition::singletons(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return from_labels(std::span<const std::size_t>(ids));
}

std::vector<std::size_t> Partition::cluster_sizes() const {
  std::vector<std::size_t> sizes(k_, 0);
  for (auto c : assignment_) ++sizes[c];
  return sizes;
}

SoftAssignment::SoftAssignment(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) throw std::invalid_argument("soft assignment: shape mismatch");
  for (std::size_t i = 0; i < rows_; ++i) {
    double sum = 0.0;
    for (double v : row(i)) {
      if (!(v >= 0.0)) throw std::invalid_argument("soft assignment: negative or NaN entry in row " + std::to_string(i));
      sum += v;
    }
    if (std::abs(sum - 1.0) > row_tolerance) {
      throw std::invalid_argument("soft assignment: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

SoftAssignment SoftAssignment::one_hot(const Partition& part) {
  std::vector<double> values(part.size() * part.cluster_count(), 0.0);
  for (std::size_t i = 0; i < part.size(); ++i) values[i * part.cluster_count() + part[i]] = 1.0;
  return SoftAssignment(part.size(), part.cluster_count(), std::move(values));
}

namespace {

std::uint64_t pairs_within(std::uint64_t size) { return size * (size - (size > 0 ? 1 : 0)) / 2; }

}  // namespace

std::uint64_t discordant_pairs(const Partition& y, const Partition& yp) {
  if (y.size() != yp.size()) {
    throw std::invalid_argument("clustering distance: partitions over " + std::to_string(y.size()) + " and " +
                                std::to_string(yp.size()) + " samples");
  }
  std::uint64_t together_y = 0;
  for (auto s : y.cluster_sizes()) together_y += pairs_within(s);
  std::uint64_t together_yp = 0;
  for (auto s : yp.cluster_sizes()) together_yp += pairs_within(s);

  // Sparse contingency table: sort the (cluster, cluster') keys and count runs.
  std::vector<std::uint64_t> keys(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) keys[i] = static_cast<std::uint64_t>(y[i]) * yp.cluster_count() + yp[i];
  std::sort(keys.begin(), keys.end());
  std::uint64_t together_both = 0;
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    together_both += pairs_within(j - i);
    i = j;
  }
  return together_y + together_yp - 2 * together_both;
}

double clustering_distance(const Partition& y, const Partition& yp) {
  return std::sqrt(2.0 * static_cast<double>(discordant_pairs(y, yp)));
}

double clustering_distance_soft(const Partition& y, const SoftAssignment& yp) {
  if (y.size() != yp.rows()) {
    throw std::invalid_argument("soft clustering distance: " + std::to_string(y.size()) + " samples vs " +
                                std::to_string(yp.rows()) + " rows");
  }
  const std::size_t n = y.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = yp.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto rj = yp.row(j);
      double dot = 0.0;
      for (std::size_t c = 0; c < yp.cols(); ++c) dot += ri[c] * rj[c];
      const double diff = (y[i] == y[j] ? 1.0 : 0.0) - dot;
      total += diff * diff;
    }
  }
  return std::sqrt(total);
}

FMeasure f_measure(const Partition& part, std::span<const std::string> labels) {
  if (labels.size() != part.size()) {
    throw std::invalid_argument("f-measure: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(part.size()) + " samples");
  }
  const std::size_t n = part.size();
  if (n == 0) return {};
  const Partition families = Partition::from_labels<std::string>(labels);
  const std::size_t kf = families.cluster_count();
  const std::size_t kc = part.cluster_count();

  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = static_cast<std::uint64_t>(families[i]) * kc + part[i];
  std::sort(keys.begin(), keys.end());
  std::vector<std::size_t> best_family_per_cluster(kc, 0);
  std::vector<std::size_t> best_cluster_per_family(kf, 0);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && keys[j] == keys[i]) ++j;
    const std::size_t count = j - i;
    const auto family = keys[i] / kc;
    const auto cluster = keys[i] % kc;
    best_family_per_cluster[cluster] = std::max(best_family_per_cluster[cluster], count);
    best_cluster_per_family[family] = std::max(best_cluster_per_family[family], count);
    i = j;
  }
  std::size_t precision_sum = 0;
  for (auto c : best_family_per_cluster) precision_sum += c;
  std::size_t recall_sum = 0;
  for (auto c : best_cluster_per_family) recall_sum += c;

  FMeasure out;
  out.precision = static_cast<double>(precision_sum) / static_cast<double>(n);
  out.recall = static_cast<double>(recall_sum) / static_cast<double>(n);
  const double denom = out.precision + out.recall;
  out.f = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

Partition restrict(const Partition& part, std::span<const std::size_t> original_indices) {
  std::vector<bool> used(part.size(), false);
  std::vector<ClusterId> kept;
  kept.reserve(original_indices.size());
  for (auto i : original_indices) {
    if (i >= part.size()) {
      throw std::invalid_argument("restrict: index " + std::to_string(i) + " outside partition of " +
                                  std::to_string(part.size()));
    }
    if (used[i]) throw std::invalid_argument("restrict: index " + std::to_string(i) + " listed twice");
    used[i] = true;
    kept.push_back(part[i]);
  }
  return Partition::from_labels<ClusterId>(kept);
}

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

void write_metrics_csv(std::span<const MetricsRecord> records, std::ostream& out) {
  out << metrics_csv_header << '\n';
  for (const auto& r : records) {
    out << r.poison_count << ',' << format_real(r.poison_fraction) << ',' << format_real(r.objective_dc) << ','
        << r.clusters << ',' << format_real(r.precision) << ',' << format_real(r.recall) << ','
        << format_real(r.f_measure) << '\n';
  }
}

}  // namespace malpoison
