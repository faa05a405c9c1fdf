#include "malpoison/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace malpoison {

FeatureSpace::FeatureSpace(std::size_t q, std::vector<QGram> grams) : q_(q), grams_(std::move(grams)) {
  if (q_ == 0) throw DataError("q-gram length must be positive");
  std::sort(grams_.begin(), grams_.end());
  grams_.erase(std::unique(grams_.begin(), grams_.end()), grams_.end());
  for (std::size_t i = 0; i < grams_.size(); ++i) {
    if (grams_[i].size() != q_) throw DataError("q-gram of wrong length in feature space");
    index_.emplace(grams_[i], static_cast<FeatureIndex>(i));
  }
}

std::optional<FeatureIndex> FeatureSpace::index_of(const QGram& gram) const {
  auto it = index_.find(gram);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseBinaryVector::SparseBinaryVector(std::vector<FeatureIndex> active, std::optional<std::string> origin_id)
    : active_(std::move(active)), origin_id_(std::move(origin_id)) {
  if (active_.empty()) throw DataError("sparse binary vector must have at least one active feature");
  for (std::size_t i = 1; i < active_.size(); ++i) {
    if (active_[i - 1] >= active_[i]) throw DataError("active feature indices must be strictly increasing");
  }
}

bool SparseBinaryVector::contains(FeatureIndex index) const {
  return std::binary_search(active_.begin(), active_.end(), index);
}

double SparseBinaryVector::coordinate() const { return 1.0 / std::sqrt(static_cast<double>(active_.size())); }

std::vector<double> SparseBinaryVector::to_dense(std::size_t dimension) const {
  std::vector<double> dense(dimension, 0.0);
  const double value = coordinate();
  for (auto i : active_) dense.at(i) = value;
  return dense;
}

std::size_t EmbeddedDataset::original_count() const {
  return static_cast<std::size_t>(std::count(poison_mask.begin(), poison_mask.end(), false));
}

std::vector<std::size_t> EmbeddedDataset::original_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < poison_mask.size(); ++i) {
    if (!poison_mask[i]) out.push_back(i);
  }
  return out;
}

void EmbeddedDataset::validate() const {
  if (!space) throw DataError("embedded dataset has no feature space");
  if (poison_mask.size() != vectors.size()) throw DataError("poison mask length differs from vector count");
  if (labels && labels->size() != vectors.size()) throw DataError("label count differs from vector count");
  for (const auto& v : vectors) {
    if (v.active().back() >= space->dimension()) throw DataError("feature index outside the feature space");
  }
}

namespace {

template <typename Fn>
void for_each_qgram(const Report& report, std::size_t q, Fn&& fn) {
  if (report.events.size() < q) {
    throw DataError("report '" + report.id + "' has " + std::to_string(report.events.size()) +
                    " events, fewer than q=" + std::to_string(q));
  }
  for (std::size_t i = 0; i + q <= report.events.size(); ++i) {
    fn(QGram(report.events.begin() + static_cast<std::ptrdiff_t>(i),
             report.events.begin() + static_cast<std::ptrdiff_t>(i + q)));
  }
}

}  // namespace

FeatureSpace build_feature_space(const ReportSet& reports, std::size_t q) {
  if (q == 0) throw DataError("q-gram length must be positive");
  std::set<QGram> grams;
  for (const auto& r : reports.reports()) {
    for_each_qgram(r, q, [&](QGram gram) { grams.insert(std::move(gram)); });
  }
  return FeatureSpace(q, std::vector<QGram>(grams.begin(), grams.end()));
}

SparseBinaryVector embed(const Report& report, const FeatureSpace& space) {
  std::vector<FeatureIndex> active;
  for_each_qgram(report, space.q(), [&](const QGram& gram) {
    if (auto index = space.index_of(gram)) active.push_back(*index);
  });
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  if (active.empty()) throw DataError("report '" + report.id + "' has no q-grams in the feature space");
  return SparseBinaryVector(std::move(active), report.id);
}

EmbeddedDataset embed_all(const ReportSet& reports, std::shared_ptr<const FeatureSpace> space) {
  EmbeddedDataset data;
  data.space = std::move(space);
  data.vectors.reserve(reports.size());
  for (const auto& r : reports.reports()) data.vectors.push_back(embed(r, *data.space));
  if (reports.labeled()) {
    data.labels.emplace();
    for (const auto& r : reports.reports()) data.labels->push_back(*r.family);
  }
  data.poison_mask.assign(reports.size(), false);
  return data;
}

std::size_t intersection_size(std::span<const FeatureIndex> a, std::span<const FeatureIndex> b) {
  std::size_t shared = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  return shared;
}

double unit_binary_distance(std::size_t shared, std::size_t na, std::size_t nb) {
  const double cosine = static_cast<double>(shared) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * cosine));
}

double distance(const SparseBinaryVector& a, const SparseBinaryVector& b) {
  return unit_binary_distance(intersection_size(a.active(), b.active()), a.size(), b.size());
}

void write_vector_dump(const EmbeddedDataset& data, std::ostream& out) {
  for (std::size_t i = 0; i < data.vectors.size(); ++i) {
    const auto& v = data.vectors[i];
    out << v.origin_id().value_or("v" + std::to_string(i)) << '\t';
    for (std::size_t j = 0; j < v.size(); ++j) out << (j ? "," : "") << v.active()[j];
    out << '\n';
  }
}

}  // namespace malpoison
