#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "malpoison/dataset.hpp"

namespace malpoison {

using FeatureIndex = std::uint32_t;
using QGram = std::vector<std::string>;

/// Bijection between the q-grams observed at construction and [0, d).
/// Indices follow lexicographic q-gram order.
class FeatureSpace {
 public:
  FeatureSpace(std::size_t q, std::vector<QGram> grams);

  std::size_t q() const { return q_; }
  std::size_t dimension() const { return grams_.size(); }
  std::optional<FeatureIndex> index_of(const QGram& gram) const;
  const QGram& gram(FeatureIndex index) const { return grams_.at(index); }

 private:
  std::size_t q_;
  std::vector<QGram> grams_;
  std::map<QGram, FeatureIndex> index_;
};

/// Binary feature vector projected onto the unit sphere. Only the active
/// coordinates are stored; each has value 1/sqrt(size()).
class SparseBinaryVector {
 public:
  SparseBinaryVector() = default;
  /// `active` must be non-empty and strictly increasing.
  explicit SparseBinaryVector(std::vector<FeatureIndex> active, std::optional<std::string> origin_id = {});

  std::span<const FeatureIndex> active() const { return active_; }
  std::size_t size() const { return active_.size(); }
  bool contains(FeatureIndex index) const;
  double coordinate() const;
  const std::optional<std::string>& origin_id() const { return origin_id_; }

  /// Dense unit-norm representation over `dimension` coordinates.
  std::vector<double> to_dense(std::size_t dimension) const;

  friend bool operator==(const SparseBinaryVector& a, const SparseBinaryVector& b) {
    return a.active_ == b.active_;
  }

 private:
  std::vector<FeatureIndex> active_;
  std::optional<std::string> origin_id_;
};

/// Embedded reports plus the poison bookkeeping used by the attack loop.
struct EmbeddedDataset {
  std::shared_ptr<const FeatureSpace> space;
  std::vector<SparseBinaryVector> vectors;
  std::optional<std::vector<std::string>> labels;
  std::vector<bool> poison_mask;

  std::size_t size() const { return vectors.size(); }
  std::size_t original_count() const;
  std::vector<std::size_t> original_indices() const;
  void validate() const;
};

FeatureSpace build_feature_space(const ReportSet& reports, std::size_t q);

SparseBinaryVector embed(const Report& report, const FeatureSpace& space);

/// Embeds every report; labels are carried over when the set is labeled.
EmbeddedDataset embed_all(const ReportSet& reports, std::shared_ptr<const FeatureSpace> space);

/// Number of shared active indices.
std::size_t intersection_size(std::span<const FeatureIndex> a, std::span<const FeatureIndex> b);

/// Euclidean distance between two unit-normalized binary vectors with
/// `na` and `nb` active features of which `shared` coincide.
double unit_binary_distance(std::size_t shared, std::size_t na, std::size_t nb);

double distance(const SparseBinaryVector& a, const SparseBinaryVector& b);

/// Writes "id<TAB>idx1,idx2,..." per vector.
void write_vector_dump(const EmbeddedDataset& data, std::ostream& out);

}  // namespace malpoison
