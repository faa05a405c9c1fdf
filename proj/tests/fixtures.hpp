#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "malpoison/dataset.hpp"
#include "malpoison/embedding.hpp"

namespace fixture {

using malpoison::FeatureIndex;

inline std::shared_ptr<const malpoison::FeatureSpace> space_of(std::size_t d) {
  std::vector<malpoison::QGram> grams;
  for (std::size_t f = 0; f < d; ++f) {
    std::string name = std::to_string(f);
    grams.push_back({std::string(4 - std::min<std::size_t>(4, name.size()), '0') + name});
  }
  return std::make_shared<const malpoison::FeatureSpace>(1, std::move(grams));
}

/// Dataset over a d-dimensional space straight from active lists.
inline malpoison::EmbeddedDataset dataset(const std::vector<std::vector<FeatureIndex>>& actives, std::size_t d,
                                          std::optional<std::vector<std::string>> labels = {}) {
  malpoison::EmbeddedDataset data;
  data.space = space_of(d);
  for (std::size_t i = 0; i < actives.size(); ++i) data.vectors.emplace_back(actives[i], "p" + std::to_string(i));
  data.labels = std::move(labels);
  data.poison_mask.assign(actives.size(), false);
  return data;
}

/// Random non-empty active set over d features.
inline std::vector<FeatureIndex> random_active(std::mt19937_64& rng, std::size_t d, double density = 0.3) {
  std::bernoulli_distribution on(density);
  std::vector<FeatureIndex> active;
  for (FeatureIndex f = 0; f < d; ++f) {
    if (on(rng)) active.push_back(f);
  }
  if (active.empty()) active.push_back(static_cast<FeatureIndex>(std::uniform_int_distribution<std::size_t>(0, d - 1)(rng)));
  return active;
}

/// Default synthetic families embedded and split as the experiment does.
struct SynthSplit {
  malpoison::EmbeddedDataset calibration;
  malpoison::EmbeddedDataset evaluation;
};

inline SynthSplit synth_split(const malpoison::SynthConfig& cfg, std::uint64_t split_seed) {
  const auto reports = malpoison::synth_generate(cfg);
  auto space = std::make_shared<const malpoison::FeatureSpace>(malpoison::build_feature_space(reports, 1));
  const auto parts = malpoison::split(reports, split_seed);
  return {malpoison::embed_all(parts.calibration, space), malpoison::embed_all(parts.evaluation, space)};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("malpoison-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
