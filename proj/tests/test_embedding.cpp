#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "malpoison/embedding.hpp"
#include "oracles.hpp"

using namespace malpoison;

namespace {

ReportSet reports_of(const std::vector<std::vector<std::string>>& events) {
  std::vector<Report> reports;
  for (std::size_t i = 0; i < events.size(); ++i) reports.push_back({"r" + std::to_string(i), std::nullopt, events[i]});
  return ReportSet(std::move(reports), Provenance::ingested);
}

}  // namespace

TEST_SUITE_BEGIN("embedding");

TEST_CASE("feature space enumeration") {
  SUBCASE("unigrams") {
    const auto space = build_feature_space(reports_of({{"A", "B"}, {"B", "C"}}), 1);
    CHECK(space.dimension() == 3);
    CHECK(space.index_of({"A"}) == 0u);
    CHECK(space.index_of({"B"}) == 1u);
    CHECK(space.index_of({"C"}) == 2u);
    CHECK_FALSE(space.index_of({"Z"}).has_value());
  }
  SUBCASE("bigrams") {
    const auto space = build_feature_space(reports_of({{"A", "B", "A"}}), 2);
    CHECK(space.dimension() == 2);
    CHECK(space.index_of({"A", "B"}).has_value());
    CHECK(space.index_of({"B", "A"}).has_value());
    CHECK_FALSE(space.index_of({"A", "A"}).has_value());
  }
  SUBCASE("report shorter than q") {
    CHECK_THROWS_AS(build_feature_space(reports_of({{"A"}}), 2), DataError);
  }
  SUBCASE("q must be positive") {
    CHECK_THROWS(build_feature_space(reports_of({{"A"}}), 0));
  }
}

TEST_CASE("embed: presence semantics and closed vocabulary") {
  const auto space = build_feature_space(reports_of({{"A", "B", "C"}}), 1);
  const auto v = embed({"x", std::nullopt, {"A", "B", "A", "C"}}, space);
  CHECK(std::vector<FeatureIndex>(v.active().begin(), v.active().end()) == std::vector<FeatureIndex>{0, 1, 2});
  CHECK(v.coordinate() == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK_THROWS_AS(embed({"z", std::nullopt, {"Z"}}, space), DataError);

  const auto single = embed({"a", std::nullopt, {"A"}}, build_feature_space(reports_of({{"A", "B"}}), 1));
  CHECK(single.size() == 1);
  CHECK(single.coordinate() == 1.0);
  const auto dense = single.to_dense(2);
  CHECK(dense == std::vector<double>{1.0, 0.0});
}

TEST_CASE("sparse vector validation") {
  CHECK_THROWS(SparseBinaryVector(std::vector<FeatureIndex>{}));
  CHECK_THROWS(SparseBinaryVector({2, 1}));
  CHECK_THROWS(SparseBinaryVector({1, 1}));
}

TEST_CASE("distance: hand values") {
  const SparseBinaryVector a({0});
  const SparseBinaryVector b({1});
  CHECK(distance(a, b) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(distance(a, a) == 0.0);
  const SparseBinaryVector x({0, 1});
  const SparseBinaryVector y({0, 1, 2, 3});
  CHECK(distance(x, y) == doctest::Approx(0.76537).epsilon(1e-5));
  CHECK(std::abs(distance(x, y) - oracle::dense_distance(x, y)) < 1e-12);
}

TEST_CASE("distance: agrees with the dense oracle, symmetric, bounded") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const SparseBinaryVector a(fixture::random_active(rng, 40, 0.2));
    const SparseBinaryVector b(fixture::random_active(rng, 40, 0.2));
    const double d = distance(a, b);
    CHECK(std::abs(d - oracle::dense_distance(a, b)) < 1e-12);
    CHECK(d == distance(b, a));
    CHECK(d >= 0.0);
    CHECK(d <= std::sqrt(2.0) + 1e-15);
  }
}

TEST_CASE("embedded dataset bookkeeping and vector dump") {
  auto data = fixture::dataset({{0, 2}, {1}}, 3, std::vector<std::string>{"a", "b"});
  CHECK_NOTHROW(data.validate());
  CHECK(data.original_count() == 2);
  data.vectors.emplace_back(std::vector<FeatureIndex>{0, 1, 2}, "poison-1");
  data.poison_mask.push_back(true);
  data.labels->emplace_back();
  CHECK(data.original_count() == 2);
  CHECK(data.original_indices() == std::vector<std::size_t>{0, 1});

  std::ostringstream out;
  write_vector_dump(data, out);
  CHECK(out.str() == "p0\t0,2\np1\t1\npoison-1\t0,1,2\n");

  data.poison_mask.pop_back();
  CHECK_THROWS(data.validate());
}

TEST_SUITE_END();
