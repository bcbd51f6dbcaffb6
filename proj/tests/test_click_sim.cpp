#include "click_sim.hpp"

#include <cmath>
#include <cstdio>

#include "common.hpp"
#include "dataset.hpp"
#include "doctest.h"

using namespace cfc;

namespace {

// One query whose documents get one feature each; a unit-weight ranker
// then scores exactly that feature.
Dataset single_query(const std::vector<double>& feature0,
                     const std::vector<int>& rels) {
  Dataset data;
  data.feature_dim = 1;
  Query q;
  q.query_id = "1";
  for (std::size_t i = 0; i < feature0.size(); ++i) {
    Document d;
    d.doc_id = static_cast<std::int32_t>(i);
    d.features = {feature0[i]};
    d.relevance = rels[i];
    q.documents.push_back(d);
  }
  data.queries.push_back(q);
  return data;
}

LinearRanker unit_ranker() {
  LinearRanker r;
  r.weights = {1.0};
  return r;
}

// Relevance equals the sign of feature 3 against 0.5.
Dataset sign_feature_data(int n_queries, int docs, std::uint64_t seed) {
  Dataset data;
  data.feature_dim = 5;
  Rng rng(seed);
  for (int qi = 0; qi < n_queries; ++qi) {
    Query q;
    q.query_id = std::to_string(qi);
    for (int di = 0; di < docs; ++di) {
      Document d;
      d.doc_id = di;
      for (int j = 0; j < 5; ++j) d.features.push_back(rng.uniform01());
      d.relevance = d.features[3] > 0.5 ? 1 : 0;
      q.documents.push_back(d);
    }
    data.queries.push_back(q);
  }
  return data;
}

}  // namespace

TEST_CASE("observation_prob follows the inverse-position power law") {
  CHECK(observation_prob(1, 0.5) == 1.0);
  CHECK(observation_prob(1, 2.7) == 1.0);
  CHECK(observation_prob(2, 1.0) == doctest::Approx(0.5));
  CHECK(observation_prob(4, 2.0) == doctest::Approx(0.0625));
  CHECK_THROWS_AS(observation_prob(0, 1.0), std::invalid_argument);
}

TEST_CASE("relevance_prob follows the graded map with a noise floor") {
  CHECK(relevance_prob(4, 4, 0.0) == doctest::Approx(1.0));
  CHECK(relevance_prob(0, 4, 0.1) == doctest::Approx(0.1));
  CHECK(relevance_prob(2, 4, 0.1) == doctest::Approx(0.28));
  CHECK(relevance_prob(0, 4, 0.0) == 0.0);
  CHECK_THROWS_AS(relevance_prob(5, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(relevance_prob(-1, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(relevance_prob(2, 4, 1.5), std::invalid_argument);
}

TEST_CASE("rank_with sorts by descending score") {
  const Dataset data = single_query({0.2, 0.9, 0.5}, {0, 0, 0});
  const RankedLists lists = rank_with(unit_ranker(), data);
  CHECK(lists.positions[0] == std::vector<int>{3, 1, 2});
}

TEST_CASE("rank_with breaks ties by ascending doc_id") {
  const Dataset data = single_query({0.5, 0.5, 0.5}, {0, 0, 0});
  const RankedLists lists = rank_with(unit_ranker(), data);
  CHECK(lists.positions[0] == std::vector<int>{1, 2, 3});
}

TEST_CASE("rank_with positions do not depend on input document order") {
  const Dataset fwd = single_query({0.1, 0.7, 0.4}, {0, 0, 0});
  const Dataset rev = single_query({0.4, 0.7, 0.1}, {0, 0, 0});
  const RankedLists a = rank_with(unit_ranker(), fwd);
  const RankedLists b = rank_with(unit_ranker(), rev);
  // same document (same feature) same position
  CHECK(a.positions[0][0] == b.positions[0][2]);
  CHECK(a.positions[0][1] == b.positions[0][1]);
  CHECK(a.positions[0][2] == b.positions[0][0]);
}

TEST_CASE("rank_with rejects dimension mismatches") {
  const Dataset data = single_query({0.5}, {0});
  LinearRanker wide;
  wide.weights = {1.0, 2.0};
  CHECK_THROWS_AS(rank_with(wide, data), std::invalid_argument);
}

TEST_CASE("train_initial_ranker learns the only descent direction") {
  const Dataset data = single_query({1.0, 0.0}, {1, 0});
  const LinearRanker r = train_initial_ranker(data, 5, 0.1, 3);
  CHECK(r.weights[0] > 0.0);
}

TEST_CASE("train_initial_ranker is deterministic") {
  const Dataset data = sign_feature_data(10, 8, 77);
  const LinearRanker a = train_initial_ranker(data, 10, 0.05, 5);
  const LinearRanker b = train_initial_ranker(data, 10, 0.05, 5);
  CHECK(a.weights == b.weights);
}

TEST_CASE("train_initial_ranker fails without trainable pairs") {
  const Dataset data = single_query({0.1, 0.9}, {2, 2});
  CHECK_THROWS_AS(train_initial_ranker(data, 5, 0.1, 1), DataError);
}

TEST_CASE("initial ranker ranks sign-feature data with high pairwise accuracy") {
  const Dataset train = sign_feature_data(30, 10, 41);
  const Dataset held = sign_feature_data(20, 10, 42);
  const LinearRanker r = train_initial_ranker(train, 20, 0.05, 7);
  long correct = 0, total = 0;
  for (const auto& q : held.queries) {
    for (std::size_t i = 0; i < q.documents.size(); ++i) {
      for (std::size_t j = 0; j < q.documents.size(); ++j) {
        if (q.documents[i].relevance <= q.documents[j].relevance) continue;
        ++total;
        if (r.score(q.documents[i].features) > r.score(q.documents[j].features)) {
          ++correct;
        }
      }
    }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(correct) / static_cast<double>(total) > 0.9);
}

TEST_CASE("simulate_clicks: top position with maximal grade always clicks") {
  const Dataset data = single_query({0.9, 0.1}, {4, 0});
  const RankedLists lists = rank_with(unit_ranker(), data);
  SimConfig cfg;
  cfg.passes = 25;
  cfg.seed = 11;
  const ClickLog log = simulate_clicks(lists, data, cfg);
  CHECK(log.entries[0][0].total() == 25);  // rel 4 at position 1
  CHECK(log.entries[0][1].total() == 0);   // rel 0 never clicks at eps 0
}

TEST_CASE("simulate_clicks empirical rate matches the model at position 2") {
  const Dataset data = single_query({0.9, 0.1}, {4, 4});
  const RankedLists lists = rank_with(unit_ranker(), data);
  SimConfig cfg;
  cfg.passes = 10000;
  cfg.seed = 5;
  const ClickLog log = simulate_clicks(lists, data, cfg);
  CHECK(log.entries[0][1].rate() == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::fabs(log.entries[0][1].rate() - 0.5) < 0.02);
}

TEST_CASE("simulate_clicks click rate is non-increasing in position at equal grade") {
  const Dataset data = single_query({0.9, 0.7, 0.5, 0.3, 0.1}, {3, 3, 3, 3, 3});
  const RankedLists lists = rank_with(unit_ranker(), data);
  SimConfig cfg;
  cfg.passes = 20000;
  cfg.seed = 19;
  const ClickLog log = simulate_clicks(lists, data, cfg);
  for (std::size_t di = 0; di + 1 < 5; ++di) {
    CHECK(log.entries[0][di].rate() >= log.entries[0][di + 1].rate() - 0.02);
  }
}

TEST_CASE("simulate_clicks is deterministic and rejects bad inputs") {
  const Dataset data = sign_feature_data(4, 6, 3);
  const LinearRanker r = train_initial_ranker(data, 5, 0.1, 1);
  const RankedLists lists = rank_with(r, data);
  SimConfig cfg;
  cfg.passes = 7;
  cfg.seed = 13;
  const ClickLog a = simulate_clicks(lists, data, cfg);
  const ClickLog b = simulate_clicks(lists, data, cfg);
  for (std::size_t qi = 0; qi < a.entries.size(); ++qi) {
    for (std::size_t di = 0; di < a.entries[qi].size(); ++di) {
      CHECK(a.entries[qi][di].clicks == b.entries[qi][di].clicks);
    }
  }
  RankedLists bad;
  bad.positions.resize(1);
  CHECK_THROWS_AS(simulate_clicks(bad, data, cfg), std::invalid_argument);
}

TEST_CASE("click log and linear ranker survive file round trips") {
  const Dataset data = sign_feature_data(3, 5, 9);
  const LinearRanker r = train_initial_ranker(data, 5, 0.1, 2);
  const RankedLists lists = rank_with(r, data);
  SimConfig cfg;
  cfg.passes = 4;
  cfg.seed = 21;
  const ClickLog log = simulate_clicks(lists, data, cfg);

  const std::string path = "clicks_test.tsv";
  save_click_log(log, data, path);
  const ClickLog again = load_click_log(path, data);
  CHECK(again.passes == log.passes);
  for (std::size_t qi = 0; qi < log.entries.size(); ++qi) {
    for (std::size_t di = 0; di < log.entries[qi].size(); ++di) {
      CHECK(again.entries[qi][di].position == log.entries[qi][di].position);
      CHECK(again.entries[qi][di].clicks == log.entries[qi][di].clicks);
    }
  }
  const RankedLists derived = lists_from_click_log(again);
  CHECK(derived.positions == lists.positions);
  std::remove(path.c_str());

  const std::string rpath = "ranker_test.txt";
  save_linear_ranker(r, rpath);
  const LinearRanker r2 = load_linear_ranker(rpath);
  CHECK(r2.weights == r.weights);
  CHECK(r2.bias == r.bias);
  std::remove(rpath.c_str());
}
