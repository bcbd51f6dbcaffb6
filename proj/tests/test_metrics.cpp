#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "common.hpp"
#include "dataset.hpp"
#include "doctest.h"

using namespace cfc;

namespace {

// Independent direct-summation oracles coded from the metric definitions.
double dcg_direct(const std::vector<double>& gains, int p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < gains.size() && static_cast<int>(i) < p; ++i) {
    acc += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return acc;
}

double ndcg_direct(const std::vector<int>& rels, int p) {
  std::vector<double> gains;
  for (int r : rels) gains.push_back(std::pow(2.0, r) - 1.0);
  std::vector<double> ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<double>());
  const double idcg = dcg_direct(ideal, p);
  if (idcg <= 0.0) return -1.0;  // sentinel for skipped
  return dcg_direct(gains, p) / idcg;
}

double err_direct(const std::vector<int>& rels, int p, int rel_max) {
  double acc = 0.0;
  for (std::size_t r = 0; r < rels.size() && static_cast<int>(r) < p; ++r) {
    double prefix = 1.0;
    for (std::size_t i = 0; i < r; ++i) {
      prefix *= 1.0 - (std::pow(2.0, rels[i]) - 1.0) / std::pow(2.0, rel_max);
    }
    acc += prefix * ((std::pow(2.0, rels[r]) - 1.0) / std::pow(2.0, rel_max)) /
           static_cast<double>(r + 1);
  }
  return acc;
}

std::vector<double> gains_of(const std::vector<int>& rels) {
  std::vector<double> g;
  for (int r : rels) g.push_back(std::exp2(r) - 1.0);
  return g;
}

std::vector<double> ideal_of(const std::vector<int>& rels) {
  std::vector<double> g = gains_of(rels);
  std::sort(g.begin(), g.end(), std::greater<double>());
  return g;
}

}  // namespace

TEST_CASE("ndcg_at is one for the ideal ordering") {
  const std::vector<int> rels{3, 2};
  CHECK(ndcg_at(gains_of(rels), ideal_of(rels), 2).value() == doctest::Approx(1.0));
}

TEST_CASE("ndcg_at matches the worked example") {
  const std::vector<int> rels{0, 3};
  CHECK(ndcg_at(gains_of(rels), ideal_of(rels), 2).value() ==
        doctest::Approx(0.6309297535714574).epsilon(1e-10));
}

TEST_CASE("ndcg_at is empty when IDCG is zero") {
  const std::vector<int> rels{0, 0, 0};
  CHECK(!ndcg_at(gains_of(rels), ideal_of(rels), 3).has_value());
}

TEST_CASE("ndcg_at validates p") {
  CHECK_THROWS_AS(ndcg_at({1.0}, {1.0}, 0), std::invalid_argument);
}

TEST_CASE("err_at matches the worked examples") {
  CHECK(err_at({4}, 1, 4) == doctest::Approx(0.9375));
  CHECK(err_at({4, 4}, 2, 4) == doctest::Approx(0.966796875).epsilon(1e-12));
  CHECK(err_at({0, 0, 0}, 3, 4) == 0.0);
  CHECK_THROWS_AS(err_at({5}, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(err_at({1}, 0, 4), std::invalid_argument);
}

TEST_CASE("metrics match the direct-summation oracle on short lists") {
  // exhaustive over grade tuples of length <= 4 here; the acceptance suite
  // extends to length 6
  for (int len = 1; len <= 4; ++len) {
    std::vector<int> rels(len, 0);
    while (true) {
      for (int p : {1, 2, len}) {
        const auto got = ndcg_at(gains_of(rels), ideal_of(rels), p);
        const double want = ndcg_direct(rels, p);
        if (want < 0.0) {
          CHECK(!got.has_value());
        } else {
          CHECK(got.value() == doctest::Approx(want).epsilon(1e-12));
        }
        CHECK(err_at(rels, p, 4) ==
              doctest::Approx(err_direct(rels, p, 4)).epsilon(1e-12));
      }
      int i = 0;
      while (i < len && rels[i] == 4) rels[i++] = 0;
      if (i == len) break;
      ++rels[i];
    }
  }
}

TEST_CASE("descending relevance maximizes ERR over permutations of length 5") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> rels(5);
    for (auto& r : rels) r = static_cast<int>(rng.below(5));
    std::vector<int> best = rels;
    std::sort(best.begin(), best.end(), std::greater<int>());
    const double best_err = err_at(best, 5, 4);
    std::vector<int> perm = rels;
    std::sort(perm.begin(), perm.end());
    do {
      CHECK(err_at(perm, 5, 4) <= best_err + 1e-12);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("swapping a higher grade into a better position never lowers NDCG") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> rels(6);
    for (auto& r : rels) r = static_cast<int>(rng.below(5));
    const int p = 4;
    const std::size_t a = rng.below(p);
    const std::size_t b = a + 1 + rng.below(p - a);
    if (ndcg_direct(rels, p) < 0.0) continue;
    if (rels[b] <= rels[a]) continue;  // want a strictly better doc moving up
    std::vector<int> better = rels;
    std::swap(better[a], better[b]);
    CHECK(ndcg_at(gains_of(better), ideal_of(better), p).value() + 1e-12 >=
          ndcg_at(gains_of(rels), ideal_of(rels), p).value());
  }
}

TEST_CASE("evaluate_scores gives NDCG one when scores equal relevance") {
  const Dataset data = synth_dataset(40, 10, 4, 3);
  std::vector<std::vector<double>> scores(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    for (const auto& d : data.queries[qi].documents) {
      scores[qi].push_back(static_cast<double>(d.relevance));
    }
  }
  MetricConfig cfg;
  const EvalReport report = evaluate_scores(scores, data, cfg);
  for (int p : cfg.cutoffs) {
    for (double v : report.at("ndcg", p).per_query) {
      CHECK(v == doctest::Approx(1.0));
    }
  }
  CHECK(report.n_queries == 40);
}

TEST_CASE("relevance scores beat random scores on NDCG@10") {
  const Dataset data = synth_dataset(100, 12, 4, 8);
  std::vector<std::vector<double>> rel_scores(data.queries.size());
  std::vector<std::vector<double>> rand_scores(data.queries.size());
  Rng rng(12);
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    for (const auto& d : data.queries[qi].documents) {
      rel_scores[qi].push_back(static_cast<double>(d.relevance));
      rand_scores[qi].push_back(rng.uniform01());
    }
  }
  MetricConfig cfg;
  cfg.cutoffs = {10};
  const double good = evaluate_scores(rel_scores, data, cfg).at("ndcg", 10).mean;
  const double bad = evaluate_scores(rand_scores, data, cfg).at("ndcg", 10).mean;
  CHECK(good > bad);
}

TEST_CASE("report means equal the mean of the per-query vectors") {
  const Dataset data = synth_dataset(25, 8, 4, 10);
  std::vector<std::vector<double>> scores(data.queries.size());
  Rng rng(1);
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    for (std::size_t di = 0; di < data.queries[qi].documents.size(); ++di) {
      scores[qi].push_back(rng.uniform01());
    }
  }
  const EvalReport report = evaluate_scores(scores, data, MetricConfig{});
  for (const auto& [key, s] : report.series) {
    const double m = std::accumulate(s.per_query.begin(), s.per_query.end(), 0.0) /
                     static_cast<double>(s.per_query.size());
    CHECK(s.mean == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("mean_ndcg_with_gains shifts continuous gains per query") {
  Dataset data;
  data.feature_dim = 1;
  Query q;
  q.query_id = "1";
  for (int i = 0; i < 3; ++i) {
    Document d;
    d.doc_id = i;
    d.features = {0.0};
    q.documents.push_back(d);
  }
  data.queries.push_back(q);
  const std::vector<std::vector<double>> scores{{3.0, 2.0, 1.0}};
  const std::vector<std::vector<double>> gains{{-0.5, 0.0, 0.5}};
  // shifted gains are [0, 0.5, 1] presented in score order (worst first)
  const double got = mean_ndcg_with_gains(scores, gains, data, 3);
  const double dcg = 0.0 / std::log2(2.0) + 0.5 / std::log2(3.0) + 1.0 / std::log2(4.0);
  const double idcg = 1.0 / std::log2(2.0) + 0.5 / std::log2(3.0);
  CHECK(got == doctest::Approx(dcg / idcg).epsilon(1e-12));
}

TEST_CASE("fisher_randomization is one for identical vectors") {
  const std::vector<double> v{0.3, 0.5, 0.9, 0.1};
  CHECK(fisher_randomization(v, v, 500, 3) == doctest::Approx(1.0));
}

TEST_CASE("fisher_randomization detects a large shift") {
  Rng rng(14);
  std::vector<double> b(50), a;
  for (auto& v : b) v = rng.uniform01();
  for (double v : b) a.push_back(v + 10.0);
  CHECK(fisher_randomization(a, b, 10000, 5) <= 0.001);
}

TEST_CASE("fisher_randomization is deterministic in the seed") {
  Rng rng(15);
  std::vector<double> a(30), b(30);
  for (auto& v : a) v = rng.uniform01();
  for (auto& v : b) v = rng.uniform01();
  CHECK(fisher_randomization(a, b, 2000, 9) == fisher_randomization(a, b, 2000, 9));
  CHECK_THROWS_AS(fisher_randomization(a, {1.0}, 100, 1), std::invalid_argument);
}

TEST_CASE("report files are written") {
  const Dataset data = synth_dataset(10, 6, 3, 2);
  std::vector<std::vector<double>> scores(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    scores[qi].assign(data.queries[qi].documents.size(), 0.5);
  }
  const EvalReport report = evaluate_scores(scores, data, MetricConfig{});
  save_report_csv(report, "report_test.csv");
  save_report_json(report, "report_test.json");
  std::ifstream csv("report_test.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "metric,cutoff,mean,n_queries,n_skipped");
  std::remove("report_test.csv");
  std::remove("report_test.json");
}
