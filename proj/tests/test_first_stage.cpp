#include "first_stage.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "common.hpp"
#include "doctest.h"
#include "stats.hpp"

using namespace cfc;

namespace {

// Brute-force oracle: solve the centered normal equations
// (Xc'Xc + lambda I) w = Xc'yc by Gaussian elimination with partial
// pivoting, independent of the production solver.
RidgeModel ridge_oracle(const std::vector<std::vector<double>>& rows,
                        const std::vector<double>& y, double lambda) {
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  std::vector<double> xm(d, 0.0);
  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) xm[j] += rows[i][j];
    ym += y[i];
  }
  for (auto& v : xm) v /= static_cast<double>(n);
  ym /= static_cast<double>(n);

  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double xj = rows[i][j] - xm[j];
      for (std::size_t k = 0; k < d; ++k) {
        a[j][k] += xj * (rows[i][k] - xm[k]);
      }
      a[j][d] += xj * (y[i] - ym);
    }
  }
  for (std::size_t j = 0; j < d; ++j) a[j][j] += lambda;

  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k <= d; ++k) a[r][k] -= f * a[col][k];
    }
  }
  RidgeModel m;
  m.lambda = lambda;
  m.weights.resize(d);
  for (std::size_t j = 0; j < d; ++j) m.weights[j] = a[j][d] / a[j][j];
  m.intercept = ym;
  for (std::size_t j = 0; j < d; ++j) m.intercept -= m.weights[j] * xm[j];
  return m;
}

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    for (auto& v : r) v = rng.uniform(-2.0, 2.0);
  }
  return rows;
}

}  // namespace

TEST_CASE("fit_ridge recovers an exact line") {
  const RidgeModel m = fit_ridge({{1.0}, {2.0}}, {1.0, 2.0}, 0.0);
  CHECK(m.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.intercept == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(m.predict({1.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.predict({2.0}) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fit_ridge shrinks to the mean under a huge penalty") {
  const RidgeModel m = fit_ridge({{1.0}, {2.0}, {3.0}}, {1.0, 2.0, 2.0}, 1e12);
  CHECK(std::fabs(m.weights[0]) < 1e-9);
  CHECK(m.predict({2.0}) == doctest::Approx(5.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("fit_ridge matches the normal-equation oracle on the spec fixture") {
  const std::vector<std::vector<double>> x{{1.0}, {2.0}, {3.0}};
  const std::vector<double> y{1.0, 2.0, 2.0};
  const RidgeModel got = fit_ridge(x, y, 0.1);
  const RidgeModel want = ridge_oracle(x, y, 0.1);
  CHECK(got.weights[0] == doctest::Approx(want.weights[0]).epsilon(1e-10));
  CHECK(got.intercept == doctest::Approx(want.intercept).epsilon(1e-10));
}

TEST_CASE("fit_ridge matches the oracle on random problems") {
  Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20 + rng.below(40);
    const std::size_t d = 1 + rng.below(6);
    auto rows = random_rows(n, d, rng);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.uniform(-3.0, 3.0);
    const double lambda = trial % 3 == 0 ? 0.0 : rng.uniform(0.0, 5.0);
    const RidgeModel got = fit_ridge(rows, y, lambda);
    const RidgeModel want = ridge_oracle(rows, y, lambda);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(got.weights[j] == doctest::Approx(want.weights[j]).epsilon(1e-9));
    }
    CHECK(got.intercept == doctest::Approx(want.intercept).epsilon(1e-9));
  }
}

TEST_CASE("fit_ridge rejects a rank-deficient design at lambda zero") {
  // second column is twice the first
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const double v = rng.uniform01();
    rows.push_back({v, 2.0 * v});
    y.push_back(rng.uniform01());
  }
  CHECK_THROWS_AS(fit_ridge(rows, y, 0.0), DataError);
  CHECK_NOTHROW(fit_ridge(rows, y, 1e-3));
}

TEST_CASE("fit_ridge validates arguments") {
  CHECK_THROWS_AS(fit_ridge({{1.0}}, {1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_ridge({{1.0}, {2.0}}, {1.0, 2.0}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(fit_ridge({{1.0}, {2.0}}, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("OLS residuals are orthogonal to centered features") {
  Rng rng(31);
  const std::size_t n = 60, d = 4;
  auto rows = random_rows(n, d, rng);
  std::vector<double> y(n);
  for (auto& v : y) v = rng.uniform(-3.0, 3.0);
  const RidgeModel m = fit_ridge(rows, y, 0.0);

  std::vector<double> xm(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) xm[j] += r[j];
  }
  for (auto& v : xm) v /= static_cast<double>(n);
  std::vector<double> dot(d, 0.0);
  double resid_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - m.predict(rows[i]);
    resid_sum += e;
    for (std::size_t j = 0; j < d; ++j) dot[j] += (rows[i][j] - xm[j]) * e;
  }
  CHECK(std::fabs(resid_sum / static_cast<double>(n)) < 1e-10);
  for (std::size_t j = 0; j < d; ++j) CHECK(std::fabs(dot[j]) < 1e-8);
}

TEST_CASE("ridge weight norm is non-increasing in lambda") {
  Rng rng(77);
  auto rows = random_rows(50, 5, rng);
  std::vector<double> y(50);
  for (auto& v : y) v = rng.uniform(-2.0, 2.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}) {
    const RidgeModel m = fit_ridge(rows, y, lambda);
    double norm = 0.0;
    for (double w : m.weights) norm += w * w;
    CHECK(norm <= prev + 1e-12);
    prev = norm;
  }
}

namespace {

// Dataset + lists where the logged position is an exact linear function of
// the single feature: feature = position.
void exact_linear_fixture(Dataset& data, RankedLists& lists) {
  data = Dataset{};
  data.feature_dim = 1;
  lists.positions.clear();
  for (int qi = 0; qi < 6; ++qi) {
    Query q;
    q.query_id = std::to_string(qi);
    std::vector<int> pos;
    for (int di = 0; di < 5; ++di) {
      Document d;
      d.doc_id = di;
      d.features = {static_cast<double>(di + 1)};
      q.documents.push_back(d);
      pos.push_back(di + 1);
    }
    data.queries.push_back(q);
    lists.positions.push_back(pos);
  }
}

}  // namespace

TEST_CASE("fit_first_stage ridge nails a realizable linear target") {
  Dataset data;
  RankedLists lists;
  exact_linear_fixture(data, lists);
  FirstStageParams params;
  params.kind = FirstStageKind::Ridge;
  params.lambda = 0.0;
  const FirstStageModel model = fit_first_stage(data, lists, params);
  const ResidualSet res = residuals(model, data, lists);
  for (const auto& q : res.entries) {
    for (const auto& e : q) CHECK(std::fabs(e.residual) < 1e-8);
  }
}

TEST_CASE("fit_first_stage gbdt with zero trees predicts the mean position") {
  Dataset data;
  RankedLists lists;
  exact_linear_fixture(data, lists);
  FirstStageParams params;
  params.kind = FirstStageKind::GbdtRegression;
  params.gbdt.n_trees = 0;
  const FirstStageModel model = fit_first_stage(data, lists, params);
  const ResidualSet res = residuals(model, data, lists);
  // positions 1..5 mean 3
  CHECK(res.entries[0][0].predicted == doctest::Approx(3.0));
  CHECK(res.entries[0][4].predicted == doctest::Approx(3.0));
}

TEST_CASE("ridge first-stage residuals are mean-zero on synthetic data") {
  const Dataset data = synth_dataset(30, 10, 6, 15);
  const LinearRanker ranker = train_initial_ranker(data, 10, 0.05, 3);
  const RankedLists lists = rank_with(ranker, data);
  FirstStageParams params;  // auto lambda
  const FirstStageModel model = fit_first_stage(data, lists, params);
  const ResidualSet res = residuals(model, data, lists);
  const std::vector<double> flat = res.flat();
  const double m = std::accumulate(flat.begin(), flat.end(), 0.0) /
                   static_cast<double>(flat.size());
  CHECK(std::fabs(m) < 1e-10);
  CHECK(res.total() == data.total_documents());
}

TEST_CASE("residuals subtract prediction from observed position") {
  Dataset data;
  RankedLists lists;
  exact_linear_fixture(data, lists);
  FirstStageModel model;
  model.kind = FirstStageKind::Ridge;
  model.ridge.weights = {0.0};
  model.ridge.intercept = 2.4;
  const ResidualSet res = residuals(model, data, lists);
  CHECK(res.entries[0][2].position == 3);
  CHECK(res.entries[0][2].residual == doctest::Approx(0.6));
}

TEST_CASE("first-stage model and residual files round trip") {
  Dataset data;
  RankedLists lists;
  exact_linear_fixture(data, lists);
  FirstStageParams params;
  params.lambda = 0.01;
  const FirstStageModel model = fit_first_stage(data, lists, params);
  save_first_stage(model, "fs_test.json");
  const FirstStageModel again = load_first_stage("fs_test.json");
  CHECK(again.kind == model.kind);
  CHECK(again.ridge.weights == model.ridge.weights);
  CHECK(again.ridge.intercept == model.ridge.intercept);
  std::remove("fs_test.json");

  const ResidualSet res = residuals(model, data, lists);
  save_residuals(res, data, "res_test.tsv");
  const ResidualSet back = load_residuals("res_test.tsv", data);
  for (std::size_t qi = 0; qi < res.entries.size(); ++qi) {
    for (std::size_t di = 0; di < res.entries[qi].size(); ++di) {
      CHECK(back.entries[qi][di].position == res.entries[qi][di].position);
      CHECK(back.entries[qi][di].predicted == res.entries[qi][di].predicted);
      CHECK(back.entries[qi][di].residual == res.entries[qi][di].residual);
    }
  }
  std::remove("res_test.tsv");
}

TEST_CASE("fligner_killeen is zero on identical groups") {
  const FlignerKilleenResult r = fligner_killeen({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
  CHECK(r.statistic == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.dof == 1);
}

TEST_CASE("fligner_killeen matches an independent reference on fixed input") {
  // expected values frozen from an external reference implementation
  const std::vector<double> a{1.0, 2.5, 0.5, 3.0, 1.5, 2.0};
  const std::vector<double> b{0.1, 5.0, 2.2, 4.4, 0.6, 3.3, 1.1};
  const std::vector<double> c{2.0, 2.1, 1.9, 2.05, 1.95};
  const FlignerKilleenResult r = fligner_killeen({a, b, c});
  CHECK(r.statistic == doctest::Approx(8.000208939945843).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.018313725554380).epsilon(1e-10));
  CHECK(r.dof == 2);
}

TEST_CASE("fligner_killeen detects a ninefold variance ratio") {
  Rng rng(55);
  std::vector<double> a(200), b(200);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = 3.0 * rng.normal();
  const FlignerKilleenResult r = fligner_killeen({a, b});
  CHECK(r.p_value < 0.01);
}

TEST_CASE("fligner_killeen is invariant to relabeling and group shifts") {
  // dyadic-rational data keeps every deviation exact under the shift
  Rng rng(66);
  std::vector<double> a(40), b(40);
  for (auto& v : a) v = std::round(8.0 * rng.normal()) / 4.0;
  for (auto& v : b) v = std::round(16.0 * rng.normal()) / 4.0;
  const FlignerKilleenResult base = fligner_killeen({a, b});

  std::vector<double> a_shuffled = a;
  rng.shuffle(a_shuffled);
  const FlignerKilleenResult shuffled = fligner_killeen({a_shuffled, b});
  CHECK(shuffled.statistic == doctest::Approx(base.statistic).epsilon(1e-12));

  std::vector<double> b_shifted = b;
  for (auto& v : b_shifted) v += 1024.0;
  const FlignerKilleenResult shifted = fligner_killeen({a, b_shifted});
  CHECK(shifted.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
}

TEST_CASE("fligner_killeen rejects degenerate inputs") {
  CHECK_THROWS_AS(fligner_killeen({{1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fligner_killeen({{1.0}, {2.0, 3.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fligner_killeen({{5.0, 5.0}, {3.0, 3.0}}), DataError);
}

TEST_CASE("fligner_killeen size is roughly calibrated at alpha 0.05") {
  Rng rng(999);
  int rejects = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::vector<double>> groups(4, std::vector<double>(25));
    for (auto& g : groups) {
      for (auto& v : g) v = rng.normal();
    }
    if (fligner_killeen(groups).p_value < 0.05) ++rejects;
  }
  const double rate = static_cast<double>(rejects) / trials;
  CHECK(rate >= 0.005);
  CHECK(rate <= 0.105);
}

TEST_CASE("heteroskedasticity_report flags variance growing with predictions") {
  Rng rng(321);
  ResidualSet res;
  res.entries.resize(1);
  for (int i = 0; i < 400; ++i) {
    const double predicted = 1.0 + 9.0 * rng.uniform01();
    const double scale = 0.2 + 0.4 * predicted;
    res.entries[0].push_back(ResidualEntry{1, predicted, scale * rng.normal()});
  }
  const FlignerKilleenResult r = heteroskedasticity_report(res, 10);
  CHECK(r.p_value < 0.05);
}

TEST_CASE("heteroskedasticity_report passes homoskedastic residuals most of the time") {
  Rng rng(322);
  int rejects = 0;
  for (int t = 0; t < 50; ++t) {
    ResidualSet res;
    res.entries.resize(1);
    for (int i = 0; i < 200; ++i) {
      res.entries[0].push_back(
          ResidualEntry{1, 10.0 * rng.uniform01(), rng.normal()});
    }
    if (heteroskedasticity_report(res, 5).p_value < 0.05) ++rejects;
  }
  CHECK(rejects <= 10);
}

TEST_CASE("heteroskedasticity_report needs enough data per bin") {
  ResidualSet res;
  res.entries.resize(1);
  res.entries[0].push_back(ResidualEntry{1, 1.0, 0.1});
  res.entries[0].push_back(ResidualEntry{2, 2.0, -0.1});
  CHECK_THROWS_AS(heteroskedasticity_report(res, 2), DataError);
  CHECK_THROWS_AS(heteroskedasticity_report(res, 1), std::invalid_argument);
}
