#include "transforms.hpp"

#include <cmath>
#include <cstdio>

#include "common.hpp"
#include "doctest.h"
#include "stats.hpp"

using namespace cfc;

namespace {

ResidualSet residuals_of(const std::vector<double>& values) {
  ResidualSet res;
  res.entries.resize(1);
  for (double v : values) res.entries[0].push_back(ResidualEntry{1, 0.0, v});
  return res;
}

std::vector<double> normal_sample(std::size_t n, double mu, double sigma,
                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = mu + sigma * rng.normal();
  return out;
}

}  // namespace

TEST_CASE("fit_transform NormalPdf on {-1,1} gives mu 0 sigma 1") {
  const FittedTransform f = fit_transform(TransformKind::NormalPdf, {-1.0, 1.0});
  CHECK(f.mu == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK(f.sigma == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("fit_transform MinMax stores the extremes") {
  const FittedTransform f = fit_transform(TransformKind::MinMax, {2.0, 4.0, 6.0});
  CHECK(f.min == 2.0);
  CHECK(f.max == 6.0);
}

TEST_CASE("fit_transform KdeHazard uses the Silverman bandwidth") {
  const FittedTransform f = fit_transform(TransformKind::KdeHazard, {-1.0, 1.0});
  // sample std sqrt(2), IQR/1.34 = 2/1.34 = 1.4925: the std is smaller
  const double expected = 0.9 * std::sqrt(2.0) * std::pow(2.0, -0.2);
  CHECK(f.bandwidth == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("fit_transform rejects degenerate residuals for distribution kinds") {
  CHECK_THROWS_AS(fit_transform(TransformKind::NormalPdf, {1.0, 1.0, 1.0}), DataError);
  CHECK_THROWS_AS(fit_transform(TransformKind::NormalHazard, {2.0, 2.0}), DataError);
  CHECK_THROWS_AS(fit_transform(TransformKind::KdeHazard, {0.5, 0.5}), DataError);
  CHECK_THROWS_AS(fit_transform(TransformKind::MinMax, {1.0}), std::invalid_argument);
}

TEST_CASE("MinMax of constant residuals maps everything to zero") {
  const FittedTransform f = fit_transform(TransformKind::MinMax, {3.0, 3.0});
  CHECK(transform(f, 3.0) == 0.0);
  CHECK(transform(f, 7.0) == 0.0);
}

TEST_CASE("transform evaluates the fitted normal density") {
  FittedTransform f;
  f.kind = TransformKind::NormalPdf;
  f.mu = 0.0;
  f.sigma = 1.0;
  CHECK(transform(f, 0.0) == doctest::Approx(0.3989423).epsilon(1e-6));
  f.sigma = 2.0;
  CHECK(transform(f, 0.0) == doctest::Approx(0.3989423 / 2.0).epsilon(1e-6));
}

TEST_CASE("transform NormalHazard is pdf over CDF") {
  FittedTransform f;
  f.kind = TransformKind::NormalHazard;
  f.mu = 0.0;
  f.sigma = 1.0;
  CHECK(transform(f, 0.0) == doctest::Approx(0.7978846).epsilon(1e-6));
  CHECK(transform(f, 1.0) == doctest::Approx(0.28759997).epsilon(1e-6));
}

TEST_CASE("NormalHazard floors the denominator deep in the left tail") {
  FittedTransform f;
  f.kind = TransformKind::NormalHazard;
  f.mu = 0.0;
  f.sigma = 1.0;
  TransformStats stats;
  const double v = transform(f, -100.0, stats);
  CHECK(stats.floor_hits == 1);
  CHECK(std::isfinite(v));
}

TEST_CASE("KdeHazard vanishes in the far right tail") {
  const FittedTransform f = fit_transform(TransformKind::KdeHazard, {-1.0, 1.0});
  CHECK(kde_pdf(f, 1e6) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(kde_cdf(f, 1e6) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(transform(f, 1e6) == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
}

TEST_CASE("transform rejects non-finite input") {
  const FittedTransform f = fit_transform(TransformKind::MinMax, {0.0, 1.0});
  CHECK_THROWS_AS(transform(f, std::numeric_limits<double>::quiet_NaN()),
                  std::invalid_argument);
}

TEST_CASE("MinMax output is clamped to [0,1] and order-preserving") {
  const FittedTransform f = fit_transform(TransformKind::MinMax, {-2.0, 5.0});
  CHECK(transform(f, -10.0) == 0.0);
  CHECK(transform(f, 10.0) == 1.0);
  Rng rng(7);
  double prev_in = -20.0, prev_out = transform(f, prev_in);
  for (int i = 0; i < 200; ++i) {
    const double v = prev_in + rng.uniform01();
    const double out = transform(f, v);
    CHECK(out >= prev_out);
    CHECK(out >= 0.0);
    CHECK(out <= 1.0);
    prev_in = v;
    prev_out = out;
  }
}

TEST_CASE("NormalHazard is strictly decreasing") {
  FittedTransform f;
  f.kind = TransformKind::NormalHazard;
  f.mu = 0.3;
  f.sigma = 1.7;
  double prev = transform(f, -5.0);
  for (double v = -4.9; v <= 5.0; v += 0.1) {
    const double cur = transform(f, v);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("KDE pdf integrates to one and its CDF runs 0 to 1") {
  const auto sample = normal_sample(500, 0.4, 1.3, 77);
  const FittedTransform f = fit_transform(TransformKind::KdeHazard, sample);
  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  const double lo = *lo_it - 6.0 * f.bandwidth;
  const double hi = *hi_it + 6.0 * f.bandwidth;
  const int steps = 4000;
  const double h = (hi - lo) / steps;
  double integral = 0.5 * (kde_pdf(f, lo) + kde_pdf(f, hi));
  for (int i = 1; i < steps; ++i) integral += kde_pdf(f, lo + i * h);
  integral *= h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

  CHECK(kde_cdf(f, lo) < 1e-6);
  CHECK(kde_cdf(f, hi) > 1.0 - 1e-6);
  double prev = kde_cdf(f, lo);
  for (int i = 1; i <= 100; ++i) {
    const double cur = kde_cdf(f, lo + (hi - lo) * i / 100.0);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("binned KDE stays within 1e-3 absolute pdf error of exact") {
  const auto sample = normal_sample(5000, 0.0, 1.0, 13);
  const FittedTransform exact = fit_transform(TransformKind::KdeHazard, sample);
  const FittedTransform binned = fit_transform_binned(sample, 512);
  CHECK(binned.binned);
  for (double v = -4.0; v <= 4.0; v += 0.05) {
    CHECK(std::fabs(kde_pdf(exact, v) - kde_pdf(binned, v)) <= 1e-3);
  }
}

TEST_CASE("apply_all MinMax reproduces the normalizer example") {
  const ResidualSet res = residuals_of({2.0, 4.0, 6.0});
  const ApplyResult out = apply_all(TransformKind::MinMax, res);
  CHECK(out.signals.values[0] == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(out.signals.kind == TransformKind::MinMax);
}

TEST_CASE("apply_all NormalPdf peaks at the residual nearest the mean") {
  const ResidualSet res = residuals_of({-2.0, -0.1, 0.4, 3.0});
  const ApplyResult out = apply_all(TransformKind::NormalPdf, res);
  const auto& v = out.signals.values[0];
  // mean is 0.325: the 0.4 residual is nearest
  CHECK(v[2] == *std::max_element(v.begin(), v.end()));
}

TEST_CASE("apply_all KdeHazard is strictly positive on training residuals") {
  const auto sample = normal_sample(300, -0.5, 2.0, 5);
  const ResidualSet res = residuals_of(sample);
  const ApplyResult out = apply_all(TransformKind::KdeHazard, res);
  for (double v : out.signals.values[0]) CHECK(v > 0.0);
}

TEST_CASE("apply_fitted reuses the training fit on new residuals") {
  const ResidualSet train = residuals_of({0.0, 2.0, 4.0});
  const ApplyResult out = apply_all(TransformKind::MinMax, train);
  const ResidualSet valid = residuals_of({1.0, 5.0});
  const ControlSignals vs = apply_fitted(out.fitted, valid);
  CHECK(vs.values[0][0] == doctest::Approx(0.25));
  CHECK(vs.values[0][1] == 1.0);  // clamped
}

TEST_CASE("large-sample KdeHazard tracks NormalHazard within 10 percent") {
  const auto sample = normal_sample(10000, 0.0, 1.0, 3);
  const FittedTransform kde = fit_transform(TransformKind::KdeHazard, sample);
  const FittedTransform normal = fit_transform(TransformKind::NormalHazard, sample);
  // central 90% quantile range of the sample
  const double lo = quantile_type1(sample, 0.05);
  const double hi = quantile_type1(sample, 0.95);
  for (int i = 0; i <= 20; ++i) {
    const double v = lo + (hi - lo) * i / 20.0;
    const double a = transform(kde, v);
    const double b = transform(normal, v);
    CHECK(std::fabs(a - b) / b < 0.10);
  }
}

TEST_CASE("fitted transforms and signals survive file round trips") {
  const auto sample = normal_sample(50, 1.0, 2.0, 9);
  for (TransformKind kind : {TransformKind::MinMax, TransformKind::NormalPdf,
                             TransformKind::NormalHazard, TransformKind::KdeHazard}) {
    const FittedTransform f = fit_transform(kind, sample);
    save_transform(f, "transform_test.json");
    const FittedTransform g = load_transform("transform_test.json");
    CHECK(g.kind == f.kind);
    for (double v : {-2.0, 0.0, 0.7, 4.0}) {
      CHECK(transform(g, v) == doctest::Approx(transform(f, v)).epsilon(1e-15));
    }
  }
  std::remove("transform_test.json");

  Dataset data;
  data.feature_dim = 1;
  Query q;
  q.query_id = "q1";
  for (int i = 0; i < 3; ++i) {
    Document d;
    d.doc_id = i;
    d.features = {0.0};
    q.documents.push_back(d);
  }
  data.queries.push_back(q);
  const ResidualSet res = residuals_of({2.0, 4.0, 6.0});
  const ApplyResult out = apply_all(TransformKind::MinMax, res);
  save_signals(out.signals, data, "signals_test.tsv");
  const ControlSignals back = load_signals("signals_test.tsv", data);
  CHECK(back.kind == out.signals.kind);
  CHECK(back.values == out.signals.values);
  std::remove("signals_test.tsv");
}
