#include "stats.hpp"

#include <cmath>
#include <stdexcept>

#include "doctest.h"

using namespace cfc;

namespace {

// Independent quadrature oracle for the standard normal CDF: Simpson's
// rule on the density from 0 to z.
double phi_by_quadrature(double z) {
  const int steps = 20000;
  const double h = z / steps;
  double acc = normal_pdf(0.0) + normal_pdf(z);
  for (int i = 1; i < steps; ++i) {
    acc += normal_pdf(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return 0.5 + acc * h / 3.0;
}

}  // namespace

TEST_CASE("normal_cdf hits table values") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-9));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-9));
  CHECK(normal_cdf(-2.575829303548901) == doctest::Approx(0.005).epsilon(1e-6));
  CHECK(normal_cdf(8.5) > 1.0 - 1e-15);
  CHECK(normal_cdf(-40.0) == 0.0);
}

TEST_CASE("normal_cdf symmetry holds exactly by construction") {
  for (double z = -8.0; z <= 8.0; z += 0.173) {
    CHECK(normal_cdf(z) + normal_cdf(-z) == 1.0);
  }
}

TEST_CASE("normal_cdf matches quadrature within 1e-7") {
  for (int i = 1; i <= 50; ++i) {
    const double z = -6.0 + 12.0 * i / 51.0;
    CHECK(std::fabs(normal_cdf(z) - phi_by_quadrature(z)) <= 1e-7);
  }
}

TEST_CASE("normal_quantile inverts normal_cdf") {
  for (double p = 0.001; p < 1.0; p += 0.0173) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-8));
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("chi-square tail matches reference critical values") {
  CHECK(chi2_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(chi2_sf(5.991464547107979, 2) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(chi2_sf(16.918977604620448, 9) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(chi2_sf(0.0, 3) == 1.0);
  CHECK(chi2_cdf(2.0, 2) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("chi2_quantile inverts chi2_cdf") {
  for (double k : {1.0, 2.0, 5.0, 9.0, 30.0}) {
    for (double p : {0.01, 0.5, 0.95, 0.99}) {
      CHECK(chi2_cdf(chi2_quantile(p, k), k) == doctest::Approx(p).epsilon(1e-8));
    }
  }
}

TEST_CASE("gamma_p and gamma_q are complementary") {
  for (double a : {0.5, 1.0, 4.5, 20.0}) {
    for (double x : {0.1, 1.0, 5.0, 30.0}) {
      CHECK(gamma_p(a, x) + gamma_q(a, x) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("type-1 quantiles pick the smallest value covering p") {
  CHECK(quantile_type1({-1.0, 1.0}, 0.25) == -1.0);
  CHECK(quantile_type1({-1.0, 1.0}, 0.75) == 1.0);
  CHECK(quantile_type1({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile_type1({5.0}, 0.99) == 5.0);
}

TEST_CASE("midranks average over ties") {
  const std::vector<double> v{1.0, 0.0, 1.0, 1.0, 0.0, 1.0};
  const std::vector<double> r = midranks(v);
  CHECK(r[1] == doctest::Approx(1.5));
  CHECK(r[4] == doctest::Approx(1.5));
  CHECK(r[0] == doctest::Approx(4.5));
  CHECK(r[5] == doctest::Approx(4.5));
}

TEST_CASE("median handles odd and even sizes") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
}
