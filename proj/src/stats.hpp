#ifndef CFC_STATS_HPP_
#define CFC_STATS_HPP_

#include <cstddef>
#include <vector>

namespace cfc {

// Standard normal density.
double normal_pdf(double z);

// Standard normal CDF. Built so that normal_cdf(z) + normal_cdf(-z) == 1
// exactly; absolute error below 1e-7 on |z| <= 8 and saturating to 0/1 in
// the far tails.
double normal_cdf(double z);

// Inverse standard normal CDF for p in (0, 1).
double normal_quantile(double p);

// Regularized lower/upper incomplete gamma P(a, x) and Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Chi-square CDF / survival function / upper quantile with k degrees of
// freedom.
double chi2_cdf(double x, double k);
double chi2_sf(double x, double k);
double chi2_quantile(double p, double k);

double mean(const std::vector<double>& v);
// Unbiased (n-1) sample variance.
double sample_variance(const std::vector<double>& v);
double median(std::vector<double> v);

// Inverse-ECDF quantile: smallest sorted value x with F(x) >= p.
double quantile_type1(std::vector<double> v, double p);

// Midranks (1-based, ties averaged).
std::vector<double> midranks(const std::vector<double>& v);

}  // namespace cfc

#endif  // CFC_STATS_HPP_
