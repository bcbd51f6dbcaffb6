#ifndef CFC_TRANSFORMS_HPP_
#define CFC_TRANSFORMS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "first_stage.hpp"

namespace cfc {

// The four residual transformations, a second-stage hyperparameter.
enum class TransformKind {
  MinMax = 0,
  NormalPdf = 1,
  NormalHazard = 2,  // pdf / CDF of a fitted normal
  KdeHazard = 3,     // pdf / CDF of a Gaussian KDE
};

const char* transform_kind_name(TransformKind kind);
TransformKind transform_kind_from_name(const std::string& name);

// Denominator floor for the hazard transforms; hits are surfaced through
// TransformStats so deep-left-tail inputs are visible in diagnostics.
inline constexpr double kHazardDenominatorFloor = 1e-12;

struct FittedTransform {
  TransformKind kind = TransformKind::MinMax;
  // MinMax
  double min = 0.0;
  double max = 0.0;
  // NormalPdf / NormalHazard (mu, population-std sigma)
  double mu = 0.0;
  double sigma = 1.0;
  // KdeHazard
  double bandwidth = 0.0;
  std::vector<double> sample;        // exact mode
  std::vector<double> bin_centers;   // binned mode
  std::vector<double> bin_weights;   // counts / n
  bool binned = false;
};

struct TransformStats {
  std::size_t floor_hits = 0;
};

// Transformed residuals keyed like the ResidualSet they came from.
struct ControlSignals {
  TransformKind kind = TransformKind::MinMax;
  std::vector<std::vector<double>> values;
  std::size_t floor_hits = 0;
};

struct ApplyResult {
  ControlSignals signals;
  FittedTransform fitted;
};

// MinMax stores (min, max); the normal kinds store the ML estimates
// (mean, population std); KdeHazard stores the sample and a Silverman
// bandwidth 0.9 * min(sample std, IQR/1.34) * n^(-1/5). Constant residuals
// are an error for the distributional kinds.
FittedTransform fit_transform(TransformKind kind, const std::vector<double>& values);

// Equal-width binned KDE summary (bin_count centers) standing in for the
// stored sample; evaluation stays within 1e-3 absolute pdf error of the
// exact mode on usual inputs.
FittedTransform fit_transform_binned(const std::vector<double>& values, int bin_count);

double transform(const FittedTransform& fitted, double value);
double transform(const FittedTransform& fitted, double value, TransformStats& stats);

// KDE pieces, exposed for verification.
double kde_pdf(const FittedTransform& fitted, double value);
double kde_cdf(const FittedTransform& fitted, double value);

ApplyResult apply_all(TransformKind kind, const ResidualSet& residuals);

// Reuse a transform fitted elsewhere (training residuals) on another
// residual set (validation).
ControlSignals apply_fitted(const FittedTransform& fitted, const ResidualSet& residuals);

void save_transform(const FittedTransform& fitted, const std::string& path);
FittedTransform load_transform(const std::string& path);

// TSV `query_id doc_id transform_kind value`.
void save_signals(const ControlSignals& signals, const Dataset& data,
                  const std::string& path);
ControlSignals load_signals(const std::string& path, const Dataset& data);

}  // namespace cfc

#endif  // CFC_TRANSFORMS_HPP_
