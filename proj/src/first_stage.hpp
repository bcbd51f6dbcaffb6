#ifndef CFC_FIRST_STAGE_HPP_
#define CFC_FIRST_STAGE_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "click_sim.hpp"
#include "dataset.hpp"
#include "gbdt.hpp"

namespace cfc {

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;

  double predict(const std::vector<double>& features) const;
};

enum class FirstStageKind { Ridge, GbdtRegression };

const char* first_stage_kind_name(FirstStageKind kind);
FirstStageKind first_stage_kind_from_name(const std::string& name);

// Model of the logged ranking: predicts a document's 1-based position
// from its features.
struct FirstStageModel {
  FirstStageKind kind = FirstStageKind::Ridge;
  RidgeModel ridge;
  gbdt::Ensemble ensemble;

  double predict(const std::vector<double>& features) const;
};

struct FirstStageParams {
  FirstStageKind kind = FirstStageKind::Ridge;
  // NaN selects lambda from {1e-3, 1e-2, 1e-1, 1, 10} by squared error on
  // a 10% held-out query split.
  double lambda = std::numeric_limits<double>::quiet_NaN();
  gbdt::TrainParams gbdt;
  std::uint64_t seed = 0;
};

// residuals[qi][di]: observed position minus first-stage prediction.
struct ResidualEntry {
  int position = 0;
  double predicted = 0.0;
  double residual = 0.0;
};

struct ResidualSet {
  std::vector<std::vector<ResidualEntry>> entries;

  std::vector<double> flat() const;
  std::size_t total() const;
};

// Penalized least squares with an unpenalized intercept, solved on
// centered data through an SPD factorization. lambda = 0 on a
// rank-deficient design is an error.
RidgeModel fit_ridge(const std::vector<std::vector<double>>& rows,
                     const std::vector<double>& targets, double lambda);

FirstStageModel fit_first_stage(const Dataset& data, const RankedLists& lists,
                                const FirstStageParams& params);

ResidualSet residuals(const FirstStageModel& model, const Dataset& data,
                      const RankedLists& lists);

void save_first_stage(const FirstStageModel& model, const std::string& path);
FirstStageModel load_first_stage(const std::string& path);

// TSV `query_id doc_id position predicted residual`.
void save_residuals(const ResidualSet& res, const Dataset& data,
                    const std::string& path);
ResidualSet load_residuals(const std::string& path, const Dataset& data);

// Fligner-Killeen homogeneity-of-variance test: groups are centered by
// their medians, pooled absolute deviations are ranked, normal scores
// a_i = qnorm(1/2 + rank/(2(N+1))) are compared across groups against a
// chi-square(k-1) reference.
struct FlignerKilleenResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

FlignerKilleenResult fligner_killeen(const std::vector<std::vector<double>>& groups);

// Heteroskedasticity check: residuals grouped into n_bins equal-frequency
// bins of predicted position, then Fligner-Killeen.
FlignerKilleenResult heteroskedasticity_report(const ResidualSet& res, int n_bins);

}  // namespace cfc

#endif  // CFC_FIRST_STAGE_HPP_
