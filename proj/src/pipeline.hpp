#ifndef CFC_PIPELINE_HPP_
#define CFC_PIPELINE_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "click_sim.hpp"
#include "dataset.hpp"
#include "first_stage.hpp"
#include "gbdt.hpp"
#include "metrics.hpp"
#include "transforms.hpp"

namespace cfc {

enum class ValidationMode { TrueRelevance = 0, DebiasedClicks = 1, BiasedClicks = 2 };

const char* validation_mode_name(ValidationMode mode);
ValidationMode validation_mode_from_name(const std::string& name);

// Univariate ridge of per-pass clicks on the transformed residual,
// intercept unpenalized.
struct DebiasModel {
  double slope = 0.0;
  double intercept = 0.0;
  double lambda = 1e-3;

  double predict(double signal) const { return intercept + slope * signal; }
};

// Per validation document: click rate minus the debias-model prediction,
// a proxy for true relevance when annotations are unavailable.
struct ProxyRelevance {
  std::vector<std::vector<double>> values;
};

DebiasModel fit_debias_model(const ControlSignals& train_signals,
                             const ClickLog& train_clicks, double lambda);

ProxyRelevance debias_validation_clicks(const ControlSignals& train_signals,
                                        const ClickLog& train_clicks,
                                        const ControlSignals& valid_signals,
                                        const ClickLog& valid_clicks,
                                        double lambda = 1e-3,
                                        DebiasModel* model_out = nullptr);

struct TuneGrid {
  std::vector<TransformKind> transforms{TransformKind::MinMax, TransformKind::NormalPdf,
                                        TransformKind::NormalHazard,
                                        TransformKind::KdeHazard};
  std::vector<int> n_trees{100};
  std::vector<double> learning_rates{0.1};
  ValidationMode validation = ValidationMode::DebiasedClicks;
};

struct TuneConfigResult {
  TransformKind transform = TransformKind::MinMax;
  int n_trees = 0;
  double learning_rate = 0.0;
  bool failed = false;
  std::string error;
  // Validation NDCG@cutoff per mode, indexed by ValidationMode.
  double valid_ndcg[3] = {0.0, 0.0, 0.0};

  double loss(ValidationMode mode) const {
    return -valid_ndcg[static_cast<int>(mode)];
  }
};

struct TuneReport {
  std::vector<TuneConfigResult> configs;
  int best_index = -1;
  ValidationMode validation = ValidationMode::DebiasedClicks;
  double best_loss = std::numeric_limits<double>::infinity();
};

struct TuneInputs {
  const Dataset* train = nullptr;
  const Dataset* valid = nullptr;
  const ClickLog* train_clicks = nullptr;
  const ClickLog* valid_clicks = nullptr;
  const ResidualSet* train_residuals = nullptr;
  const ResidualSet* valid_residuals = nullptr;
};

struct TuneResult {
  gbdt::Ensemble model;
  TuneReport report;
  FittedTransform fitted;      // winning transform, fitted on train residuals
  DebiasModel debias;          // debias fit of the winning transform
};

// Grid search per Cartesian (transform, n_trees, learning_rate): build
// control signals, train the click ranker, pick the configuration with the
// lowest validation loss (-NDCG@cutoff) under grid.validation. Ties break
// toward fewer trees, smaller rate, then transform enum order.
TuneResult tune_and_train(const TuneInputs& inputs, const TuneGrid& grid,
                          const gbdt::TrainParams& base_params,
                          double debias_lambda = 1e-3);

// Same sweep, selecting one best model per requested mode; the trained
// per-configuration models are shared across modes.
struct MultiTuneResult {
  std::vector<TuneConfigResult> configs;
  std::map<ValidationMode, TuneReport> reports;
  std::map<ValidationMode, gbdt::Ensemble> models;
  std::map<ValidationMode, FittedTransform> fitted;
  std::map<ValidationMode, DebiasModel> debias;
};

MultiTuneResult tune_multi(const TuneInputs& inputs, const TuneGrid& grid,
                           const std::vector<ValidationMode>& modes,
                           const gbdt::TrainParams& base_params,
                           double debias_lambda = 1e-3);

enum class SweepAxis { None, Eta, Passes, Noise, ValidQueries, FirstStageKind };

const char* sweep_axis_name(SweepAxis axis);
SweepAxis sweep_axis_from_name(const std::string& name);

struct ExperimentConfig {
  // data
  bool use_synth = true;
  std::string train_path, valid_path, test_path;
  int synth_train_queries = 200;
  int synth_valid_queries = 50;
  int synth_test_queries = 100;
  int synth_docs_per_query = 20;
  int synth_feature_dim = 10;
  // click simulation
  double eta = 1.0;
  double noise = 0.0;
  int passes = 10;
  double init_fraction = 0.01;
  int init_epochs = 20;
  double init_step = 0.1;
  // first stage
  FirstStageKind first_stage_kind = FirstStageKind::Ridge;
  double first_stage_lambda = std::numeric_limits<double>::quiet_NaN();  // auto
  gbdt::TrainParams first_stage_gbdt{100, 0.1, 31, 20, 10, 1.0, 0};
  int het_bins = 10;
  // second stage + tuning
  gbdt::TrainParams ranker{100, 0.1, 255, 2, 10, 1.0, 0};
  TuneGrid grid;
  std::vector<std::string> cfc_variants{"dc", "bc"};  // subset of dc|bc|true
  double debias_lambda = 1e-3;
  // sweep
  SweepAxis axis = SweepAxis::None;
  std::vector<double> axis_values;
  std::vector<std::string> axis_kinds;  // for first-stage-kind
  // evaluation
  std::vector<int> cutoffs{5, 10, 15};
  int fisher_permutations = 10000;
  // The corpus, initial ranker, logged lists and first stage are fixed by
  // data_seed; the master seeds re-randomize clicks and training-side
  // seeds, the way click studies rerun user sessions over one corpus.
  std::uint64_t data_seed = 20240901;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;
  int threads = 0;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

struct MethodSelection {
  TransformKind transform = TransformKind::MinMax;
  int n_trees = 0;
  double learning_rate = 0.0;
  bool has_transform = false;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::map<std::string, EvalReport> method_reports;    // test-set reports
  std::map<std::string, MethodSelection> selections;
  FlignerKilleenResult het;
  std::string cfc_model_json;  // primary CFC variant, serialized
};

struct AxisOutcome {
  std::string label;        // "eta=1" / "none"
  double numeric_value = 0.0;
  std::string kind_value;   // first-stage-kind sweeps
  std::vector<SeedOutcome> seeds;
  // mean test metric across seeds, key: (method, metric, cutoff)
  std::map<std::string, double> mean_metric;
  // primary CFC variant vs baseline
  double fisher_p_seeds = 1.0;   // paired across seed means (when >= 2 seeds)
  double fisher_p_pooled = 1.0;  // paired across pooled per-query values
};

struct ExperimentReport {
  std::vector<AxisOutcome> cells;
  std::vector<std::string> methods;
  std::string primary_method;
};

std::string metric_key(const std::string& method, const std::string& metric, int cutoff);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// results.csv / runs.csv / het.csv / significance.csv plus the primary
// model of each cell's first seed, under cfg.out_dir.
void write_experiment_outputs(const ExperimentReport& report,
                              const ExperimentConfig& cfg);

}  // namespace cfc

#endif  // CFC_PIPELINE_HPP_
