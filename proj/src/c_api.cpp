#include "cfc/c_api.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "click_sim.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "first_stage.hpp"
#include "gbdt.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "stats.hpp"
#include "transforms.hpp"

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return CFC_OK;
  } catch (const cfc::DataError& e) {
    g_last_error = e.what();
    return CFC_ERR_DATA;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return CFC_ERR_ARG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CFC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CFC_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

cfc::Dataset* as_dataset(CfcDataset h) { return static_cast<cfc::Dataset*>(h); }
cfc::FeatureStats* as_stats(CfcFeatureStats h) { return static_cast<cfc::FeatureStats*>(h); }
cfc::LinearRanker* as_ranker(CfcRanker h) { return static_cast<cfc::LinearRanker*>(h); }
cfc::RankedLists* as_lists(CfcLists h) { return static_cast<cfc::RankedLists*>(h); }
cfc::ClickLog* as_clicks(CfcClicks h) { return static_cast<cfc::ClickLog*>(h); }
cfc::FirstStageModel* as_first_stage(CfcFirstStage h) { return static_cast<cfc::FirstStageModel*>(h); }
cfc::ResidualSet* as_residuals(CfcResiduals h) { return static_cast<cfc::ResidualSet*>(h); }
cfc::FittedTransform* as_transform(CfcTransform h) { return static_cast<cfc::FittedTransform*>(h); }
cfc::ControlSignals* as_signals(CfcSignals h) { return static_cast<cfc::ControlSignals*>(h); }
cfc::gbdt::Ensemble* as_model(CfcModel h) { return static_cast<cfc::gbdt::Ensemble*>(h); }

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

cfc::gbdt::TrainParams make_params(int n_trees, double learning_rate,
                                   int max_leaves, int min_data_in_leaf,
                                   int ndcg_cutoff, std::uint64_t seed) {
  require(n_trees >= 0, "n_trees must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(max_leaves >= 1, "max_leaves must be >= 1");
  require(min_data_in_leaf >= 1, "min_data_in_leaf must be >= 1");
  require(ndcg_cutoff >= 1, "ndcg_cutoff must be >= 1");
  cfc::gbdt::TrainParams params;
  params.n_trees = n_trees;
  params.learning_rate = learning_rate;
  params.max_leaves = max_leaves;
  params.min_data_in_leaf = min_data_in_leaf;
  params.ndcg_cutoff = ndcg_cutoff;
  params.seed = seed;
  return params;
}

}  // namespace

extern "C" {

const char* cfc_get_last_error(void) { return g_last_error.c_str(); }

int cfc_set_max_threads(int n) {
  return guarded([&] {
    require(n >= 0, "thread count must be >= 0");
    cfc::set_max_threads(n);
  });
}

int cfc_dataset_load(const char* path, CfcDataset* out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new cfc::Dataset(cfc::load_letor_file(path));
  });
}

int cfc_dataset_save(CfcDataset data, const char* path) {
  return guarded([&] {
    require(data && path, "null argument");
    cfc::save_letor_file(*as_dataset(data), path);
  });
}

int cfc_dataset_synth(int n_queries, int docs_per_query, int feature_dim,
                      uint64_t seed, CfcDataset* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = new cfc::Dataset(
        cfc::synth_dataset(n_queries, docs_per_query, feature_dim, seed));
  });
}

int cfc_dataset_info(CfcDataset data, size_t* n_queries, size_t* n_documents,
                     int* feature_dim, int* rel_max) {
  return guarded([&] {
    require(data != nullptr, "null argument");
    const cfc::Dataset& d = *as_dataset(data);
    if (n_queries) *n_queries = d.queries.size();
    if (n_documents) *n_documents = d.total_documents();
    if (feature_dim) *feature_dim = d.feature_dim;
    if (rel_max) *rel_max = d.rel_max;
  });
}

int cfc_dataset_sample(CfcDataset data, double fraction, uint64_t seed,
                       CfcDataset* sampled, CfcDataset* remainder) {
  return guarded([&] {
    require(data && sampled && remainder, "null argument");
    cfc::SplitResult split = cfc::sample_fraction(*as_dataset(data), fraction, seed);
    *sampled = new cfc::Dataset(std::move(split.sampled));
    *remainder = new cfc::Dataset(std::move(split.remainder));
  });
}

int cfc_normalizer_fit(CfcDataset data, CfcFeatureStats* out) {
  return guarded([&] {
    require(data && out, "null argument");
    *out = new cfc::FeatureStats(cfc::fit_normalizer(*as_dataset(data)));
  });
}

int cfc_normalizer_apply(CfcDataset data, CfcFeatureStats stats, CfcDataset* out) {
  return guarded([&] {
    require(data && stats && out, "null argument");
    *out = new cfc::Dataset(cfc::apply_normalizer(*as_dataset(data), *as_stats(stats)));
  });
}

int cfc_normalizer_save(CfcFeatureStats stats, const char* path) {
  return guarded([&] {
    require(stats && path, "null argument");
    cfc::save_feature_stats(*as_stats(stats), path);
  });
}

int cfc_normalizer_load(const char* path, CfcFeatureStats* out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new cfc::FeatureStats(cfc::load_feature_stats(path));
  });
}

void cfc_dataset_free(CfcDataset data) { delete as_dataset(data); }
void cfc_normalizer_free(CfcFeatureStats stats) { delete as_stats(stats); }

int cfc_ranker_train(CfcDataset data, int epochs, double step_size,
                     uint64_t seed, CfcRanker* out) {
  return guarded([&] {
    require(data && out, "null argument");
    *out = new cfc::LinearRanker(
        cfc::train_initial_ranker(*as_dataset(data), epochs, step_size, seed));
  });
}

int cfc_ranker_save(CfcRanker ranker, const char* path) {
  return guarded([&] {
    require(ranker && path, "null argument");
    cfc::save_linear_ranker(*as_ranker(ranker), path);
  });
}

int cfc_ranker_load(const char* path, CfcRanker* out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new cfc::LinearRanker(cfc::load_linear_ranker(path));
  });
}

int cfc_ranker_rank(CfcRanker ranker, CfcDataset data, CfcLists* out) {
  return guarded([&] {
    require(ranker && data && out, "null argument");
    *out = new cfc::RankedLists(cfc::rank_with(*as_ranker(ranker), *as_dataset(data)));
  });
}

void cfc_ranker_free(CfcRanker ranker) { delete as_ranker(ranker); }
void cfc_lists_free(CfcLists lists) { delete as_lists(lists); }

int cfc_observation_prob(int position, double eta, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = cfc::observation_prob(position, eta);
  });
}

int cfc_relevance_prob(int rel, int rel_max, double eps_noise, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = cfc::relevance_prob(rel, rel_max, eps_noise);
  });
}

int cfc_simulate_clicks(CfcLists lists, CfcDataset data, double eta,
                        double eps_noise, int passes, uint64_t seed,
                        CfcClicks* out) {
  return guarded([&] {
    require(lists && data && out, "null argument");
    cfc::SimConfig cfg;
    cfg.eta = eta;
    cfg.eps_noise = eps_noise;
    cfg.passes = passes;
    cfg.seed = seed;
    *out = new cfc::ClickLog(
        cfc::simulate_clicks(*as_lists(lists), *as_dataset(data), cfg));
  });
}

int cfc_clicks_save(CfcClicks clicks, CfcDataset data, const char* path) {
  return guarded([&] {
    require(clicks && data && path, "null argument");
    cfc::save_click_log(*as_clicks(clicks), *as_dataset(data), path);
  });
}

int cfc_clicks_load(const char* path, CfcDataset data, CfcClicks* out) {
  return guarded([&] {
    require(path && data && out, "null argument");
    *out = new cfc::ClickLog(cfc::load_click_log(path, *as_dataset(data)));
  });
}

int cfc_clicks_lists(CfcClicks clicks, CfcLists* out) {
  return guarded([&] {
    require(clicks && out, "null argument");
    *out = new cfc::RankedLists(cfc::lists_from_click_log(*as_clicks(clicks)));
  });
}

void cfc_clicks_free(CfcClicks clicks) { delete as_clicks(clicks); }

int cfc_first_stage_fit(CfcDataset data, CfcLists lists, const char* kind,
                        double lambda, int gbdt_trees, double gbdt_learning_rate,
                        int gbdt_max_leaves, int gbdt_min_data, uint64_t seed,
                        CfcFirstStage* out) {
  return guarded([&] {
    require(data && lists && kind && out, "null argument");
    cfc::FirstStageParams params;
    params.kind = cfc::first_stage_kind_from_name(kind);
    params.lambda = lambda < 0.0 ? std::numeric_limits<double>::quiet_NaN() : lambda;
    params.gbdt = make_params(gbdt_trees, gbdt_learning_rate, gbdt_max_leaves,
                              gbdt_min_data, 10, seed);
    params.seed = seed;
    *out = new cfc::FirstStageModel(
        cfc::fit_first_stage(*as_dataset(data), *as_lists(lists), params));
  });
}

int cfc_first_stage_save(CfcFirstStage model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    cfc::save_first_stage(*as_first_stage(model), path);
  });
}

int cfc_first_stage_load(const char* path, CfcFirstStage* out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new cfc::FirstStageModel(cfc::load_first_stage(path));
  });
}

int cfc_first_stage_residuals(CfcFirstStage model, CfcDataset data,
                              CfcLists lists, CfcResiduals* out) {
  return guarded([&] {
    require(model && data && lists && out, "null argument");
    *out = new cfc::ResidualSet(
        cfc::residuals(*as_first_stage(model), *as_dataset(data), *as_lists(lists)));
  });
}

void cfc_first_stage_free(CfcFirstStage model) { delete as_first_stage(model); }

int cfc_residuals_save(CfcResiduals residuals, CfcDataset data, const char* path) {
  return guarded([&] {
    require(residuals && data && path, "null argument");
    cfc::save_residuals(*as_residuals(residuals), *as_dataset(data), path);
  });
}

int cfc_residuals_load(const char* path, CfcDataset data, CfcResiduals* out) {
  return guarded([&] {
    require(path && data && out, "null argument");
    *out = new cfc::ResidualSet(cfc::load_residuals(path, *as_dataset(data)));
  });
}

void cfc_residuals_free(CfcResiduals residuals) { delete as_residuals(residuals); }

int cfc_fligner_killeen(const double* values, const size_t* group_sizes,
                        size_t n_groups, double* statistic, int* dof,
                        double* p_value) {
  return guarded([&] {
    require(values && group_sizes && statistic && dof && p_value, "null argument");
    std::vector<std::vector<double>> groups;
    std::size_t offset = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
      groups.emplace_back(values + offset, values + offset + group_sizes[g]);
      offset += group_sizes[g];
    }
    const cfc::FlignerKilleenResult r = cfc::fligner_killeen(groups);
    *statistic = r.statistic;
    *dof = r.dof;
    *p_value = r.p_value;
  });
}

int cfc_heteroskedasticity(CfcResiduals residuals, int n_bins, double* statistic,
                           int* dof, double* p_value) {
  return guarded([&] {
    require(residuals && statistic && dof && p_value, "null argument");
    const cfc::FlignerKilleenResult r =
        cfc::heteroskedasticity_report(*as_residuals(residuals), n_bins);
    *statistic = r.statistic;
    *dof = r.dof;
    *p_value = r.p_value;
  });
}

int cfc_transform_fit(const char* kind, CfcResiduals residuals, CfcTransform* out) {
  return guarded([&] {
    require(kind && residuals && out, "null argument");
    *out = new cfc::FittedTransform(cfc::fit_transform(
        cfc::transform_kind_from_name(kind), as_residuals(residuals)->flat()));
  });
}

int cfc_transform_save(CfcTransform transform, const char* path) {
  return guarded([&] {
    require(transform && path, "null argument");
    cfc::save_transform(*as_transform(transform), path);
  });
}

int cfc_transform_load(const char* path, CfcTransform* out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new cfc::FittedTransform(cfc::load_transform(path));
  });
}

int cfc_transform_value(CfcTransform transform, double value, double* out) {
  return guarded([&] {
    require(transform && out, "null argument");
    *out = cfc::transform(*as_transform(transform), value);
  });
}

int cfc_transform_apply(CfcTransform transform, CfcResiduals residuals,
                        CfcSignals* out) {
  return guarded([&] {
    require(transform && residuals && out, "null argument");
    *out = new cfc::ControlSignals(
        cfc::apply_fitted(*as_transform(transform), *as_residuals(residuals)));
  });
}

void cfc_transform_free(CfcTransform transform) { delete as_transform(transform); }

int cfc_signals_save(CfcSignals signals, CfcDataset data, const char* path) {
  return guarded([&] {
    require(signals && data && path, "null argument");
    cfc::save_signals(*as_signals(signals), *as_dataset(data), path);
  });
}

int cfc_signals_load(const char* path, CfcDataset data, CfcSignals* out) {
  return guarded([&] {
    require(path && data && out, "null argument");
    *out = new cfc::ControlSignals(cfc::load_signals(path, *as_dataset(data)));
  });
}

void cfc_signals_free(CfcSignals signals) { delete as_signals(signals); }

int cfc_normal_cdf(double z, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = cfc::normal_cdf(z);
  });
}

int cfc_train_lambdamart(CfcDataset data, CfcClicks clicks, CfcSignals signals,
                         int n_trees, double learning_rate, int max_leaves,
                         int min_data_in_leaf, int ndcg_cutoff, uint64_t seed,
                         CfcModel* out) {
  return guarded([&] {
    require(data && clicks && out, "null argument");
    const cfc::gbdt::TrainParams params = make_params(
        n_trees, learning_rate, max_leaves, min_data_in_leaf, ndcg_cutoff, seed);
    const std::vector<std::vector<double>>* values =
        signals ? &as_signals(signals)->values : nullptr;
    *out = new cfc::gbdt::Ensemble(cfc::gbdt::train_lambdamart(
        *as_dataset(data), *as_clicks(clicks), values, params));
  });
}

int cfc_train_oracle(CfcDataset data, int n_trees, double learning_rate,
                     int max_leaves, int min_data_in_leaf, int ndcg_cutoff,
                     uint64_t seed, CfcModel* out) {
  return guarded([&] {
    require(data && out, "null argument");
    const cfc::gbdt::TrainParams params = make_params(
        n_trees, learning_rate, max_leaves, min_data_in_leaf, ndcg_cutoff, seed);
    *out = new cfc::gbdt::Ensemble(cfc::gbdt::train_on_relevance(*as_dataset(data), params));
  });
}

int cfc_model_save(CfcModel model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    cfc::gbdt::save_ensemble(*as_model(model), path);
  });
}

int cfc_model_load(const char* path, CfcModel* out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new cfc::gbdt::Ensemble(cfc::gbdt::load_ensemble(path));
  });
}

int cfc_model_predict(CfcModel model, const double* features, size_t n_features,
                      double control, double* out) {
  return guarded([&] {
    require(model && features && out, "null argument");
    const std::vector<double> f(features, features + n_features);
    *out = as_model(model)->predict(f, control);
  });
}

int cfc_model_info(CfcModel model, int* input_dim, size_t* n_trees) {
  return guarded([&] {
    require(model != nullptr, "null argument");
    if (input_dim) *input_dim = as_model(model)->input_dim;
    if (n_trees) *n_trees = as_model(model)->trees.size();
  });
}

void cfc_model_free(CfcModel model) { delete as_model(model); }

int cfc_ndcg_at(const double* ranked_gains, const double* ideal_gains, size_t n,
                int cutoff, double* out, int* skipped) {
  return guarded([&] {
    require(ranked_gains && ideal_gains && out, "null argument");
    const std::vector<double> ranked(ranked_gains, ranked_gains + n);
    const std::vector<double> ideal(ideal_gains, ideal_gains + n);
    const auto v = cfc::ndcg_at(ranked, ideal, cutoff);
    if (skipped) *skipped = v.has_value() ? 0 : 1;
    *out = v.value_or(0.0);
  });
}

int cfc_err_at(const int* ranked_rels, size_t n, int cutoff, int rel_max,
               double* out) {
  return guarded([&] {
    require(ranked_rels && out, "null argument");
    const std::vector<int> rels(ranked_rels, ranked_rels + n);
    *out = cfc::err_at(rels, cutoff, rel_max);
  });
}

int cfc_evaluate(CfcModel model, CfcDataset data, const int* cutoffs,
                 size_t n_cutoffs, const char* csv_path, const char* json_path) {
  return guarded([&] {
    require(model && data && cutoffs && n_cutoffs > 0 && csv_path, "null argument");
    cfc::MetricConfig cfg;
    cfg.cutoffs.assign(cutoffs, cutoffs + n_cutoffs);
    cfg.rel_max = as_dataset(data)->rel_max;
    const cfc::EvalReport report = cfc::evaluate(*as_model(model), *as_dataset(data), cfg);
    cfc::save_report_csv(report, csv_path);
    if (json_path) cfc::save_report_json(report, json_path);
  });
}

int cfc_evaluate_mean(CfcModel model, CfcDataset data, const char* metric,
                      int cutoff, double* out) {
  return guarded([&] {
    require(model && data && metric && out, "null argument");
    cfc::MetricConfig cfg;
    cfg.cutoffs = {cutoff};
    cfg.rel_max = as_dataset(data)->rel_max;
    const cfc::EvalReport report = cfc::evaluate(*as_model(model), *as_dataset(data), cfg);
    *out = report.at(metric, cutoff).mean;
  });
}

int cfc_fisher_test(const double* per_query_a, const double* per_query_b,
                    size_t n, int n_permutations, uint64_t seed, double* p_value) {
  return guarded([&] {
    require(per_query_a && per_query_b && p_value, "null argument");
    const std::vector<double> a(per_query_a, per_query_a + n);
    const std::vector<double> b(per_query_b, per_query_b + n);
    *p_value = cfc::fisher_randomization(a, b, n_permutations, seed);
  });
}

int cfc_debias_validation(CfcSignals train_signals, CfcClicks train_clicks,
                          CfcSignals valid_signals, CfcClicks valid_clicks,
                          double lambda, double* slope, double* intercept,
                          const char* proxy_tsv_path, CfcDataset valid_data) {
  return guarded([&] {
    require(train_signals && train_clicks && valid_signals && valid_clicks,
            "null argument");
    cfc::DebiasModel model;
    const cfc::ProxyRelevance proxy = cfc::debias_validation_clicks(
        *as_signals(train_signals), *as_clicks(train_clicks),
        *as_signals(valid_signals), *as_clicks(valid_clicks), lambda, &model);
    if (slope) *slope = model.slope;
    if (intercept) *intercept = model.intercept;
    if (proxy_tsv_path) {
      require(valid_data != nullptr, "valid_data required to write proxy values");
      const cfc::Dataset& d = *as_dataset(valid_data);
      require(proxy.values.size() == d.queries.size(),
              "valid_data does not match the signals");
      std::ofstream out(proxy_tsv_path);
      if (!out) throw cfc::DataError(std::string("cannot open file for writing: ") + proxy_tsv_path);
      out << "query_id\tdoc_id\tproxy_relevance\n";
      char buf[64];
      for (std::size_t qi = 0; qi < d.queries.size(); ++qi) {
        for (std::size_t di = 0; di < d.queries[qi].documents.size(); ++di) {
          std::snprintf(buf, sizeof(buf), "%.17g", proxy.values[qi][di]);
          out << d.queries[qi].query_id << '\t' << d.queries[qi].documents[di].doc_id
              << '\t' << buf << '\n';
        }
      }
    }
  });
}

int cfc_tune(CfcDataset train, CfcDataset valid, CfcClicks train_clicks,
             CfcClicks valid_clicks, CfcResiduals train_residuals,
             CfcResiduals valid_residuals, const char* transforms,
             const char* trees, const char* learning_rates,
             const char* validation, int max_leaves, int min_data_in_leaf,
             int ndcg_cutoff, double debias_lambda, uint64_t seed,
             const char* report_csv_path, CfcModel* best) {
  return guarded([&] {
    require(train && valid && train_clicks && valid_clicks && train_residuals &&
                valid_residuals && transforms && trees && learning_rates &&
                validation && best,
            "null argument");
    cfc::TuneGrid grid;
    grid.transforms.clear();
    for (const auto& t : split_csv(transforms)) {
      grid.transforms.push_back(cfc::transform_kind_from_name(t));
    }
    grid.n_trees.clear();
    for (const auto& t : split_csv(trees)) grid.n_trees.push_back(std::stoi(t));
    grid.learning_rates.clear();
    for (const auto& t : split_csv(learning_rates)) {
      grid.learning_rates.push_back(std::stod(t));
    }
    grid.validation = cfc::validation_mode_from_name(validation);

    cfc::TuneInputs inputs;
    inputs.train = as_dataset(train);
    inputs.valid = as_dataset(valid);
    inputs.train_clicks = as_clicks(train_clicks);
    inputs.valid_clicks = as_clicks(valid_clicks);
    inputs.train_residuals = as_residuals(train_residuals);
    inputs.valid_residuals = as_residuals(valid_residuals);

    cfc::gbdt::TrainParams base = make_params(1, 0.1, max_leaves, min_data_in_leaf,
                                              ndcg_cutoff, seed);
    cfc::TuneResult result = cfc::tune_and_train(inputs, grid, base, debias_lambda);

    if (report_csv_path) {
      std::ofstream out(report_csv_path);
      if (!out) throw cfc::DataError(std::string("cannot open file for writing: ") + report_csv_path);
      out << "transform,trees,learning_rate,status,valid_ndcg_true,valid_ndcg_debiased,"
             "valid_ndcg_biased,selected\n";
      for (std::size_t i = 0; i < result.report.configs.size(); ++i) {
        const auto& c = result.report.configs[i];
        out << cfc::transform_kind_name(c.transform) << ',' << c.n_trees << ','
            << c.learning_rate << ',' << (c.failed ? "failed" : "ok") << ','
            << c.valid_ndcg[0] << ',' << c.valid_ndcg[1] << ',' << c.valid_ndcg[2]
            << ',' << (static_cast<int>(i) == result.report.best_index ? 1 : 0)
            << '\n';
      }
    }
    *best = new cfc::gbdt::Ensemble(std::move(result.model));
  });
}

int cfc_run_experiment(const char* config_path, const char* out_dir) {
  return guarded([&] {
    require(config_path != nullptr, "null argument");
    cfc::ExperimentConfig cfg = cfc::load_experiment_config(config_path);
    if (out_dir) cfg.out_dir = out_dir;
    if (cfg.out_dir.empty()) {
      throw std::invalid_argument("experiment needs an output directory");
    }
    const cfc::ExperimentReport report = cfc::run_experiment(cfg);
    cfc::write_experiment_outputs(report, cfg);
  });
}

}  // extern "C"
