// Command-line front end for the cfc library. Every subcommand maps onto
// the C API; outputs go to files or stdout, logs to stderr.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfc/c_api.h"

namespace {

struct CliError {
  int exit_code;
};

// Raises with the library's error message; CFC_ERR_ARG maps to a usage
// failure, everything else to a data failure.
void check(int rc) {
  if (rc == CFC_OK) return;
  std::fprintf(stderr, "error: %s\n", cfc_get_last_error());
  throw CliError{rc == CFC_ERR_ARG ? 1 : 2};
}

struct DatasetGuard {
  CfcDataset h = nullptr;
  ~DatasetGuard() { cfc_dataset_free(h); }
};
struct StatsGuard {
  CfcFeatureStats h = nullptr;
  ~StatsGuard() { cfc_normalizer_free(h); }
};
struct RankerGuard {
  CfcRanker h = nullptr;
  ~RankerGuard() { cfc_ranker_free(h); }
};
struct ListsGuard {
  CfcLists h = nullptr;
  ~ListsGuard() { cfc_lists_free(h); }
};
struct ClicksGuard {
  CfcClicks h = nullptr;
  ~ClicksGuard() { cfc_clicks_free(h); }
};
struct FirstStageGuard {
  CfcFirstStage h = nullptr;
  ~FirstStageGuard() { cfc_first_stage_free(h); }
};
struct ResidualsGuard {
  CfcResiduals h = nullptr;
  ~ResidualsGuard() { cfc_residuals_free(h); }
};
struct TransformGuard {
  CfcTransform h = nullptr;
  ~TransformGuard() { cfc_transform_free(h); }
};
struct SignalsGuard {
  CfcSignals h = nullptr;
  ~SignalsGuard() { cfc_signals_free(h); }
};
struct ModelGuard {
  CfcModel h = nullptr;
  ~ModelGuard() { cfc_model_free(h); }
};

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-function correction for position bias in learning-to-rank"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "cap on worker threads (0 = all cores); results are identical "
                 "for any setting");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic LETOR dataset");
  int sy_queries = 200, sy_docs = 20, sy_features = 10;
  std::uint64_t sy_seed = 1;
  std::string sy_out;
  synth->add_option("--queries", sy_queries, "number of queries")->capture_default_str();
  synth->add_option("--docs", sy_docs, "documents per query")->capture_default_str();
  synth->add_option("--features", sy_features, "feature dimension")->capture_default_str();
  synth->add_option("--seed", sy_seed, "generator seed")->capture_default_str();
  synth->add_option("--out", sy_out, "output LETOR file")->required();

  // ---- parse-check ----
  auto* parse = app.add_subcommand("parse-check", "parse a LETOR file and report its shape");
  std::string pc_data, pc_stats_out;
  parse->add_option("--data", pc_data, "LETOR file")->required();
  parse->add_option("--stats-out", pc_stats_out, "write min-max normalizer stats here");

  // ---- simulate ----
  auto* simulate = app.add_subcommand(
      "simulate", "log rankings with an initial ranker and simulate position-biased clicks");
  std::string sim_data, sim_out, sim_rest_out, sim_save_ranker, sim_load_ranker;
  double sim_eta = 1.0, sim_noise = 0.0, sim_init_fraction = 0.01, sim_step = 0.1;
  int sim_passes = 10, sim_epochs = 20;
  std::uint64_t sim_seed = 1;
  simulate->add_option("--data", sim_data, "LETOR file")->required();
  simulate->add_option("--eta", sim_eta, "position bias severity")->capture_default_str();
  simulate->add_option("--noise", sim_noise, "click noise floor")->capture_default_str();
  simulate->add_option("--passes", sim_passes, "passes over the data")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "simulation seed")->capture_default_str();
  simulate->add_option("--init-fraction", sim_init_fraction,
                       "fraction of queries used to train the initial ranker")
      ->capture_default_str();
  simulate->add_option("--epochs", sim_epochs, "initial ranker epochs")->capture_default_str();
  simulate->add_option("--step", sim_step, "initial ranker step size")->capture_default_str();
  simulate->add_option("--load-ranker", sim_load_ranker,
                       "use this ranker and simulate over every query of --data");
  simulate->add_option("--save-ranker", sim_save_ranker, "write the trained initial ranker");
  simulate->add_option("--rest-out", sim_rest_out,
                       "write the clicked (non-initial) split as a LETOR file");
  simulate->add_option("--out", sim_out, "click log TSV")->required();

  // ---- first-stage ----
  auto* first = app.add_subcommand("first-stage",
                                   "fit the position model and write residuals");
  std::string fs_data, fs_clicks, fs_kind = "ridge", fs_lambda = "auto", fs_out,
              fs_model_out, fs_model_in;
  int fs_gbdt_trees = 100, fs_gbdt_leaves = 31, fs_gbdt_min_data = 20;
  double fs_gbdt_lr = 0.1;
  std::uint64_t fs_seed = 1;
  first->add_option("--data", fs_data, "LETOR file")->required();
  first->add_option("--clicks", fs_clicks, "click log TSV carrying logged positions")->required();
  first->add_option("--kind", fs_kind, "ridge | gbdt-regression")->capture_default_str();
  first->add_option("--lambda", fs_lambda,
                    "ridge penalty, or 'auto' for a held-out grid")
      ->capture_default_str();
  first->add_option("--gbdt-trees", fs_gbdt_trees)->capture_default_str();
  first->add_option("--gbdt-learning-rate", fs_gbdt_lr)->capture_default_str();
  first->add_option("--gbdt-leaves", fs_gbdt_leaves)->capture_default_str();
  first->add_option("--gbdt-min-data", fs_gbdt_min_data)->capture_default_str();
  first->add_option("--seed", fs_seed)->capture_default_str();
  first->add_option("--model-in", fs_model_in, "reuse a fitted first-stage model");
  first->add_option("--model-out", fs_model_out, "write the fitted first-stage model");
  first->add_option("--out", fs_out, "residual TSV")->required();

  // ---- het-test ----
  auto* het = app.add_subcommand("het-test",
                                 "Fligner-Killeen heteroskedasticity check on residuals");
  std::string ht_residuals, ht_data;
  int ht_bins = 10;
  het->add_option("--residuals", ht_residuals, "residual TSV")->required();
  het->add_option("--data", ht_data, "LETOR file the residuals refer to")->required();
  het->add_option("--bins", ht_bins, "equal-frequency bins of predicted position")
      ->capture_default_str();

  // ---- transform ----
  auto* transform = app.add_subcommand("transform", "turn residuals into control signals");
  std::string tr_residuals, tr_data, tr_kind = "auto", tr_out, tr_fit_out, tr_fit_in;
  transform->add_option("--residuals", tr_residuals, "residual TSV")->required();
  transform->add_option("--data", tr_data, "LETOR file the residuals refer to")->required();
  transform->add_option("--transform", tr_kind,
                        "minmax | pdf | imr | kde-hazard | auto (auto defers to `tune`)")
      ->capture_default_str();
  transform->add_option("--fit-in", tr_fit_in, "apply a transform fitted elsewhere");
  transform->add_option("--fit-out", tr_fit_out, "write the fitted transform");
  transform->add_option("--out", tr_out, "control signal TSV")->required();

  // ---- train ----
  auto* train = app.add_subcommand("train", "train the click ranker");
  std::string train_data, train_clicks, train_signals, train_out;
  int t_trees = 100, t_leaves = 255, t_min_data = 2, t_cutoff = 10;
  double t_lr = 0.1;
  std::uint64_t t_seed = 1;
  bool t_on_relevance = false;
  train->add_option("--data", train_data, "LETOR file")->required();
  train->add_option("--clicks", train_clicks, "click log TSV (not used with --on-relevance)");
  train->add_option("--signals", train_signals,
                    "control signal TSV; omit for the biased baseline");
  train->add_flag("--on-relevance", t_on_relevance,
                  "train on true relevance labels instead of clicks");
  train->add_option("--trees", t_trees)->capture_default_str();
  train->add_option("--learning-rate", t_lr)->capture_default_str();
  train->add_option("--leaves", t_leaves)->capture_default_str();
  train->add_option("--min-data", t_min_data)->capture_default_str();
  train->add_option("--cutoff", t_cutoff, "NDCG truncation for the pairwise objective")
      ->capture_default_str();
  train->add_option("--seed", t_seed)->capture_default_str();
  train->add_option("--out", train_out, "model JSON")->required();

  // ---- evaluate ----
  auto* evaluate = app.add_subcommand("evaluate", "score a model against true relevance");
  std::string ev_data, ev_model, ev_out, ev_json;
  std::vector<int> ev_cutoffs{5, 10, 15};
  evaluate->add_option("--data", ev_data, "LETOR file")->required();
  evaluate->add_option("--model", ev_model, "model JSON")->required();
  evaluate->add_option("--cutoffs", ev_cutoffs, "metric cutoffs")->capture_default_str();
  evaluate->add_option("--out", ev_out, "report CSV")->required();
  evaluate->add_option("--per-query", ev_json, "per-query JSON for significance tests");

  // ---- debias-valid ----
  auto* debias = app.add_subcommand("debias-valid",
                                    "debias validation clicks into proxy relevance");
  std::string db_train_signals, db_train_clicks, db_train_data;
  std::string db_valid_signals, db_valid_clicks, db_valid_data, db_out;
  double db_lambda = 1e-3;
  debias->add_option("--train-signals", db_train_signals)->required();
  debias->add_option("--train-clicks", db_train_clicks)->required();
  debias->add_option("--train-data", db_train_data)->required();
  debias->add_option("--valid-signals", db_valid_signals)->required();
  debias->add_option("--valid-clicks", db_valid_clicks)->required();
  debias->add_option("--valid-data", db_valid_data)->required();
  debias->add_option("--lambda", db_lambda, "ridge penalty of the debias fit")
      ->capture_default_str();
  debias->add_option("--out", db_out, "proxy relevance TSV")->required();

  // ---- tune ----
  auto* tune = app.add_subcommand(
      "tune", "grid-search transform and ranker settings by validation loss");
  std::string tn_train_data, tn_valid_data, tn_train_clicks, tn_valid_clicks;
  std::string tn_train_residuals, tn_valid_residuals, tn_model_out, tn_report_out;
  std::vector<std::string> tn_transforms{"minmax", "pdf", "imr", "kde-hazard"};
  std::vector<std::string> tn_trees{"100", "300", "500"};
  std::vector<std::string> tn_rates{"0.05", "0.1"};
  std::string tn_validation = "debiased-clicks";
  int tn_leaves = 255, tn_min_data = 2, tn_cutoff = 10;
  double tn_debias_lambda = 1e-3;
  std::uint64_t tn_seed = 1;
  tune->add_option("--train-data", tn_train_data)->required();
  tune->add_option("--valid-data", tn_valid_data)->required();
  tune->add_option("--train-clicks", tn_train_clicks)->required();
  tune->add_option("--valid-clicks", tn_valid_clicks)->required();
  tune->add_option("--train-residuals", tn_train_residuals)->required();
  tune->add_option("--valid-residuals", tn_valid_residuals)->required();
  tune->add_option("--transforms", tn_transforms, "transform grid")->capture_default_str();
  tune->add_option("--trees", tn_trees, "tree count grid")->capture_default_str();
  tune->add_option("--learning-rates", tn_rates, "learning rate grid")->capture_default_str();
  tune->add_option("--validation", tn_validation,
                   "true-relevance | debiased-clicks | biased-clicks")
      ->capture_default_str();
  tune->add_option("--leaves", tn_leaves)->capture_default_str();
  tune->add_option("--min-data", tn_min_data)->capture_default_str();
  tune->add_option("--cutoff", tn_cutoff)->capture_default_str();
  tune->add_option("--debias-lambda", tn_debias_lambda)->capture_default_str();
  tune->add_option("--seed", tn_seed)->capture_default_str();
  tune->add_option("--model-out", tn_model_out, "best model JSON")->required();
  tune->add_option("--report-out", tn_report_out, "per-configuration CSV");

  // ---- experiment ----
  auto* experiment = app.add_subcommand("experiment", "run a full sweep from a config file");
  std::string ex_config, ex_out_dir;
  experiment->add_option("--config", ex_config, "key=value experiment config")->required();
  experiment->add_option("--out-dir", ex_out_dir, "output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    check(cfc_set_max_threads(threads));

    if (*synth) {
      DatasetGuard data;
      check(cfc_dataset_synth(sy_queries, sy_docs, sy_features, sy_seed, &data.h));
      check(cfc_dataset_save(data.h, sy_out.c_str()));
      std::printf("synth: wrote %d queries x %d docs (%d features) to %s\n",
                  sy_queries, sy_docs, sy_features, sy_out.c_str());
    } else if (*parse) {
      DatasetGuard data;
      check(cfc_dataset_load(pc_data.c_str(), &data.h));
      size_t n_queries = 0, n_docs = 0;
      int dim = 0, rel_max = 0;
      check(cfc_dataset_info(data.h, &n_queries, &n_docs, &dim, &rel_max));
      if (!pc_stats_out.empty()) {
        StatsGuard stats;
        check(cfc_normalizer_fit(data.h, &stats.h));
        check(cfc_normalizer_save(stats.h, pc_stats_out.c_str()));
      }
      std::printf("parse-check: %zu queries, %zu documents, %d features, rel_max %d\n",
                  n_queries, n_docs, dim, rel_max);
    } else if (*simulate) {
      DatasetGuard data;
      check(cfc_dataset_load(sim_data.c_str(), &data.h));
      RankerGuard ranker;
      DatasetGuard rest;
      CfcDataset clicked = data.h;
      if (!sim_load_ranker.empty()) {
        check(cfc_ranker_load(sim_load_ranker.c_str(), &ranker.h));
      } else {
        DatasetGuard sample;
        check(cfc_dataset_sample(data.h, sim_init_fraction, sim_seed, &sample.h, &rest.h));
        check(cfc_ranker_train(sample.h, sim_epochs, sim_step, sim_seed, &ranker.h));
        clicked = rest.h;
        if (!sim_rest_out.empty()) check(cfc_dataset_save(rest.h, sim_rest_out.c_str()));
      }
      if (!sim_save_ranker.empty()) check(cfc_ranker_save(ranker.h, sim_save_ranker.c_str()));
      ListsGuard lists;
      check(cfc_ranker_rank(ranker.h, clicked, &lists.h));
      ClicksGuard clicks;
      check(cfc_simulate_clicks(lists.h, clicked, sim_eta, sim_noise, sim_passes,
                                sim_seed, &clicks.h));
      check(cfc_clicks_save(clicks.h, clicked, sim_out.c_str()));
      size_t n_queries = 0, n_docs = 0;
      check(cfc_dataset_info(clicked, &n_queries, &n_docs, nullptr, nullptr));
      std::printf("simulate: %zu queries, %zu documents, %d passes -> %s\n",
                  n_queries, n_docs, sim_passes, sim_out.c_str());
    } else if (*first) {
      DatasetGuard data;
      check(cfc_dataset_load(fs_data.c_str(), &data.h));
      ClicksGuard clicks;
      check(cfc_clicks_load(fs_clicks.c_str(), data.h, &clicks.h));
      ListsGuard lists;
      check(cfc_clicks_lists(clicks.h, &lists.h));
      FirstStageGuard model;
      if (!fs_model_in.empty()) {
        check(cfc_first_stage_load(fs_model_in.c_str(), &model.h));
      } else {
        double lambda = -1.0;
        if (fs_lambda != "auto") {
          try {
            lambda = std::stod(fs_lambda);
          } catch (const std::exception&) {
            std::fprintf(stderr, "error: --lambda expects a number or 'auto'\n");
            return 1;
          }
        }
        check(cfc_first_stage_fit(data.h, lists.h, fs_kind.c_str(), lambda,
                                  fs_gbdt_trees, fs_gbdt_lr, fs_gbdt_leaves,
                                  fs_gbdt_min_data, fs_seed, &model.h));
      }
      if (!fs_model_out.empty()) check(cfc_first_stage_save(model.h, fs_model_out.c_str()));
      ResidualsGuard residuals;
      check(cfc_first_stage_residuals(model.h, data.h, lists.h, &residuals.h));
      check(cfc_residuals_save(residuals.h, data.h, fs_out.c_str()));
      std::printf("first-stage: %s residuals -> %s\n", fs_kind.c_str(), fs_out.c_str());
    } else if (*het) {
      DatasetGuard data;
      check(cfc_dataset_load(ht_data.c_str(), &data.h));
      ResidualsGuard residuals;
      check(cfc_residuals_load(ht_residuals.c_str(), data.h, &residuals.h));
      double statistic = 0.0, p_value = 0.0;
      int dof = 0;
      check(cfc_heteroskedasticity(residuals.h, ht_bins, &statistic, &dof, &p_value));
      std::printf("het-test: statistic %.6g, dof %d, p-value %.6g\n", statistic, dof, p_value);
    } else if (*transform) {
      if (tr_kind == "auto" && tr_fit_in.empty()) {
        std::fprintf(stderr,
                     "error: --transform auto defers transform selection to the "
                     "`tune` subcommand\n");
        return 1;
      }
      DatasetGuard data;
      check(cfc_dataset_load(tr_data.c_str(), &data.h));
      ResidualsGuard residuals;
      check(cfc_residuals_load(tr_residuals.c_str(), data.h, &residuals.h));
      TransformGuard fitted;
      if (!tr_fit_in.empty()) {
        check(cfc_transform_load(tr_fit_in.c_str(), &fitted.h));
      } else {
        check(cfc_transform_fit(tr_kind.c_str(), residuals.h, &fitted.h));
      }
      if (!tr_fit_out.empty()) check(cfc_transform_save(fitted.h, tr_fit_out.c_str()));
      SignalsGuard signals;
      check(cfc_transform_apply(fitted.h, residuals.h, &signals.h));
      check(cfc_signals_save(signals.h, data.h, tr_out.c_str()));
      std::printf("transform: %s signals -> %s\n",
                  tr_fit_in.empty() ? tr_kind.c_str() : "refit", tr_out.c_str());
    } else if (*train) {
      DatasetGuard data;
      check(cfc_dataset_load(train_data.c_str(), &data.h));
      ModelGuard model;
      if (t_on_relevance) {
        check(cfc_train_oracle(data.h, t_trees, t_lr, t_leaves, t_min_data,
                               t_cutoff, t_seed, &model.h));
      } else {
        if (train_clicks.empty()) {
          std::fprintf(stderr, "error: --clicks is required without --on-relevance\n");
          return 1;
        }
        ClicksGuard clicks;
        check(cfc_clicks_load(train_clicks.c_str(), data.h, &clicks.h));
        SignalsGuard signals;
        if (!train_signals.empty()) {
          check(cfc_signals_load(train_signals.c_str(), data.h, &signals.h));
        }
        check(cfc_train_lambdamart(data.h, clicks.h, signals.h, t_trees, t_lr,
                                   t_leaves, t_min_data, t_cutoff, t_seed, &model.h));
      }
      check(cfc_model_save(model.h, train_out.c_str()));
      size_t n_trees = 0;
      check(cfc_model_info(model.h, nullptr, &n_trees));
      std::printf("train: %zu trees -> %s\n", n_trees, train_out.c_str());
    } else if (*evaluate) {
      DatasetGuard data;
      check(cfc_dataset_load(ev_data.c_str(), &data.h));
      ModelGuard model;
      check(cfc_model_load(ev_model.c_str(), &model.h));
      check(cfc_evaluate(model.h, data.h, ev_cutoffs.data(), ev_cutoffs.size(),
                         ev_out.c_str(), ev_json.empty() ? nullptr : ev_json.c_str()));
      double ndcg10 = 0.0;
      const int probe_cutoff = ev_cutoffs.front();
      check(cfc_evaluate_mean(model.h, data.h, "ndcg", probe_cutoff, &ndcg10));
      std::printf("evaluate: ndcg@%d %.6f -> %s\n", probe_cutoff, ndcg10, ev_out.c_str());
    } else if (*debias) {
      DatasetGuard train_d, valid_d;
      check(cfc_dataset_load(db_train_data.c_str(), &train_d.h));
      check(cfc_dataset_load(db_valid_data.c_str(), &valid_d.h));
      ClicksGuard train_c, valid_c;
      check(cfc_clicks_load(db_train_clicks.c_str(), train_d.h, &train_c.h));
      check(cfc_clicks_load(db_valid_clicks.c_str(), valid_d.h, &valid_c.h));
      SignalsGuard train_s, valid_s;
      check(cfc_signals_load(db_train_signals.c_str(), train_d.h, &train_s.h));
      check(cfc_signals_load(db_valid_signals.c_str(), valid_d.h, &valid_s.h));
      double slope = 0.0, intercept = 0.0;
      check(cfc_debias_validation(train_s.h, train_c.h, valid_s.h, valid_c.h,
                                  db_lambda, &slope, &intercept, db_out.c_str(),
                                  valid_d.h));
      std::printf("debias-valid: slope %.6g intercept %.6g -> %s\n", slope,
                  intercept, db_out.c_str());
    } else if (*tune) {
      DatasetGuard train_d, valid_d;
      check(cfc_dataset_load(tn_train_data.c_str(), &train_d.h));
      check(cfc_dataset_load(tn_valid_data.c_str(), &valid_d.h));
      ClicksGuard train_c, valid_c;
      check(cfc_clicks_load(tn_train_clicks.c_str(), train_d.h, &train_c.h));
      check(cfc_clicks_load(tn_valid_clicks.c_str(), valid_d.h, &valid_c.h));
      ResidualsGuard train_r, valid_r;
      check(cfc_residuals_load(tn_train_residuals.c_str(), train_d.h, &train_r.h));
      check(cfc_residuals_load(tn_valid_residuals.c_str(), valid_d.h, &valid_r.h));
      ModelGuard best;
      check(cfc_tune(train_d.h, valid_d.h, train_c.h, valid_c.h, train_r.h, valid_r.h,
                     join(tn_transforms).c_str(), join(tn_trees).c_str(),
                     join(tn_rates).c_str(), tn_validation.c_str(), tn_leaves,
                     tn_min_data, tn_cutoff, tn_debias_lambda, tn_seed,
                     tn_report_out.empty() ? nullptr : tn_report_out.c_str(), &best.h));
      check(cfc_model_save(best.h, tn_model_out.c_str()));
      size_t n_trees = 0;
      check(cfc_model_info(best.h, nullptr, &n_trees));
      std::printf("tune: best model (%zu trees, %s validation) -> %s\n", n_trees,
                  tn_validation.c_str(), tn_model_out.c_str());
    } else if (*experiment) {
      check(cfc_run_experiment(ex_config.c_str(),
                               ex_out_dir.empty() ? nullptr : ex_out_dir.c_str()));
      std::printf("experiment: outputs under %s\n",
                  ex_out_dir.empty() ? "config out_dir" : ex_out_dir.c_str());
    }
  } catch (const CliError& e) {
    return e.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
