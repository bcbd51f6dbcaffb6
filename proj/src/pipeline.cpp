#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "common.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace cfc {

const char* validation_mode_name(ValidationMode mode) {
  switch (mode) {
    case ValidationMode::TrueRelevance:
      return "true-relevance";
    case ValidationMode::DebiasedClicks:
      return "debiased-clicks";
    case ValidationMode::BiasedClicks:
      return "biased-clicks";
  }
  return "debiased-clicks";
}

ValidationMode validation_mode_from_name(const std::string& name) {
  if (name == "true-relevance" || name == "true") return ValidationMode::TrueRelevance;
  if (name == "debiased-clicks" || name == "dc") return ValidationMode::DebiasedClicks;
  if (name == "biased-clicks" || name == "bc") return ValidationMode::BiasedClicks;
  throw std::invalid_argument("unknown validation mode: " + name);
}

namespace {

void check_coverage(const std::vector<std::vector<double>>& values,
                    const ClickLog& clicks, const char* what) {
  if (values.size() != clicks.entries.size()) {
    throw std::invalid_argument(std::string(what) + ": coverage mismatch");
  }
  for (std::size_t qi = 0; qi < values.size(); ++qi) {
    if (values[qi].size() != clicks.entries[qi].size()) {
      throw std::invalid_argument(std::string(what) + ": coverage mismatch");
    }
  }
}

std::vector<std::vector<double>> click_rates(const ClickLog& clicks) {
  std::vector<std::vector<double>> rates(clicks.entries.size());
  for (std::size_t qi = 0; qi < clicks.entries.size(); ++qi) {
    rates[qi].reserve(clicks.entries[qi].size());
    for (const auto& e : clicks.entries[qi]) rates[qi].push_back(e.rate());
  }
  return rates;
}

}  // namespace

DebiasModel fit_debias_model(const ControlSignals& train_signals,
                             const ClickLog& train_clicks, double lambda) {
  check_coverage(train_signals.values, train_clicks, "fit_debias_model");
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (std::size_t qi = 0; qi < train_signals.values.size(); ++qi) {
    for (std::size_t di = 0; di < train_signals.values[qi].size(); ++di) {
      const double s = train_signals.values[qi][di];
      for (std::uint8_t bit : train_clicks.entries[qi][di].clicks) {
        x.push_back({s});
        y.push_back(static_cast<double>(bit));
      }
    }
  }
  if (x.size() < 2) throw std::invalid_argument("fit_debias_model: not enough pairs");

  DebiasModel model;
  model.lambda = lambda;
  try {
    const RidgeModel fit = fit_ridge(x, y, lambda);
    model.slope = fit.weights[0];
    model.intercept = fit.intercept;
  } catch (const DataError&) {
    // constant signals with lambda = 0: slope undefined, intercept-only fit
    model.slope = 0.0;
    model.intercept = mean(y);
  }
  return model;
}

ProxyRelevance debias_validation_clicks(const ControlSignals& train_signals,
                                        const ClickLog& train_clicks,
                                        const ControlSignals& valid_signals,
                                        const ClickLog& valid_clicks,
                                        double lambda, DebiasModel* model_out) {
  if (train_signals.kind != valid_signals.kind) {
    throw std::invalid_argument(
        "debias_validation_clicks: train/valid signals use different transforms");
  }
  check_coverage(valid_signals.values, valid_clicks, "debias_validation_clicks");
  const DebiasModel model = fit_debias_model(train_signals, train_clicks, lambda);
  if (model_out) *model_out = model;

  ProxyRelevance proxy;
  proxy.values.resize(valid_signals.values.size());
  for (std::size_t qi = 0; qi < valid_signals.values.size(); ++qi) {
    proxy.values[qi].reserve(valid_signals.values[qi].size());
    for (std::size_t di = 0; di < valid_signals.values[qi].size(); ++di) {
      const double predicted = model.predict(valid_signals.values[qi][di]);
      proxy.values[qi].push_back(valid_clicks.entries[qi][di].rate() - predicted);
    }
  }
  return proxy;
}

namespace {

gbdt::Ensemble truncate_ensemble(const gbdt::Ensemble& full, int n_trees) {
  gbdt::Ensemble out = full;
  out.trees.resize(static_cast<std::size_t>(n_trees));
  out.params.n_trees = n_trees;
  return out;
}

// Tie-break toward fewer trees, then smaller rate, then transform enum
// order; a strictly smaller loss always wins.
bool config_improves(const TuneConfigResult& cand, double cand_loss,
                     const TuneConfigResult& best, double best_loss,
                     bool have_best) {
  if (!have_best) return true;
  if (cand_loss != best_loss) return cand_loss < best_loss;
  if (cand.n_trees != best.n_trees) return cand.n_trees < best.n_trees;
  if (cand.learning_rate != best.learning_rate) {
    return cand.learning_rate < best.learning_rate;
  }
  return static_cast<int>(cand.transform) < static_cast<int>(best.transform);
}

}  // namespace

MultiTuneResult tune_multi(const TuneInputs& inputs, const TuneGrid& grid,
                           const std::vector<ValidationMode>& modes,
                           const gbdt::TrainParams& base_params,
                           double debias_lambda) {
  if (!inputs.train || !inputs.valid || !inputs.train_clicks ||
      !inputs.valid_clicks || !inputs.train_residuals || !inputs.valid_residuals) {
    throw std::invalid_argument("tune_multi: incomplete inputs");
  }
  if (grid.transforms.empty() || grid.n_trees.empty() || grid.learning_rates.empty()) {
    throw std::invalid_argument("tune_multi: empty grid");
  }
  if (modes.empty()) throw std::invalid_argument("tune_multi: no validation modes");

  std::vector<int> trees = grid.n_trees;
  std::sort(trees.begin(), trees.end());
  trees.erase(std::unique(trees.begin(), trees.end()), trees.end());
  if (trees.front() < 1) throw std::invalid_argument("tune_multi: n_trees must be >= 1");
  std::vector<double> rates = grid.learning_rates;
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end()), rates.end());

  const std::vector<std::vector<double>> biased_gains = click_rates(*inputs.valid_clicks);
  const int cutoff = base_params.ndcg_cutoff;

  MultiTuneResult result;

  struct PairOutcome {
    bool transform_ok = true;
    std::string error;
    FittedTransform fitted;
    ControlSignals train_sig;
    DebiasModel debias;
    ProxyRelevance proxy;
    gbdt::Ensemble full;
    std::vector<TuneConfigResult> configs;        // one per tree count
    std::vector<gbdt::Ensemble> models;           // aligned with configs
  };
  std::vector<std::pair<TransformKind, double>> pairs;
  for (TransformKind kind : grid.transforms) {
    for (double lr : rates) pairs.emplace_back(kind, lr);
  }
  std::vector<PairOutcome> outcomes(pairs.size());

  parallel_for(pairs.size(), [&](std::size_t pi) {
    const auto [kind, lr] = pairs[pi];
    PairOutcome& out = outcomes[pi];
    ControlSignals valid_sig;
    try {
      out.fitted = fit_transform(kind, inputs.train_residuals->flat());
      out.train_sig = apply_fitted(out.fitted, *inputs.train_residuals);
      valid_sig = apply_fitted(out.fitted, *inputs.valid_residuals);
      out.proxy = debias_validation_clicks(out.train_sig, *inputs.train_clicks,
                                           valid_sig, *inputs.valid_clicks,
                                           debias_lambda, &out.debias);
      gbdt::TrainParams params = base_params;
      params.n_trees = trees.back();
      params.learning_rate = lr;
      out.full = gbdt::train_lambdamart(*inputs.train, *inputs.train_clicks,
                                        &out.train_sig.values, params);
    } catch (const std::exception& e) {
      out.transform_ok = false;
      out.error = e.what();
    }
    for (int k : trees) {
      TuneConfigResult config;
      config.transform = kind;
      config.n_trees = k;
      config.learning_rate = lr;
      if (!out.transform_ok) {
        config.failed = true;
        config.error = out.error;
        out.configs.push_back(config);
        out.models.emplace_back();
        continue;
      }
      gbdt::Ensemble model = truncate_ensemble(out.full, k);
      const auto scores = score_dataset(model, *inputs.valid);
      MetricConfig mcfg;
      mcfg.cutoffs = {cutoff};
      mcfg.rel_max = inputs.valid->rel_max;
      config.valid_ndcg[static_cast<int>(ValidationMode::TrueRelevance)] =
          evaluate_scores(scores, *inputs.valid, mcfg).at("ndcg", cutoff).mean;
      config.valid_ndcg[static_cast<int>(ValidationMode::DebiasedClicks)] =
          mean_ndcg_with_gains(scores, out.proxy.values, *inputs.valid, cutoff);
      config.valid_ndcg[static_cast<int>(ValidationMode::BiasedClicks)] =
          mean_ndcg_with_gains(scores, biased_gains, *inputs.valid, cutoff);
      out.configs.push_back(config);
      out.models.push_back(std::move(model));
    }
    out.full.trees.clear();
  });

  struct Best {
    bool set = false;
    TuneConfigResult config;
    double loss = 0.0;
    int index = -1;
    const gbdt::Ensemble* model = nullptr;
    const PairOutcome* pair = nullptr;
  };
  std::map<ValidationMode, Best> best;
  for (ValidationMode m : modes) best[m] = Best{};

  for (std::size_t pi = 0; pi < outcomes.size(); ++pi) {
    PairOutcome& out = outcomes[pi];
    for (std::size_t ci = 0; ci < out.configs.size(); ++ci) {
      const TuneConfigResult& config = out.configs[ci];
      const int index = static_cast<int>(result.configs.size());
      result.configs.push_back(config);
      if (config.failed) continue;
      for (ValidationMode m : modes) {
        Best& b = best[m];
        const double loss = config.loss(m);
        if (config_improves(config, loss, b.config, b.loss, b.set)) {
          b.set = true;
          b.config = config;
          b.loss = loss;
          b.index = index;
          b.model = &out.models[ci];
          b.pair = &out;
        }
      }
    }
  }

  bool any_ok = false;
  std::string causes;
  for (const auto& c : result.configs) {
    if (!c.failed) {
      any_ok = true;
    } else if (causes.find(c.error) == std::string::npos) {
      if (!causes.empty()) causes += "; ";
      causes += c.error;
    }
  }
  if (!any_ok) {
    throw DataError("tune_multi: all configurations failed: " + causes);
  }

  for (ValidationMode m : modes) {
    const Best& b = best.at(m);
    TuneReport report;
    report.configs = result.configs;
    report.best_index = b.index;
    report.validation = m;
    report.best_loss = b.loss;
    result.reports[m] = std::move(report);
    result.models[m] = *b.model;
    result.fitted[m] = b.pair->fitted;
    result.debias[m] = b.pair->debias;
  }
  return result;
}

TuneResult tune_and_train(const TuneInputs& inputs, const TuneGrid& grid,
                          const gbdt::TrainParams& base_params,
                          double debias_lambda) {
  MultiTuneResult multi =
      tune_multi(inputs, grid, {grid.validation}, base_params, debias_lambda);
  TuneResult out;
  out.model = std::move(multi.models.at(grid.validation));
  out.report = std::move(multi.reports.at(grid.validation));
  out.fitted = multi.fitted.at(grid.validation);
  out.debias = multi.debias.at(grid.validation);
  return out;
}

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::None:
      return "none";
    case SweepAxis::Eta:
      return "eta";
    case SweepAxis::Passes:
      return "passes";
    case SweepAxis::Noise:
      return "noise";
    case SweepAxis::ValidQueries:
      return "valid-queries";
    case SweepAxis::FirstStageKind:
      return "first-stage-kind";
  }
  return "none";
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "none") return SweepAxis::None;
  if (name == "eta") return SweepAxis::Eta;
  if (name == "passes") return SweepAxis::Passes;
  if (name == "noise") return SweepAxis::Noise;
  if (name == "valid-queries") return SweepAxis::ValidQueries;
  if (name == "first-stage-kind") return SweepAxis::FirstStageKind;
  throw std::invalid_argument("unknown sweep axis: " + name);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw DataError("experiment config: bad number for " + key + ": " + v);
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw DataError("experiment config: expected integer for " + key + ": " + v);
  }
  return i;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("experiment config line " + std::to_string(line_no) +
                      ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "data") {
        if (value != "synth" && value != "letor") {
          throw DataError("experiment config: data must be synth or letor");
        }
        cfg.use_synth = value == "synth";
      } else if (key == "train_path") {
        cfg.train_path = value;
      } else if (key == "valid_path") {
        cfg.valid_path = value;
      } else if (key == "test_path") {
        cfg.test_path = value;
      } else if (key == "synth_train_queries") {
        cfg.synth_train_queries = to_int(key, value);
      } else if (key == "synth_valid_queries") {
        cfg.synth_valid_queries = to_int(key, value);
      } else if (key == "synth_test_queries") {
        cfg.synth_test_queries = to_int(key, value);
      } else if (key == "synth_docs_per_query") {
        cfg.synth_docs_per_query = to_int(key, value);
      } else if (key == "synth_feature_dim") {
        cfg.synth_feature_dim = to_int(key, value);
      } else if (key == "eta") {
        cfg.eta = to_double(key, value);
      } else if (key == "noise") {
        cfg.noise = to_double(key, value);
      } else if (key == "passes") {
        cfg.passes = to_int(key, value);
      } else if (key == "init_fraction") {
        cfg.init_fraction = to_double(key, value);
      } else if (key == "init_epochs") {
        cfg.init_epochs = to_int(key, value);
      } else if (key == "init_step") {
        cfg.init_step = to_double(key, value);
      } else if (key == "first_stage") {
        cfg.first_stage_kind = first_stage_kind_from_name(value);
      } else if (key == "first_stage_lambda") {
        cfg.first_stage_lambda = value == "auto"
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : to_double(key, value);
      } else if (key == "first_stage_trees") {
        cfg.first_stage_gbdt.n_trees = to_int(key, value);
      } else if (key == "first_stage_learning_rate") {
        cfg.first_stage_gbdt.learning_rate = to_double(key, value);
      } else if (key == "het_bins") {
        cfg.het_bins = to_int(key, value);
      } else if (key == "transforms") {
        cfg.grid.transforms.clear();
        for (const auto& t : split_list(value)) {
          cfg.grid.transforms.push_back(transform_kind_from_name(t));
        }
      } else if (key == "trees") {
        cfg.grid.n_trees.clear();
        for (const auto& t : split_list(value)) {
          cfg.grid.n_trees.push_back(to_int(key, t));
        }
      } else if (key == "learning_rates") {
        cfg.grid.learning_rates.clear();
        for (const auto& t : split_list(value)) {
          cfg.grid.learning_rates.push_back(to_double(key, t));
        }
      } else if (key == "validation") {
        cfg.grid.validation = validation_mode_from_name(value);
      } else if (key == "cfc_variants") {
        cfg.cfc_variants = split_list(value);
        for (const auto& v : cfg.cfc_variants) {
          if (v != "dc" && v != "bc" && v != "true") {
            throw DataError("experiment config: cfc_variants must be dc, bc or true");
          }
        }
      } else if (key == "ndcg_cutoff") {
        cfg.ranker.ndcg_cutoff = to_int(key, value);
      } else if (key == "max_leaves") {
        cfg.ranker.max_leaves = to_int(key, value);
      } else if (key == "min_data_in_leaf") {
        cfg.ranker.min_data_in_leaf = to_int(key, value);
      } else if (key == "debias_lambda") {
        cfg.debias_lambda = to_double(key, value);
      } else if (key == "axis") {
        cfg.axis = sweep_axis_from_name(value);
      } else if (key == "values") {
        cfg.axis_values.clear();
        cfg.axis_kinds = split_list(value);
        for (const auto& v : cfg.axis_kinds) {
          // kinds stay textual for first-stage sweeps; numeric axes parse below
          if (!v.empty() && (std::isdigit(static_cast<unsigned char>(v[0])) ||
                             v[0] == '.' || v[0] == '-')) {
            cfg.axis_values.push_back(to_double(key, v));
          }
        }
      } else if (key == "cutoffs") {
        cfg.cutoffs.clear();
        for (const auto& v : split_list(value)) cfg.cutoffs.push_back(to_int(key, v));
      } else if (key == "fisher_permutations") {
        cfg.fisher_permutations = to_int(key, value);
      } else if (key == "data_seed") {
        cfg.data_seed = static_cast<std::uint64_t>(to_int(key, value));
      } else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& v : split_list(value)) {
          cfg.seeds.push_back(static_cast<std::uint64_t>(to_int(key, v)));
        }
      } else if (key == "out_dir") {
        cfg.out_dir = value;
      } else if (key == "threads") {
        cfg.threads = to_int(key, value);
      } else {
        throw DataError("experiment config: unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw DataError("experiment config line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  if (!cfg.use_synth &&
      (cfg.train_path.empty() || cfg.valid_path.empty() || cfg.test_path.empty())) {
    throw DataError("experiment config: letor data needs train_path/valid_path/test_path");
  }
  if (cfg.axis != SweepAxis::None && cfg.axis_kinds.empty()) {
    throw DataError("experiment config: sweep axis without values");
  }
  if (cfg.seeds.empty()) throw DataError("experiment config: needs at least one seed");
  if (cfg.cfc_variants.empty()) cfg.cfc_variants = {"dc"};
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string metric_key(const std::string& method, const std::string& metric,
                       int cutoff) {
  return method + ":" + metric + "@" + std::to_string(cutoff);
}

namespace {

struct CellSetting {
  std::string label;
  double numeric = 0.0;
  std::string kind;
};

struct MethodRun {
  gbdt::Ensemble model;
  MethodSelection selection;
};

// Prefix-tuned ranker without control signals: one training per learning
// rate at the largest tree count, smaller counts evaluated as prefixes.
MethodRun tune_plain_ranker(const Dataset& train, const ClickLog& clicks,
                            const Dataset& valid,
                            const std::vector<std::vector<double>>* valid_gains,
                            bool relevance_labels, const TuneGrid& grid,
                            const gbdt::TrainParams& base) {
  std::vector<int> trees = grid.n_trees;
  std::sort(trees.begin(), trees.end());
  trees.erase(std::unique(trees.begin(), trees.end()), trees.end());
  std::vector<double> rates = grid.learning_rates;
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end()), rates.end());

  MethodRun best;
  bool have_best = false;
  double best_ndcg = 0.0;
  for (double lr : rates) {
    gbdt::TrainParams params = base;
    params.n_trees = trees.back();
    params.learning_rate = lr;
    const gbdt::Ensemble full =
        relevance_labels ? gbdt::train_on_relevance(train, params)
                         : gbdt::train_lambdamart(train, clicks, nullptr, params);
    for (int k : trees) {
      gbdt::Ensemble model = truncate_ensemble(full, k);
      const auto scores = score_dataset(model, valid);
      double ndcg = 0.0;
      if (valid_gains) {
        ndcg = mean_ndcg_with_gains(scores, *valid_gains, valid, base.ndcg_cutoff);
      } else {
        MetricConfig mcfg;
        mcfg.cutoffs = {base.ndcg_cutoff};
        mcfg.rel_max = valid.rel_max;
        ndcg = evaluate_scores(scores, valid, mcfg).at("ndcg", base.ndcg_cutoff).mean;
      }
      const bool improves =
          !have_best || ndcg > best_ndcg ||
          (ndcg == best_ndcg &&
           (k < best.selection.n_trees ||
            (k == best.selection.n_trees && lr < best.selection.learning_rate)));
      if (improves) {
        have_best = true;
        best_ndcg = ndcg;
        best.model = std::move(model);
        best.selection.n_trees = k;
        best.selection.learning_rate = lr;
        best.selection.has_transform = false;
      }
    }
  }
  return best;
}

Dataset slice_queries(const Dataset& data, std::size_t start, std::size_t count) {
  Dataset out;
  out.feature_dim = data.feature_dim;
  out.rel_max = data.rel_max;
  out.queries.assign(data.queries.begin() + static_cast<std::ptrdiff_t>(start),
                     data.queries.begin() + static_cast<std::ptrdiff_t>(start + count));
  return out;
}

SeedOutcome run_single(const ExperimentConfig& cfg, const CellSetting& cell,
                       std::uint64_t seed, const std::string& primary_method) {
  // effective settings for this cell
  double eta = cfg.eta;
  double noise = cfg.noise;
  int passes = cfg.passes;
  FirstStageKind fs_kind = cfg.first_stage_kind;
  std::size_t valid_query_cap = 0;
  switch (cfg.axis) {
    case SweepAxis::Eta:
      eta = cell.numeric;
      break;
    case SweepAxis::Passes:
      passes = static_cast<int>(cell.numeric);
      break;
    case SweepAxis::Noise:
      noise = cell.numeric;
      break;
    case SweepAxis::ValidQueries:
      valid_query_cap = static_cast<std::size_t>(cell.numeric);
      break;
    case SweepAxis::FirstStageKind:
      fs_kind = first_stage_kind_from_name(cell.kind);
      break;
    case SweepAxis::None:
      break;
  }

  // data: a nonzero data_seed pins one corpus and logging policy across
  // master seeds; data_seed = 0 regenerates them per master seed
  const std::uint64_t corpus_seed = cfg.data_seed != 0 ? cfg.data_seed : seed;
  Dataset train, valid, test;
  if (cfg.use_synth) {
    const int total = cfg.synth_train_queries + cfg.synth_valid_queries +
                      cfg.synth_test_queries;
    const Dataset all = synth_dataset(total, cfg.synth_docs_per_query,
                                      cfg.synth_feature_dim,
                                      derive_seed(corpus_seed, "synth"));
    train = slice_queries(all, 0, static_cast<std::size_t>(cfg.synth_train_queries));
    valid = slice_queries(all, static_cast<std::size_t>(cfg.synth_train_queries),
                          static_cast<std::size_t>(cfg.synth_valid_queries));
    test = slice_queries(all,
                         static_cast<std::size_t>(cfg.synth_train_queries +
                                                  cfg.synth_valid_queries),
                         static_cast<std::size_t>(cfg.synth_test_queries));
  } else {
    train = load_letor_file(cfg.train_path);
    valid = load_letor_file(cfg.valid_path);
    test = load_letor_file(cfg.test_path);
  }
  const FeatureStats stats = fit_normalizer(train);
  train = apply_normalizer(train, stats);
  valid = apply_normalizer(valid, stats);
  test = apply_normalizer(test, stats);

  // initial ranker on a small relevance-labeled sample; clicks are logged
  // over the remainder, which is also the second-stage training set. A
  // sample with no relevance disparity grows until it is trainable.
  SplitResult init_split;
  LinearRanker init_ranker;
  double fraction = cfg.init_fraction;
  for (;;) {
    init_split = sample_fraction(train, std::min(1.0, fraction),
                                 derive_seed(corpus_seed, "init-sample"));
    try {
      init_ranker = train_initial_ranker(init_split.sampled, cfg.init_epochs,
                                         cfg.init_step,
                                         derive_seed(corpus_seed, "init-train"));
      break;
    } catch (const DataError&) {
      if (fraction >= 1.0) throw;
      fraction *= 2.0;
    }
  }
  const Dataset& logged_train = init_split.remainder;

  Dataset tune_valid = valid;
  if (valid_query_cap > 0 && valid_query_cap < valid.queries.size()) {
    const double fraction =
        static_cast<double>(valid_query_cap) / static_cast<double>(valid.queries.size());
    tune_valid = sample_fraction(valid, fraction, derive_seed(seed, "valid-sub")).sampled;
  }

  const RankedLists train_lists = rank_with(init_ranker, logged_train);
  const RankedLists valid_lists = rank_with(init_ranker, tune_valid);
  SimConfig sim;
  sim.eta = eta;
  sim.eps_noise = noise;
  sim.passes = passes;
  sim.seed = derive_seed(seed, "clicks-train");
  const ClickLog train_clicks = simulate_clicks(train_lists, logged_train, sim);
  sim.seed = derive_seed(seed, "clicks-valid");
  const ClickLog valid_clicks = simulate_clicks(valid_lists, tune_valid, sim);

  FirstStageParams fs_params;
  fs_params.kind = fs_kind;
  fs_params.lambda = cfg.first_stage_lambda;
  fs_params.gbdt = cfg.first_stage_gbdt;
  fs_params.seed = derive_seed(corpus_seed, "first-stage");
  const FirstStageModel fs = fit_first_stage(logged_train, train_lists, fs_params);
  const ResidualSet train_res = residuals(fs, logged_train, train_lists);
  const ResidualSet valid_res = residuals(fs, tune_valid, valid_lists);

  SeedOutcome outcome;
  outcome.seed = seed;
  try {
    outcome.het = heteroskedasticity_report(train_res, cfg.het_bins);
  } catch (const std::exception&) {
    outcome.het = FlignerKilleenResult{0.0, 0, std::numeric_limits<double>::quiet_NaN()};
  }

  MetricConfig eval_cfg;
  eval_cfg.cutoffs = cfg.cutoffs;
  eval_cfg.rel_max = test.rel_max;

  // CFC variants share one tuning sweep
  std::vector<ValidationMode> modes;
  for (const auto& v : cfg.cfc_variants) modes.push_back(validation_mode_from_name(v));
  TuneInputs inputs;
  inputs.train = &logged_train;
  inputs.valid = &tune_valid;
  inputs.train_clicks = &train_clicks;
  inputs.valid_clicks = &valid_clicks;
  inputs.train_residuals = &train_res;
  inputs.valid_residuals = &valid_res;
  gbdt::TrainParams ranker_params = cfg.ranker;
  ranker_params.seed = derive_seed(seed, "ranker");
  const MultiTuneResult multi =
      tune_multi(inputs, cfg.grid, modes, ranker_params, cfg.debias_lambda);

  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    const std::string name = "cfc-" + cfg.cfc_variants[mi];
    const gbdt::Ensemble& model = multi.models.at(modes[mi]);
    outcome.method_reports[name] = evaluate(model, test, eval_cfg);
    const TuneConfigResult& chosen =
        multi.reports.at(modes[mi]).configs[static_cast<std::size_t>(
            multi.reports.at(modes[mi]).best_index)];
    MethodSelection sel;
    sel.transform = chosen.transform;
    sel.n_trees = chosen.n_trees;
    sel.learning_rate = chosen.learning_rate;
    sel.has_transform = true;
    outcome.selections[name] = sel;
    if (name == primary_method) {
      outcome.cfc_model_json = gbdt::serialize_ensemble(model);
    }
  }

  // biased baseline: same ranker trained on clicks without control signal;
  // tuned on clicks unless the CFC grid itself uses true relevance
  const bool true_valid =
      std::find(cfg.cfc_variants.begin(), cfg.cfc_variants.end(), "true") !=
      cfg.cfc_variants.end();
  const std::vector<std::vector<double>> biased_gains = click_rates(valid_clicks);
  MethodRun baseline = tune_plain_ranker(logged_train, train_clicks, tune_valid,
                                         true_valid ? nullptr : &biased_gains, false,
                                         cfg.grid, ranker_params);
  outcome.method_reports["baseline"] = evaluate(baseline.model, test, eval_cfg);
  outcome.selections["baseline"] = baseline.selection;

  // oracle: trained and tuned on true relevance
  MethodRun oracle = tune_plain_ranker(logged_train, train_clicks, tune_valid,
                                       nullptr, true, cfg.grid, ranker_params);
  outcome.method_reports["oracle"] = evaluate(oracle.model, test, eval_cfg);
  outcome.selections["oracle"] = oracle.selection;

  return outcome;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) set_max_threads(cfg.threads);

  std::vector<CellSetting> cells;
  if (cfg.axis == SweepAxis::None) {
    cells.push_back(CellSetting{"none", 0.0, ""});
  } else if (cfg.axis == SweepAxis::FirstStageKind) {
    for (const auto& kind : cfg.axis_kinds) {
      cells.push_back(CellSetting{std::string(sweep_axis_name(cfg.axis)) + "=" + kind,
                                  0.0, kind});
    }
  } else {
    if (cfg.axis_values.size() != cfg.axis_kinds.size()) {
      throw DataError("experiment config: numeric sweep axis needs numeric values");
    }
    for (std::size_t i = 0; i < cfg.axis_values.size(); ++i) {
      cells.push_back(CellSetting{std::string(sweep_axis_name(cfg.axis)) + "=" +
                                      cfg.axis_kinds[i],
                                  cfg.axis_values[i], cfg.axis_kinds[i]});
    }
  }

  ExperimentReport report;
  report.primary_method = "cfc-" + cfg.cfc_variants.front();
  for (const auto& v : cfg.cfc_variants) report.methods.push_back("cfc-" + v);
  report.methods.push_back("baseline");
  report.methods.push_back("oracle");

  for (const auto& cell : cells) {
    AxisOutcome out;
    out.label = cell.label;
    out.numeric_value = cell.numeric;
    out.kind_value = cell.kind;
    out.seeds.resize(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), [&](std::size_t si) {
      out.seeds[si] = run_single(cfg, cell, cfg.seeds[si], report.primary_method);
    });

    // means across seeds
    for (const auto& method : report.methods) {
      for (const auto& metric : {std::string("ndcg"), std::string("err")}) {
        for (int p : cfg.cutoffs) {
          double acc = 0.0;
          for (const auto& s : out.seeds) {
            acc += s.method_reports.at(method).at(metric, p).mean;
          }
          out.mean_metric[metric_key(method, metric, p)] =
              acc / static_cast<double>(out.seeds.size());
        }
      }
    }

    // primary CFC vs baseline significance
    const int cutoff = cfg.ranker.ndcg_cutoff;
    std::vector<double> seed_cfc, seed_base, pooled_cfc, pooled_base;
    for (const auto& s : out.seeds) {
      const auto& a = s.method_reports.at(report.primary_method).at("ndcg", cutoff);
      const auto& b = s.method_reports.at("baseline").at("ndcg", cutoff);
      seed_cfc.push_back(a.mean);
      seed_base.push_back(b.mean);
      pooled_cfc.insert(pooled_cfc.end(), a.per_query.begin(), a.per_query.end());
      pooled_base.insert(pooled_base.end(), b.per_query.begin(), b.per_query.end());
    }
    const std::uint64_t fisher_seed = derive_seed(cfg.seeds.front(), "fisher-report");
    if (seed_cfc.size() >= 2) {
      out.fisher_p_seeds = fisher_randomization(seed_cfc, seed_base,
                                                cfg.fisher_permutations, fisher_seed);
    }
    if (pooled_cfc.size() >= 2) {
      out.fisher_p_pooled = fisher_randomization(pooled_cfc, pooled_base,
                                                 cfg.fisher_permutations, fisher_seed);
    }
    report.cells.push_back(std::move(out));
  }
  return report;
}

void write_experiment_outputs(const ExperimentReport& report,
                              const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty()) throw std::invalid_argument("write_experiment_outputs: no out_dir");
  fs::create_directories(cfg.out_dir);
  char buf[64];

  {
    std::ofstream out(fs::path(cfg.out_dir) / "results.csv");
    if (!out) throw DataError("cannot write results.csv");
    out << "axis,value,method";
    for (const auto& metric : {std::string("ndcg"), std::string("err")}) {
      for (int p : cfg.cutoffs) out << ',' << metric << '@' << p;
    }
    out << ",fisher_p_seeds,fisher_p_pooled\n";
    for (const auto& cell : report.cells) {
      for (const auto& method : report.methods) {
        out << sweep_axis_name(cfg.axis) << ','
            << (cell.kind_value.empty() ? "-" : cell.kind_value) << ',' << method;
        for (const auto& metric : {std::string("ndcg"), std::string("err")}) {
          for (int p : cfg.cutoffs) {
            std::snprintf(buf, sizeof(buf), "%.6f",
                          cell.mean_metric.at(metric_key(method, metric, p)));
            out << ',' << buf;
          }
        }
        if (method == report.primary_method) {
          std::snprintf(buf, sizeof(buf), "%.6g,%.6g", cell.fisher_p_seeds,
                        cell.fisher_p_pooled);
          out << ',' << buf << '\n';
        } else {
          out << ",,\n";
        }
      }
    }
  }

  {
    std::ofstream out(fs::path(cfg.out_dir) / "runs.csv");
    if (!out) throw DataError("cannot write runs.csv");
    out << "axis,value,seed,method,transform,trees,learning_rate";
    for (const auto& metric : {std::string("ndcg"), std::string("err")}) {
      for (int p : cfg.cutoffs) out << ',' << metric << '@' << p;
    }
    out << '\n';
    for (const auto& cell : report.cells) {
      for (const auto& s : cell.seeds) {
        for (const auto& method : report.methods) {
          const auto& sel = s.selections.at(method);
          out << sweep_axis_name(cfg.axis) << ','
              << (cell.kind_value.empty() ? "-" : cell.kind_value) << ',' << s.seed
              << ',' << method << ','
              << (sel.has_transform ? transform_kind_name(sel.transform) : "-") << ','
              << sel.n_trees << ',' << sel.learning_rate;
          for (const auto& metric : {std::string("ndcg"), std::string("err")}) {
            for (int p : cfg.cutoffs) {
              std::snprintf(buf, sizeof(buf), "%.6f",
                            s.method_reports.at(method).at(metric, p).mean);
              out << ',' << buf;
            }
          }
          out << '\n';
        }
      }
    }
  }

  {
    std::ofstream out(fs::path(cfg.out_dir) / "het.csv");
    if (!out) throw DataError("cannot write het.csv");
    out << "axis,value,seed,statistic,dof,p_value\n";
    for (const auto& cell : report.cells) {
      for (const auto& s : cell.seeds) {
        std::snprintf(buf, sizeof(buf), "%.6g,%d,%.6g", s.het.statistic, s.het.dof,
                      s.het.p_value);
        out << sweep_axis_name(cfg.axis) << ','
            << (cell.kind_value.empty() ? "-" : cell.kind_value) << ',' << s.seed
            << ',' << buf << '\n';
      }
    }
  }

  {
    std::ofstream out(fs::path(cfg.out_dir) / "significance.csv");
    if (!out) throw DataError("cannot write significance.csv");
    out << "axis,value,comparison,fisher_p_seeds,fisher_p_pooled\n";
    for (const auto& cell : report.cells) {
      std::snprintf(buf, sizeof(buf), "%.6g,%.6g", cell.fisher_p_seeds,
                    cell.fisher_p_pooled);
      out << sweep_axis_name(cfg.axis) << ','
          << (cell.kind_value.empty() ? "-" : cell.kind_value) << ','
          << report.primary_method << "-vs-baseline," << buf << '\n';
    }
  }

  for (const auto& cell : report.cells) {
    if (cell.seeds.empty() || cell.seeds.front().cfc_model_json.empty()) continue;
    std::string name = "model_" + cell.label + "_seed" +
                       std::to_string(cell.seeds.front().seed) + ".json";
    std::replace(name.begin(), name.end(), '=', '_');
    std::ofstream out(fs::path(cfg.out_dir) / name);
    if (!out) throw DataError("cannot write " + name);
    out << cell.seeds.front().cfc_model_json << '\n';
  }
}

}  // namespace cfc
