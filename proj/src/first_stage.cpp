#include "first_stage.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "common.hpp"
#include "json.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace cfc {

double RidgeModel::predict(const std::vector<double>& features) const {
  if (features.size() != weights.size()) {
    throw std::invalid_argument("RidgeModel: feature dimension mismatch");
  }
  double s = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * features[j];
  return s;
}

const char* first_stage_kind_name(FirstStageKind kind) {
  return kind == FirstStageKind::Ridge ? "ridge" : "gbdt-regression";
}

FirstStageKind first_stage_kind_from_name(const std::string& name) {
  if (name == "ridge") return FirstStageKind::Ridge;
  if (name == "gbdt-regression" || name == "gbdt") return FirstStageKind::GbdtRegression;
  throw std::invalid_argument("unknown first-stage kind: " + name);
}

double FirstStageModel::predict(const std::vector<double>& features) const {
  if (kind == FirstStageKind::Ridge) return ridge.predict(features);
  return ensemble.predict(features, 0.0);
}

std::vector<double> ResidualSet::flat() const {
  std::vector<double> out;
  out.reserve(total());
  for (const auto& q : entries) {
    for (const auto& e : q) out.push_back(e.residual);
  }
  return out;
}

std::size_t ResidualSet::total() const {
  std::size_t n = 0;
  for (const auto& q : entries) n += q.size();
  return n;
}

RidgeModel fit_ridge(const std::vector<std::vector<double>>& rows,
                     const std::vector<double>& targets, double lambda) {
  if (rows.size() < 2) throw std::invalid_argument("fit_ridge: need >= 2 rows");
  if (rows.size() != targets.size()) {
    throw std::invalid_argument("fit_ridge: row/target size mismatch");
  }
  if (lambda < 0.0) throw std::invalid_argument("fit_ridge: lambda must be >= 0");
  const std::size_t n = rows.size();
  const std::size_t dim = rows[0].size();
  if (dim == 0) throw std::invalid_argument("fit_ridge: zero-dimensional rows");

  Eigen::MatrixXd x(n, dim);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != dim) {
      throw std::invalid_argument("fit_ridge: ragged feature rows");
    }
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = rows[i][j];
    y(i) = targets[i];
  }
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  x.rowwise() -= x_mean;
  y.array() -= y_mean;

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw DataError("fit_ridge: factorization failed");
  }
  if (lambda == 0.0) {
    const auto d = ldlt.vectorD();
    const double dmax = d.maxCoeff();
    if (dmax <= 0.0 || d.minCoeff() < dmax * 1e-12) {
      throw DataError("fit_ridge: singular system (rank-deficient design with lambda = 0)");
    }
  }
  const Eigen::VectorXd w = ldlt.solve(x.transpose() * y);

  RidgeModel model;
  model.lambda = lambda;
  model.weights.assign(w.data(), w.data() + dim);
  model.intercept = y_mean - (x_mean * w)(0, 0);
  return model;
}

namespace {

void collect_rows(const Dataset& data, const RankedLists& lists,
                  std::vector<std::vector<double>>& rows, std::vector<double>& pos) {
  if (lists.positions.size() != data.queries.size()) {
    throw std::invalid_argument("fit_first_stage: lists do not cover the dataset");
  }
  rows.clear();
  pos.clear();
  rows.reserve(data.total_documents());
  pos.reserve(data.total_documents());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    if (lists.positions[qi].size() != q.documents.size()) {
      throw std::invalid_argument("fit_first_stage: lists do not cover the dataset");
    }
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      rows.push_back(q.documents[di].features);
      pos.push_back(static_cast<double>(lists.positions[qi][di]));
    }
  }
}

// Lambda grid selected by squared error on a 10% held-out query split.
double select_ridge_lambda(const Dataset& data, const RankedLists& lists,
                           std::uint64_t seed) {
  static const double kGrid[] = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
  if (data.queries.size() < 2) return kGrid[0];

  SplitResult split = sample_fraction(data, 0.10, derive_seed(seed, "ridge-lambda"));
  // sample_fraction keeps query order, so positions can be re-sliced by
  // membership in the held-out set.
  std::vector<bool> held(data.queries.size(), false);
  {
    std::size_t hi = 0;
    for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
      if (hi < split.sampled.queries.size() &&
          split.sampled.queries[hi].query_id == data.queries[qi].query_id) {
        held[qi] = true;
        ++hi;
      }
    }
  }
  std::vector<std::vector<double>> train_rows, held_rows;
  std::vector<double> train_pos, held_pos;
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      auto& rows = held[qi] ? held_rows : train_rows;
      auto& pos = held[qi] ? held_pos : train_pos;
      rows.push_back(q.documents[di].features);
      pos.push_back(static_cast<double>(lists.positions[qi][di]));
    }
  }
  if (train_rows.size() < 2 || held_rows.empty()) return kGrid[0];

  double best_lambda = kGrid[0];
  double best_mse = std::numeric_limits<double>::infinity();
  for (double lambda : kGrid) {
    RidgeModel m;
    try {
      m = fit_ridge(train_rows, train_pos, lambda);
    } catch (const DataError&) {
      continue;  // singular at this lambda
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < held_rows.size(); ++i) {
      const double err = m.predict(held_rows[i]) - held_pos[i];
      sse += err * err;
    }
    const double mse = sse / static_cast<double>(held_rows.size());
    if (mse < best_mse) {
      best_mse = mse;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace

FirstStageModel fit_first_stage(const Dataset& data, const RankedLists& lists,
                                const FirstStageParams& params) {
  FirstStageModel model;
  model.kind = params.kind;
  std::vector<std::vector<double>> rows;
  std::vector<double> pos;
  collect_rows(data, lists, rows, pos);

  if (params.kind == FirstStageKind::Ridge) {
    double lambda = params.lambda;
    if (std::isnan(lambda)) lambda = select_ridge_lambda(data, lists, params.seed);
    model.ridge = fit_ridge(rows, pos, lambda);
    return model;
  }

  gbdt::RowMatrix matrix;
  matrix.n_cols = data.feature_dim + 1;
  matrix.values.reserve(rows.size() * static_cast<std::size_t>(matrix.n_cols));
  for (const auto& r : rows) {
    matrix.values.insert(matrix.values.end(), r.begin(), r.end());
    matrix.values.push_back(0.0);
  }
  model.ensemble = gbdt::train_pointwise(matrix, pos, params.gbdt);
  return model;
}

ResidualSet residuals(const FirstStageModel& model, const Dataset& data,
                      const RankedLists& lists) {
  if (lists.positions.size() != data.queries.size()) {
    throw std::invalid_argument("residuals: lists do not cover the dataset");
  }
  ResidualSet out;
  out.entries.resize(data.queries.size());
  parallel_for(data.queries.size(), [&](std::size_t qi) {
    const Query& q = data.queries[qi];
    if (lists.positions[qi].size() != q.documents.size()) {
      throw std::invalid_argument("residuals: missing position for a document");
    }
    auto& dest = out.entries[qi];
    dest.resize(q.documents.size());
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      const int position = lists.positions[qi][di];
      const double predicted = model.predict(q.documents[di].features);
      dest[di] = ResidualEntry{position, predicted,
                               static_cast<double>(position) - predicted};
    }
  });
  return out;
}

void save_first_stage(const FirstStageModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "cfc-first-stage";
  j["version"] = 1;
  j["kind"] = first_stage_kind_name(model.kind);
  if (model.kind == FirstStageKind::Ridge) {
    j["weights"] = model.ridge.weights;
    j["intercept"] = model.ridge.intercept;
    j["lambda"] = model.ridge.lambda;
  } else {
    j["ensemble"] = nlohmann::json::parse(gbdt::serialize_ensemble(model.ensemble));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << j.dump() << '\n';
}

FirstStageModel load_first_stage(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
    if (j.value("format", "") != "cfc-first-stage" || j.value("version", 0) != 1) {
      throw DataError("not a cfc-first-stage document: " + path);
    }
    FirstStageModel model;
    model.kind = first_stage_kind_from_name(j.at("kind").get<std::string>());
    if (model.kind == FirstStageKind::Ridge) {
      model.ridge.weights = j.at("weights").get<std::vector<double>>();
      model.ridge.intercept = j.at("intercept").get<double>();
      model.ridge.lambda = j.at("lambda").get<double>();
    } else {
      model.ensemble = gbdt::parse_ensemble(j.at("ensemble").dump());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("first-stage parse error: ") + e.what());
  }
}

void save_residuals(const ResidualSet& res, const Dataset& data,
                    const std::string& path) {
  if (res.entries.size() != data.queries.size()) {
    throw std::invalid_argument("save_residuals: residuals do not cover the dataset");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << "query_id\tdoc_id\tposition\tpredicted\tresidual\n";
  char buf[64];
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      const ResidualEntry& e = res.entries[qi][di];
      out << q.query_id << '\t' << q.documents[di].doc_id << '\t' << e.position << '\t';
      std::snprintf(buf, sizeof(buf), "%.17g", e.predicted);
      out << buf << '\t';
      std::snprintf(buf, sizeof(buf), "%.17g", e.residual);
      out << buf << '\n';
    }
  }
}

ResidualSet load_residuals(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  ResidualSet res;
  res.entries.resize(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    res.entries[qi].resize(data.queries[qi].documents.size());
  }
  std::string line;
  std::size_t line_no = 0;
  std::size_t qi = 0;
  std::vector<std::vector<bool>> seen(data.queries.size());
  for (std::size_t i = 0; i < seen.size(); ++i) {
    seen[i].assign(data.queries[i].documents.size(), false);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("query_id", 0) == 0) continue;
    std::istringstream row(line);
    std::string qid;
    long doc_id = 0, position = 0;
    double predicted = 0.0, residual = 0.0;
    if (!(row >> qid >> doc_id >> position >> predicted >> residual) || position < 1) {
      throw DataError("residual file parse error at line " + std::to_string(line_no));
    }
    while (qi < data.queries.size() && data.queries[qi].query_id != qid) ++qi;
    if (qi >= data.queries.size()) {
      throw DataError("residual file line " + std::to_string(line_no) +
                      ": query " + qid + " not found in dataset order");
    }
    if (doc_id < 0 ||
        static_cast<std::size_t>(doc_id) >= data.queries[qi].documents.size()) {
      throw DataError("residual file line " + std::to_string(line_no) + ": bad doc_id");
    }
    res.entries[qi][static_cast<std::size_t>(doc_id)] =
        ResidualEntry{static_cast<int>(position), predicted, residual};
    seen[qi][static_cast<std::size_t>(doc_id)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    for (std::size_t d = 0; d < seen[i].size(); ++d) {
      if (!seen[i][d]) {
        throw DataError("residual file missing entry for query " +
                        data.queries[i].query_id + " doc " + std::to_string(d));
      }
    }
  }
  return res;
}

FlignerKilleenResult fligner_killeen(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) {
    throw std::invalid_argument("fligner_killeen: need >= 2 groups");
  }
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) {
      throw std::invalid_argument("fligner_killeen: every group needs >= 2 observations");
    }
    total += g.size();
  }

  std::vector<double> abs_dev;
  abs_dev.reserve(total);
  std::vector<std::size_t> group_of;
  group_of.reserve(total);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const double med = median(groups[gi]);
    for (double x : groups[gi]) {
      abs_dev.push_back(std::fabs(x - med));
      group_of.push_back(gi);
    }
  }

  const std::vector<double> ranks = midranks(abs_dev);
  const double n_all = static_cast<double>(total);
  std::vector<double> scores(total);
  for (std::size_t i = 0; i < total; ++i) {
    scores[i] = normal_quantile(0.5 + ranks[i] / (2.0 * (n_all + 1.0)));
  }

  const double a_bar = mean(scores);
  double v = 0.0;
  for (double a : scores) v += (a - a_bar) * (a - a_bar);
  v /= (n_all - 1.0);
  if (v <= 0.0) {
    throw DataError("fligner_killeen: degenerate groups (zero score variance)");
  }

  std::vector<double> group_sum(groups.size(), 0.0);
  for (std::size_t i = 0; i < total; ++i) group_sum[group_of[i]] += scores[i];

  double stat = 0.0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const double ng = static_cast<double>(groups[gi].size());
    const double diff = group_sum[gi] / ng - a_bar;
    stat += ng * diff * diff;
  }
  stat /= v;

  FlignerKilleenResult out;
  out.statistic = stat;
  out.dof = static_cast<int>(groups.size()) - 1;
  out.p_value = chi2_sf(stat, static_cast<double>(out.dof));
  return out;
}

FlignerKilleenResult heteroskedasticity_report(const ResidualSet& res, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("heteroskedasticity_report: need >= 2 bins");
  struct Item {
    double predicted;
    double residual;
  };
  std::vector<Item> items;
  items.reserve(res.total());
  for (const auto& q : res.entries) {
    for (const auto& e : q) items.push_back({e.predicted, e.residual});
  }
  if (items.size() < 2 * static_cast<std::size_t>(n_bins)) {
    throw DataError("heteroskedasticity_report: insufficient data per bin");
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.predicted < b.predicted; });

  // Equal-frequency bins over predicted position.
  const std::size_t n = items.size();
  std::vector<std::vector<double>> groups;
  groups.reserve(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(n_bins);
    const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(n_bins);
    if (hi - lo < 2) continue;
    std::vector<double> g;
    g.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) g.push_back(items[i].residual);
    groups.push_back(std::move(g));
  }
  if (groups.size() < 2) {
    throw DataError("heteroskedasticity_report: fewer than 2 usable bins");
  }
  return fligner_killeen(groups);
}

}  // namespace cfc
