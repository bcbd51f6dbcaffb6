#include "transforms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "common.hpp"
#include "json.hpp"
#include "stats.hpp"

namespace cfc {

const char* transform_kind_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::MinMax:
      return "minmax";
    case TransformKind::NormalPdf:
      return "pdf";
    case TransformKind::NormalHazard:
      return "imr";
    case TransformKind::KdeHazard:
      return "kde-hazard";
  }
  return "minmax";
}

TransformKind transform_kind_from_name(const std::string& name) {
  if (name == "minmax") return TransformKind::MinMax;
  if (name == "pdf") return TransformKind::NormalPdf;
  if (name == "imr" || name == "hazard") return TransformKind::NormalHazard;
  if (name == "kde-hazard" || name == "kde") return TransformKind::KdeHazard;
  throw std::invalid_argument("unknown transform kind: " + name);
}

namespace {

void fit_moments(const std::vector<double>& values, double& mu, double& sigma) {
  mu = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  sigma = std::sqrt(acc / static_cast<double>(values.size()));  // population std
  if (!(sigma > 0.0)) {
    throw DataError("fit_transform: degenerate distribution (constant residuals)");
  }
}

double silverman_bandwidth(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double sd = std::sqrt(sample_variance(values));
  const double iqr =
      quantile_type1(values, 0.75) - quantile_type1(values, 0.25);
  double scale = std::min(sd, iqr / 1.34);
  if (!(scale > 0.0)) scale = sd;  // flat IQR with spread elsewhere
  if (!(scale > 0.0)) {
    throw DataError("fit_transform: degenerate distribution (constant residuals)");
  }
  return 0.9 * scale * std::pow(n, -0.2);
}

}  // namespace

FittedTransform fit_transform(TransformKind kind, const std::vector<double>& values) {
  if (values.size() < 2) {
    throw std::invalid_argument("fit_transform: need >= 2 residuals");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_transform: non-finite residual");
  }
  FittedTransform fitted;
  fitted.kind = kind;
  switch (kind) {
    case TransformKind::MinMax: {
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      fitted.min = *lo;
      fitted.max = *hi;
      break;
    }
    case TransformKind::NormalPdf:
    case TransformKind::NormalHazard:
      fit_moments(values, fitted.mu, fitted.sigma);
      break;
    case TransformKind::KdeHazard:
      fitted.bandwidth = silverman_bandwidth(values);
      fitted.sample = values;
      break;
  }
  return fitted;
}

FittedTransform fit_transform_binned(const std::vector<double>& values, int bin_count) {
  if (bin_count < 2) throw std::invalid_argument("fit_transform_binned: need >= 2 bins");
  FittedTransform fitted = fit_transform(TransformKind::KdeHazard, values);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    throw DataError("fit_transform_binned: degenerate distribution (constant residuals)");
  }
  const double width = (hi - lo) / static_cast<double>(bin_count);
  std::vector<double> counts(static_cast<std::size_t>(bin_count), 0.0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bin_count - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(values.size());
  for (int b = 0; b < bin_count; ++b) {
    if (counts[static_cast<std::size_t>(b)] == 0.0) continue;
    fitted.bin_centers.push_back(lo + (static_cast<double>(b) + 0.5) * width);
    fitted.bin_weights.push_back(counts[static_cast<std::size_t>(b)] * inv_n);
  }
  fitted.sample.clear();
  fitted.binned = true;
  return fitted;
}

double kde_pdf(const FittedTransform& fitted, double value) {
  const double h = fitted.bandwidth;
  double acc = 0.0;
  if (fitted.binned) {
    for (std::size_t i = 0; i < fitted.bin_centers.size(); ++i) {
      acc += fitted.bin_weights[i] * normal_pdf((value - fitted.bin_centers[i]) / h);
    }
  } else {
    for (double x : fitted.sample) acc += normal_pdf((value - x) / h);
    acc /= static_cast<double>(fitted.sample.size());
  }
  return acc / h;
}

double kde_cdf(const FittedTransform& fitted, double value) {
  const double h = fitted.bandwidth;
  double acc = 0.0;
  if (fitted.binned) {
    for (std::size_t i = 0; i < fitted.bin_centers.size(); ++i) {
      acc += fitted.bin_weights[i] * normal_cdf((value - fitted.bin_centers[i]) / h);
    }
  } else {
    for (double x : fitted.sample) acc += normal_cdf((value - x) / h);
    acc /= static_cast<double>(fitted.sample.size());
  }
  return acc;
}

double transform(const FittedTransform& fitted, double value, TransformStats& stats) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("transform: non-finite input");
  }
  switch (fitted.kind) {
    case TransformKind::MinMax: {
      const double span = fitted.max - fitted.min;
      if (span <= 0.0) return 0.0;  // constant residuals carry no signal
      return std::clamp((value - fitted.min) / span, 0.0, 1.0);
    }
    case TransformKind::NormalPdf: {
      const double z = (value - fitted.mu) / fitted.sigma;
      return normal_pdf(z) / fitted.sigma;
    }
    case TransformKind::NormalHazard: {
      const double z = (value - fitted.mu) / fitted.sigma;
      double denom = fitted.sigma * normal_cdf(z);
      if (denom < kHazardDenominatorFloor) {
        denom = kHazardDenominatorFloor;
        ++stats.floor_hits;
      }
      return normal_pdf(z) / denom;
    }
    case TransformKind::KdeHazard: {
      double denom = kde_cdf(fitted, value);
      if (denom < kHazardDenominatorFloor) {
        denom = kHazardDenominatorFloor;
        ++stats.floor_hits;
      }
      return kde_pdf(fitted, value) / denom;
    }
  }
  throw std::invalid_argument("transform: unknown kind");
}

double transform(const FittedTransform& fitted, double value) {
  TransformStats stats;
  return transform(fitted, value, stats);
}

ControlSignals apply_fitted(const FittedTransform& fitted, const ResidualSet& residuals) {
  ControlSignals out;
  out.kind = fitted.kind;
  out.values.resize(residuals.entries.size());
  TransformStats stats;
  for (std::size_t qi = 0; qi < residuals.entries.size(); ++qi) {
    out.values[qi].reserve(residuals.entries[qi].size());
    for (const auto& e : residuals.entries[qi]) {
      out.values[qi].push_back(transform(fitted, e.residual, stats));
    }
  }
  out.floor_hits = stats.floor_hits;
  return out;
}

ApplyResult apply_all(TransformKind kind, const ResidualSet& residuals) {
  ApplyResult out;
  out.fitted = fit_transform(kind, residuals.flat());
  out.signals = apply_fitted(out.fitted, residuals);
  return out;
}

void save_transform(const FittedTransform& fitted, const std::string& path) {
  nlohmann::json j;
  j["format"] = "cfc-transform";
  j["version"] = 1;
  j["kind"] = transform_kind_name(fitted.kind);
  switch (fitted.kind) {
    case TransformKind::MinMax:
      j["min"] = fitted.min;
      j["max"] = fitted.max;
      break;
    case TransformKind::NormalPdf:
    case TransformKind::NormalHazard:
      j["mu"] = fitted.mu;
      j["sigma"] = fitted.sigma;
      break;
    case TransformKind::KdeHazard:
      j["bandwidth"] = fitted.bandwidth;
      j["binned"] = fitted.binned;
      if (fitted.binned) {
        j["bin_centers"] = fitted.bin_centers;
        j["bin_weights"] = fitted.bin_weights;
      } else {
        j["sample"] = fitted.sample;
      }
      break;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << j.dump() << '\n';
}

FittedTransform load_transform(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    nlohmann::json j = nlohmann::json::parse(buf.str());
    if (j.value("format", "") != "cfc-transform" || j.value("version", 0) != 1) {
      throw DataError("not a cfc-transform document: " + path);
    }
    FittedTransform fitted;
    fitted.kind = transform_kind_from_name(j.at("kind").get<std::string>());
    switch (fitted.kind) {
      case TransformKind::MinMax:
        fitted.min = j.at("min").get<double>();
        fitted.max = j.at("max").get<double>();
        break;
      case TransformKind::NormalPdf:
      case TransformKind::NormalHazard:
        fitted.mu = j.at("mu").get<double>();
        fitted.sigma = j.at("sigma").get<double>();
        break;
      case TransformKind::KdeHazard:
        fitted.bandwidth = j.at("bandwidth").get<double>();
        fitted.binned = j.value("binned", false);
        if (fitted.binned) {
          fitted.bin_centers = j.at("bin_centers").get<std::vector<double>>();
          fitted.bin_weights = j.at("bin_weights").get<std::vector<double>>();
        } else {
          fitted.sample = j.at("sample").get<std::vector<double>>();
        }
        break;
    }
    return fitted;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("transform parse error: ") + e.what());
  }
}

void save_signals(const ControlSignals& signals, const Dataset& data,
                  const std::string& path) {
  if (signals.values.size() != data.queries.size()) {
    throw std::invalid_argument("save_signals: signals do not cover the dataset");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << "query_id\tdoc_id\ttransform_kind\tvalue\n";
  char buf[64];
  const char* kind = transform_kind_name(signals.kind);
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      std::snprintf(buf, sizeof(buf), "%.17g", signals.values[qi][di]);
      out << q.query_id << '\t' << q.documents[di].doc_id << '\t' << kind << '\t'
          << buf << '\n';
    }
  }
}

ControlSignals load_signals(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  ControlSignals out;
  out.values.resize(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    out.values[qi].assign(data.queries[qi].documents.size(),
                          std::numeric_limits<double>::quiet_NaN());
  }
  std::string line;
  std::size_t line_no = 0;
  std::size_t qi = 0;
  bool kind_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("query_id", 0) == 0) continue;
    std::istringstream row(line);
    std::string qid, kind_name;
    long doc_id = 0;
    double value = 0.0;
    if (!(row >> qid >> doc_id >> kind_name >> value)) {
      throw DataError("signals file parse error at line " + std::to_string(line_no));
    }
    const TransformKind kind = transform_kind_from_name(kind_name);
    if (!kind_set) {
      out.kind = kind;
      kind_set = true;
    } else if (kind != out.kind) {
      throw DataError("signals file mixes transform kinds at line " + std::to_string(line_no));
    }
    while (qi < data.queries.size() && data.queries[qi].query_id != qid) ++qi;
    if (qi >= data.queries.size()) {
      throw DataError("signals file line " + std::to_string(line_no) + ": query " +
                      qid + " not found in dataset order");
    }
    if (doc_id < 0 ||
        static_cast<std::size_t>(doc_id) >= data.queries[qi].documents.size()) {
      throw DataError("signals file line " + std::to_string(line_no) + ": bad doc_id");
    }
    out.values[qi][static_cast<std::size_t>(doc_id)] = value;
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    for (double v : out.values[i]) {
      if (std::isnan(v)) {
        throw DataError("signals file missing entries for query " +
                        data.queries[i].query_id);
      }
    }
  }
  if (!kind_set) throw DataError("signals file is empty: " + path);
  return out;
}

}  // namespace cfc
