#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "common.hpp"

namespace cfc {

std::size_t Dataset::total_documents() const {
  std::size_t n = 0;
  for (const auto& q : queries) n += q.documents.size();
  return n;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw DataError("parse error at line " + std::to_string(line_no) + ": " + what);
}

bool parse_int(std::string_view tok, long& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

Dataset parse_letor(std::istream& in) {
  Dataset data;
  std::unordered_set<std::string> closed_qids;
  std::string line;
  std::size_t line_no = 0;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;  // blank or comment-only line

    long rel = 0;
    if (!parse_int(tok, rel) || rel < 0) parse_fail(line_no, "bad relevance label '" + tok + "'");

    if (!(tokens >> tok) || tok.rfind("qid:", 0) != 0 || tok.size() == 4) {
      parse_fail(line_no, "expected qid:<id>");
    }
    std::string qid = tok.substr(4);

    Document doc;
    doc.relevance = static_cast<int>(rel);
    std::vector<std::pair<long, double>> feats;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
        parse_fail(line_no, "bad feature token '" + tok + "'");
      }
      long fid = 0;
      double val = 0.0;
      if (!parse_int(tok.substr(0, colon), fid) || fid <= 0) {
        parse_fail(line_no, "feature id must be a positive integer in '" + tok + "'");
      }
      if (!parse_double(tok.substr(colon + 1), val) || !std::isfinite(val)) {
        parse_fail(line_no, "bad feature value in '" + tok + "'");
      }
      feats.emplace_back(fid, val);
      data.feature_dim = std::max(data.feature_dim, static_cast<int>(fid));
    }

    if (data.queries.empty() || data.queries.back().query_id != qid) {
      if (closed_qids.count(qid) > 0) {
        parse_fail(line_no, "non-contiguous query block for qid " + qid);
      }
      if (!data.queries.empty()) closed_qids.insert(data.queries.back().query_id);
      data.queries.push_back(Query{qid, {}});
    }
    Query& q = data.queries.back();
    doc.doc_id = static_cast<std::int32_t>(q.documents.size());
    doc.features.resize(static_cast<std::size_t>(data.feature_dim), 0.0);
    for (const auto& [fid, val] : feats) {
      if (static_cast<std::size_t>(fid) > doc.features.size()) {
        doc.features.resize(static_cast<std::size_t>(fid), 0.0);
      }
      doc.features[static_cast<std::size_t>(fid - 1)] = val;
    }
    q.documents.push_back(std::move(doc));
    max_label = std::max(max_label, static_cast<int>(rel));
  }
  if (data.queries.empty()) throw DataError("empty input: no data lines found");
  for (auto& q : data.queries) {
    for (auto& d : q.documents) {
      d.features.resize(static_cast<std::size_t>(data.feature_dim), 0.0);
    }
  }
  data.rel_max = std::max(4, max_label);
  return data;
}

Dataset parse_letor_string(const std::string& text) {
  std::istringstream in(text);
  return parse_letor(in);
}

Dataset load_letor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return parse_letor(in);
}

void serialize_letor(const Dataset& data, std::ostream& out) {
  char buf[64];
  for (const auto& q : data.queries) {
    for (const auto& d : q.documents) {
      out << d.relevance << " qid:" << q.query_id;
      for (std::size_t j = 0; j < d.features.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", d.features[j]);
        out << ' ' << (j + 1) << ':' << buf;
      }
      out << '\n';
    }
  }
}

void save_letor_file(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  serialize_letor(data, out);
}

FeatureStats fit_normalizer(const Dataset& data) {
  if (data.queries.empty()) throw std::invalid_argument("fit_normalizer: empty dataset");
  const std::size_t dim = static_cast<std::size_t>(data.feature_dim);
  FeatureStats stats;
  stats.min.assign(dim, std::numeric_limits<double>::infinity());
  stats.max.assign(dim, -std::numeric_limits<double>::infinity());
  for (const auto& q : data.queries) {
    for (const auto& d : q.documents) {
      for (std::size_t j = 0; j < dim; ++j) {
        stats.min[j] = std::min(stats.min[j], d.features[j]);
        stats.max[j] = std::max(stats.max[j], d.features[j]);
      }
    }
  }
  return stats;
}

Dataset apply_normalizer(const Dataset& data, const FeatureStats& stats) {
  if (stats.min.size() != static_cast<std::size_t>(data.feature_dim)) {
    throw std::invalid_argument("apply_normalizer: dimensionality mismatch");
  }
  Dataset out = data;
  for (auto& q : out.queries) {
    for (auto& d : q.documents) {
      for (std::size_t j = 0; j < d.features.size(); ++j) {
        const double span = stats.max[j] - stats.min[j];
        if (span <= 0.0) {
          d.features[j] = 0.0;
        } else {
          d.features[j] = std::clamp((d.features[j] - stats.min[j]) / span, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

void save_feature_stats(const FeatureStats& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  char buf[128];
  for (std::size_t j = 0; j < stats.min.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%zu %.17g %.17g\n", j + 1, stats.min[j], stats.max[j]);
    out << buf;
  }
}

FeatureStats load_feature_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  FeatureStats stats;
  std::size_t fid = 0;
  double lo = 0.0, hi = 0.0;
  std::size_t expected = 1;
  while (in >> fid >> lo >> hi) {
    if (fid != expected) throw DataError("feature stats file: ids must be 1..dim in order");
    if (lo > hi) throw DataError("feature stats file: min > max for feature " + std::to_string(fid));
    stats.min.push_back(lo);
    stats.max.push_back(hi);
    ++expected;
  }
  if (stats.min.empty()) throw DataError("feature stats file is empty: " + path);
  return stats;
}

SplitResult sample_fraction(const Dataset& data, double fraction, std::uint64_t seed) {
  if (data.queries.empty()) throw std::invalid_argument("sample_fraction: empty dataset");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("sample_fraction: fraction must be in (0,1]");
  }
  const std::size_t n = data.queries.size();
  std::size_t k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "sample_fraction"));
  rng.shuffle(idx);
  std::vector<bool> picked(n, false);
  for (std::size_t i = 0; i < k; ++i) picked[idx[i]] = true;

  SplitResult out;
  out.sampled.feature_dim = out.remainder.feature_dim = data.feature_dim;
  out.sampled.rel_max = out.remainder.rel_max = data.rel_max;
  for (std::size_t i = 0; i < n; ++i) {
    (picked[i] ? out.sampled : out.remainder).queries.push_back(data.queries[i]);
  }
  return out;
}

Dataset synth_dataset(int n_queries, int docs_per_query, int feature_dim,
                      std::uint64_t seed) {
  if (n_queries <= 0 || docs_per_query <= 0 || feature_dim <= 0) {
    throw std::invalid_argument("synth_dataset: counts must be positive");
  }
  Dataset data;
  data.feature_dim = feature_dim;
  data.rel_max = 4;

  Rng wrng(derive_seed(seed, "synth-weights"));
  std::vector<double> w(static_cast<std::size_t>(feature_dim));
  for (auto& v : w) v = wrng.normal();

  // Queries differ in difficulty: a per-query shift moves every feature of
  // its documents, so a document's standing within its query differs from
  // its global quality. Relevance is graded globally, which makes logged
  // ranks depend on query composition, not features alone.
  constexpr double kQuerySpread = 0.8;

  std::vector<double> raw;
  raw.reserve(static_cast<std::size_t>(n_queries) * docs_per_query);
  data.queries.resize(static_cast<std::size_t>(n_queries));
  for (int qi = 0; qi < n_queries; ++qi) {
    Query& q = data.queries[static_cast<std::size_t>(qi)];
    q.query_id = std::to_string(qi + 1);
    q.documents.resize(static_cast<std::size_t>(docs_per_query));
    Rng rng(derive_seed(seed, "synth-query", static_cast<std::uint64_t>(qi)));
    const double shift = kQuerySpread * rng.uniform01();
    for (int di = 0; di < docs_per_query; ++di) {
      Document& d = q.documents[static_cast<std::size_t>(di)];
      d.doc_id = di;
      d.features.resize(static_cast<std::size_t>(feature_dim));
      double dot = 0.0;
      for (int j = 0; j < feature_dim; ++j) {
        const double v = shift + (1.0 - kQuerySpread) * rng.uniform01();
        d.features[static_cast<std::size_t>(j)] = v;
        dot += w[static_cast<std::size_t>(j)] * v;
      }
      const double nonlin = std::sin(6.283185307179586 * d.features[0]);
      const double noise = rng.normal();
      raw.push_back(dot + 0.75 * nonlin + 0.25 * noise);
    }
  }

  // Fixed quantile cuts: grades 0..4 cover 50 / 25 / 12.5 / 7.5 / 5 percent.
  std::vector<double> sorted = raw;
  std::sort(sorted.begin(), sorted.end());
  const double cuts_p[4] = {0.50, 0.75, 0.875, 0.95};
  double cuts[4];
  const std::size_t n = sorted.size();
  for (int c = 0; c < 4; ++c) {
    std::size_t pos = static_cast<std::size_t>(cuts_p[c] * static_cast<double>(n));
    if (pos >= n) pos = n - 1;
    cuts[c] = sorted[pos];
  }
  std::size_t k = 0;
  for (auto& q : data.queries) {
    for (auto& d : q.documents) {
      const double s = raw[k++];
      int grade = 0;
      while (grade < 4 && s >= cuts[grade]) ++grade;
      d.relevance = grade;
    }
  }
  return data;
}

}  // namespace cfc
