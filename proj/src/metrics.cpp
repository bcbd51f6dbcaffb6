#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "common.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace cfc {

std::optional<double> ndcg_at(const std::vector<double>& ranked_gains,
                              const std::vector<double>& ideal_gains, int p) {
  if (p < 1) throw std::invalid_argument("ndcg_at: p must be >= 1");
  if (ranked_gains.size() != ideal_gains.size()) {
    throw std::invalid_argument("ndcg_at: gain vectors must have equal size");
  }
  double dcg = 0.0;
  double idcg = 0.0;
  const std::size_t limit = std::min<std::size_t>(ranked_gains.size(),
                                                  static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < limit; ++i) {
    const double discount = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    dcg += ranked_gains[i] * discount;
    idcg += ideal_gains[i] * discount;
  }
  if (idcg <= 0.0) return std::nullopt;
  return dcg / idcg;
}

double err_at(const std::vector<int>& ranked_rels, int p, int rel_max) {
  if (p < 1) throw std::invalid_argument("err_at: p must be >= 1");
  const double denom = std::exp2(rel_max);
  double err = 0.0;
  double not_stopped = 1.0;
  const std::size_t limit = std::min<std::size_t>(ranked_rels.size(),
                                                  static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < limit; ++i) {
    const int rel = ranked_rels[i];
    if (rel < 0 || rel > rel_max) {
      throw std::invalid_argument("err_at: relevance out of [0, rel_max]");
    }
    const double stop = (std::exp2(rel) - 1.0) / denom;
    err += not_stopped * stop / static_cast<double>(i + 1);
    not_stopped *= 1.0 - stop;
  }
  return err;
}

const MetricSeries& EvalReport::at(const std::string& metric, int cutoff) const {
  auto it = series.find({metric, cutoff});
  if (it == series.end()) {
    throw std::invalid_argument("EvalReport: no series for " + metric + "@" +
                                std::to_string(cutoff));
  }
  return it->second;
}

std::vector<std::vector<double>> score_dataset(const gbdt::Ensemble& model,
                                               const Dataset& data) {
  std::vector<std::vector<double>> scores(data.queries.size());
  parallel_for(data.queries.size(), [&](std::size_t qi) {
    const Query& q = data.queries[qi];
    scores[qi].resize(q.documents.size());
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      scores[qi][di] = model.predict(q.documents[di].features, 0.0);
    }
  });
  return scores;
}

namespace {

// Descending score, ascending doc_id on ties.
std::vector<std::size_t> ranking_order(const std::vector<double>& scores,
                                       const Query& q) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return q.documents[a].doc_id < q.documents[b].doc_id;
  });
  return order;
}

}  // namespace

EvalReport evaluate_scores(const std::vector<std::vector<double>>& scores,
                           const Dataset& data, const MetricConfig& cfg) {
  if (data.queries.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (scores.size() != data.queries.size()) {
    throw std::invalid_argument("evaluate: scores do not cover the dataset");
  }
  if (cfg.cutoffs.empty()) throw std::invalid_argument("evaluate: no cutoffs");

  EvalReport report;
  report.n_queries = data.queries.size();
  for (int p : cfg.cutoffs) {
    report.series[{"ndcg", p}] = MetricSeries{};
    report.series[{"err", p}] = MetricSeries{};
  }

  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    const auto order = ranking_order(scores[qi], q);

    std::vector<double> ranked_gains(order.size());
    std::vector<int> ranked_rels(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const int rel = q.documents[order[r]].relevance;
      ranked_rels[r] = rel;
      ranked_gains[r] = std::exp2(rel) - 1.0;
    }
    std::vector<double> ideal_gains(ranked_gains);
    std::sort(ideal_gains.begin(), ideal_gains.end(), std::greater<double>());
    if (ideal_gains.empty() || ideal_gains.front() <= 0.0) {
      ++report.n_skipped;  // no relevant document: unrankable either way
      continue;
    }
    for (int p : cfg.cutoffs) {
      const auto ndcg = ndcg_at(ranked_gains, ideal_gains, p);
      report.series[{"ndcg", p}].per_query.push_back(ndcg.value_or(0.0));
      report.series[{"err", p}].per_query.push_back(
          err_at(ranked_rels, p, cfg.rel_max));
    }
  }
  for (auto& [key, s] : report.series) {
    s.mean = s.per_query.empty()
                 ? 0.0
                 : std::accumulate(s.per_query.begin(), s.per_query.end(), 0.0) /
                       static_cast<double>(s.per_query.size());
  }
  return report;
}

EvalReport evaluate(const gbdt::Ensemble& model, const Dataset& data,
                    const MetricConfig& cfg) {
  return evaluate_scores(score_dataset(model, data), data, cfg);
}

double mean_ndcg_with_gains(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<double>>& gains,
                            const Dataset& data, int cutoff) {
  if (scores.size() != data.queries.size() || gains.size() != data.queries.size()) {
    throw std::invalid_argument("mean_ndcg_with_gains: coverage mismatch");
  }
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    if (q.documents.empty()) continue;
    const auto order = ranking_order(scores[qi], q);
    // Continuous gains enter DCG shifted by their per-query minimum, so
    // they are nonnegative and the least-preferred document carries zero
    // gain.
    const double shift = *std::min_element(gains[qi].begin(), gains[qi].end());
    std::vector<double> ranked(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      ranked[r] = gains[qi][order[r]] - shift;
    }
    std::vector<double> ideal(ranked);
    std::sort(ideal.begin(), ideal.end(), std::greater<double>());
    const auto v = ndcg_at(ranked, ideal, cutoff);
    if (!v) continue;
    acc += *v;
    ++used;
  }
  if (used == 0) return 0.0;
  return acc / static_cast<double>(used);
}

double fisher_randomization(const std::vector<double>& per_query_a,
                            const std::vector<double>& per_query_b, int n_perm,
                            std::uint64_t seed) {
  if (per_query_a.size() != per_query_b.size()) {
    throw std::invalid_argument("fisher_randomization: length mismatch");
  }
  if (per_query_a.size() < 2) {
    throw std::invalid_argument("fisher_randomization: need >= 2 pairs");
  }
  if (n_perm < 1) throw std::invalid_argument("fisher_randomization: n_perm must be >= 1");

  const std::size_t n = per_query_a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = per_query_a[i] - per_query_b[i];
  const double observed =
      std::fabs(std::accumulate(diff.begin(), diff.end(), 0.0)) /
      static_cast<double>(n);

  Rng rng(derive_seed(seed, "fisher"));
  long hits = 0;
  for (int perm = 0; perm < n_perm; ++perm) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += rng.bernoulli(0.5) ? -diff[i] : diff[i];
    }
    if (std::fabs(acc) / static_cast<double>(n) >= observed) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(1 + n_perm);
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << "metric,cutoff,mean,n_queries,n_skipped\n";
  char buf[64];
  for (const auto& [key, s] : report.series) {
    std::snprintf(buf, sizeof(buf), "%.10g", s.mean);
    out << key.first << ',' << key.second << ',' << buf << ','
        << s.per_query.size() << ',' << report.n_skipped << '\n';
  }
}

void save_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["n_queries"] = report.n_queries;
  j["n_skipped"] = report.n_skipped;
  nlohmann::json series = nlohmann::json::array();
  for (const auto& [key, s] : report.series) {
    nlohmann::json entry;
    entry["metric"] = key.first;
    entry["cutoff"] = key.second;
    entry["mean"] = s.mean;
    entry["per_query"] = s.per_query;
    series.push_back(std::move(entry));
  }
  j["series"] = std::move(series);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << j.dump() << '\n';
}

}  // namespace cfc
