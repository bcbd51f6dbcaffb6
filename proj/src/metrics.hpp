#ifndef CFC_METRICS_HPP_
#define CFC_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "gbdt.hpp"

namespace cfc {

struct MetricConfig {
  std::vector<int> cutoffs{5, 10, 15};
  int rel_max = 4;
};

// NDCG@p over gains in presented order; ideal_gains is the same multiset
// sorted descending. Empty when IDCG is zero (the aggregator skips such
// queries).
std::optional<double> ndcg_at(const std::vector<double>& ranked_gains,
                              const std::vector<double>& ideal_gains, int p);

// ERR@p with stopping probabilities (2^rel - 1) / 2^rel_max.
double err_at(const std::vector<int>& ranked_rels, int p, int rel_max);

struct MetricSeries {
  double mean = 0.0;
  std::vector<double> per_query;
};

struct EvalReport {
  // key: {"ndcg" | "err", cutoff}
  std::map<std::pair<std::string, int>, MetricSeries> series;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;  // queries with zero IDCG

  const MetricSeries& at(const std::string& metric, int cutoff) const;
};

// Score with control = 0, sort descending (doc_id tiebreak), score against
// true relevance.
EvalReport evaluate(const gbdt::Ensemble& model, const Dataset& data,
                    const MetricConfig& cfg);

// Same protocol against externally supplied per-document scores.
EvalReport evaluate_scores(const std::vector<std::vector<double>>& scores,
                           const Dataset& data, const MetricConfig& cfg);

std::vector<std::vector<double>> score_dataset(const gbdt::Ensemble& model,
                                               const Dataset& data);

// Mean NDCG@cutoff of model scores against arbitrary per-document gains
// (proxy relevance, click rates). Continuous gains are shifted per query
// by their minimum so they are nonnegative.
double mean_ndcg_with_gains(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<double>>& gains,
                            const Dataset& data, int cutoff);

// Two-sided paired randomization test on per-query metric vectors: each
// pair swaps sides with probability 1/2, p = (1 + #{|d_perm| >= |d|}) /
// (1 + n_perm).
double fisher_randomization(const std::vector<double>& per_query_a,
                            const std::vector<double>& per_query_b, int n_perm,
                            std::uint64_t seed);

// CSV `metric,cutoff,mean,n_queries,n_skipped`.
void save_report_csv(const EvalReport& report, const std::string& path);
// JSON with the per-query vectors for downstream significance testing.
void save_report_json(const EvalReport& report, const std::string& path);

}  // namespace cfc

#endif  // CFC_METRICS_HPP_
