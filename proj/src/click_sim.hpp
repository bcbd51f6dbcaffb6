#ifndef CFC_CLICK_SIM_HPP_
#define CFC_CLICK_SIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace cfc {

struct LinearRanker {
  std::vector<double> weights;
  double bias = 0.0;

  double score(const std::vector<double>& features) const;
};

// Logged presentation order. positions[qi][di] is the 1-based position of
// document di of query qi; each query's positions are a permutation of
// 1..n_docs.
struct RankedLists {
  std::vector<std::vector<int>> positions;
};

struct SimConfig {
  double eta = 1.0;        // position bias severity
  double eps_noise = 0.0;  // click noise floor
  int passes = 10;
  std::uint64_t seed = 0;
};

// clicks[qi][di] holds one bit per pass plus the logged position.
struct ClickEntry {
  int position = 0;
  std::vector<std::uint8_t> clicks;

  int total() const;
  double rate() const;
};

struct ClickLog {
  int passes = 0;
  std::vector<std::vector<ClickEntry>> entries;
};

// Linear scorer fitted by stochastic subgradient descent on the pairwise
// hinge loss over within-query pairs with differing relevance.
LinearRanker train_initial_ranker(const Dataset& data, int epochs,
                                  double step_size, std::uint64_t seed);
void save_linear_ranker(const LinearRanker& ranker, const std::string& path);
LinearRanker load_linear_ranker(const std::string& path);

// Sort per query by descending score; ties break by ascending doc_id.
RankedLists rank_with(const LinearRanker& ranker, const Dataset& data);

// (1/position)^eta.
double observation_prob(int position, double eta);

// eps + (1 - eps) * (2^rel - 1) / (2^rel_max - 1).
double relevance_prob(int rel, int rel_max, double eps_noise);

// Position-based click model: independently per pass, clicked with
// probability observation_prob * relevance_prob. Per-query randomness is a
// substream of (seed, query_id), so the result is parallelism-invariant.
ClickLog simulate_clicks(const RankedLists& lists, const Dataset& data,
                         const SimConfig& cfg);

// TSV `query_id doc_id position pass clicked`, one row per (doc, pass).
void save_click_log(const ClickLog& log, const Dataset& data,
                    const std::string& path);
ClickLog load_click_log(const std::string& path, const Dataset& data);

RankedLists lists_from_click_log(const ClickLog& log);

}  // namespace cfc

#endif  // CFC_CLICK_SIM_HPP_
