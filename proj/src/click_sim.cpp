#include "click_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "common.hpp"
#include "parallel.hpp"

namespace cfc {

double LinearRanker::score(const std::vector<double>& features) const {
  if (features.size() != weights.size()) {
    throw std::invalid_argument("LinearRanker: feature dimension mismatch");
  }
  double s = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * features[j];
  return s;
}

int ClickEntry::total() const {
  return std::accumulate(clicks.begin(), clicks.end(), 0);
}

double ClickEntry::rate() const {
  if (clicks.empty()) return 0.0;
  return static_cast<double>(total()) / static_cast<double>(clicks.size());
}

LinearRanker train_initial_ranker(const Dataset& data, int epochs,
                                  double step_size, std::uint64_t seed) {
  if (epochs <= 0 || step_size <= 0.0) {
    throw std::invalid_argument("train_initial_ranker: epochs and step_size must be positive");
  }
  struct Pair {
    const Document* hi;
    const Document* lo;
  };
  std::vector<Pair> pairs;
  for (const auto& q : data.queries) {
    for (std::size_t i = 0; i < q.documents.size(); ++i) {
      for (std::size_t j = 0; j < q.documents.size(); ++j) {
        if (q.documents[i].relevance > q.documents[j].relevance) {
          pairs.push_back({&q.documents[i], &q.documents[j]});
        }
      }
    }
  }
  if (pairs.empty()) {
    throw DataError("train_initial_ranker: no within-query pairs with differing relevance");
  }

  LinearRanker ranker;
  ranker.weights.assign(static_cast<std::size_t>(data.feature_dim), 0.0);
  Rng rng(derive_seed(seed, "initial-ranker"));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t k : order) {
      const auto& p = pairs[k];
      const double margin = ranker.score(p.hi->features) - ranker.score(p.lo->features);
      if (margin < 1.0) {
        for (std::size_t j = 0; j < ranker.weights.size(); ++j) {
          ranker.weights[j] += step_size * (p.hi->features[j] - p.lo->features[j]);
        }
      }
    }
  }
  return ranker;
}

void save_linear_ranker(const LinearRanker& ranker, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  char buf[64];
  out << "linear-ranker " << ranker.weights.size() << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", ranker.bias);
  out << buf << '\n';
  for (double w : ranker.weights) {
    std::snprintf(buf, sizeof(buf), "%.17g", w);
    out << buf << '\n';
  }
}

LinearRanker load_linear_ranker(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string magic;
  std::size_t dim = 0;
  if (!(in >> magic >> dim) || magic != "linear-ranker") {
    throw DataError("not a linear ranker file: " + path);
  }
  LinearRanker ranker;
  if (!(in >> ranker.bias)) throw DataError("truncated ranker file: " + path);
  ranker.weights.resize(dim);
  for (auto& w : ranker.weights) {
    if (!(in >> w)) throw DataError("truncated ranker file: " + path);
  }
  return ranker;
}

RankedLists rank_with(const LinearRanker& ranker, const Dataset& data) {
  if (ranker.weights.size() != static_cast<std::size_t>(data.feature_dim)) {
    throw std::invalid_argument("rank_with: feature dimension mismatch");
  }
  RankedLists lists;
  lists.positions.resize(data.queries.size());
  parallel_for(data.queries.size(), [&](std::size_t qi) {
    const Query& q = data.queries[qi];
    std::vector<std::pair<double, std::int32_t>> scored(q.documents.size());
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      scored[di] = {ranker.score(q.documents[di].features), q.documents[di].doc_id};
    }
    std::vector<std::size_t> order(q.documents.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
      return scored[a].second < scored[b].second;
    });
    auto& pos = lists.positions[qi];
    pos.resize(q.documents.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      pos[order[r]] = static_cast<int>(r) + 1;
    }
  });
  return lists;
}

double observation_prob(int position, double eta) {
  if (position < 1) throw std::invalid_argument("observation_prob: position must be >= 1");
  return std::pow(1.0 / static_cast<double>(position), eta);
}

double relevance_prob(int rel, int rel_max, double eps_noise) {
  if (rel < 0 || rel > rel_max) {
    throw std::invalid_argument("relevance_prob: rel out of [0, rel_max]");
  }
  if (!(eps_noise >= 0.0 && eps_noise <= 1.0)) {
    throw std::invalid_argument("relevance_prob: eps_noise out of [0,1]");
  }
  const double graded = (std::exp2(rel) - 1.0) / (std::exp2(rel_max) - 1.0);
  return eps_noise + (1.0 - eps_noise) * graded;
}

ClickLog simulate_clicks(const RankedLists& lists, const Dataset& data,
                         const SimConfig& cfg) {
  if (lists.positions.size() != data.queries.size()) {
    throw std::invalid_argument("simulate_clicks: lists do not cover the dataset");
  }
  if (cfg.passes <= 0) throw std::invalid_argument("simulate_clicks: passes must be positive");
  if (cfg.eta < 0.0) throw std::invalid_argument("simulate_clicks: eta must be >= 0");

  ClickLog log;
  log.passes = cfg.passes;
  log.entries.resize(data.queries.size());
  parallel_for(data.queries.size(), [&](std::size_t qi) {
    const Query& q = data.queries[qi];
    if (lists.positions[qi].size() != q.documents.size()) {
      throw std::invalid_argument("simulate_clicks: lists do not cover the dataset");
    }
    Rng rng(derive_seed(cfg.seed, "click-sim", fnv1a64(q.query_id)));
    auto& entries = log.entries[qi];
    entries.resize(q.documents.size());
    std::vector<double> prob(q.documents.size());
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      const int position = lists.positions[qi][di];
      prob[di] = observation_prob(position, cfg.eta) *
                 relevance_prob(q.documents[di].relevance, data.rel_max, cfg.eps_noise);
      entries[di].position = position;
      entries[di].clicks.resize(static_cast<std::size_t>(cfg.passes));
    }
    for (int pass = 0; pass < cfg.passes; ++pass) {
      for (std::size_t di = 0; di < q.documents.size(); ++di) {
        entries[di].clicks[static_cast<std::size_t>(pass)] =
            rng.bernoulli(prob[di]) ? 1 : 0;
      }
    }
  });
  return log;
}

void save_click_log(const ClickLog& log, const Dataset& data,
                    const std::string& path) {
  if (log.entries.size() != data.queries.size()) {
    throw std::invalid_argument("save_click_log: log does not cover the dataset");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << "query_id\tdoc_id\tposition\tpass\tclicked\n";
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    for (std::size_t di = 0; di < q.documents.size(); ++di) {
      const ClickEntry& e = log.entries[qi][di];
      for (int pass = 0; pass < log.passes; ++pass) {
        out << q.query_id << '\t' << q.documents[di].doc_id << '\t' << e.position
            << '\t' << (pass + 1) << '\t'
            << static_cast<int>(e.clicks[static_cast<std::size_t>(pass)]) << '\n';
      }
    }
  }
}

ClickLog load_click_log(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  ClickLog log;
  log.entries.resize(data.queries.size());
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    log.entries[qi].resize(data.queries[qi].documents.size());
  }

  std::string line;
  std::size_t line_no = 0;
  std::size_t qi = 0;
  int max_pass = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("query_id", 0) == 0) continue;
    std::istringstream row(line);
    std::string qid;
    long doc_id = 0, position = 0, pass = 0, clicked = 0;
    if (!(row >> qid >> doc_id >> position >> pass >> clicked) ||
        (clicked != 0 && clicked != 1) || pass < 1 || position < 1) {
      throw DataError("click log parse error at line " + std::to_string(line_no));
    }
    // rows must be grouped per query in dataset order; advance only forward
    while (qi < data.queries.size() && data.queries[qi].query_id != qid) ++qi;
    if (qi >= data.queries.size()) {
      throw DataError("click log line " + std::to_string(line_no) +
                      ": query " + qid + " not found in dataset order");
    }
    const Query& q = data.queries[qi];
    if (doc_id < 0 || static_cast<std::size_t>(doc_id) >= q.documents.size()) {
      throw DataError("click log line " + std::to_string(line_no) + ": bad doc_id");
    }
    ClickEntry& e = log.entries[qi][static_cast<std::size_t>(doc_id)];
    e.position = static_cast<int>(position);
    if (static_cast<std::size_t>(pass) > e.clicks.size()) {
      e.clicks.resize(static_cast<std::size_t>(pass), 0);
    }
    e.clicks[static_cast<std::size_t>(pass - 1)] = static_cast<std::uint8_t>(clicked);
    max_pass = std::max(max_pass, static_cast<int>(pass));
  }
  if (max_pass == 0) throw DataError("click log is empty: " + path);
  log.passes = max_pass;
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    for (auto& e : log.entries[i]) {
      if (e.position == 0) {
        throw DataError("click log missing rows for query " + data.queries[i].query_id);
      }
      e.clicks.resize(static_cast<std::size_t>(max_pass), 0);
    }
  }
  return log;
}

RankedLists lists_from_click_log(const ClickLog& log) {
  RankedLists lists;
  lists.positions.resize(log.entries.size());
  for (std::size_t qi = 0; qi < log.entries.size(); ++qi) {
    lists.positions[qi].resize(log.entries[qi].size());
    for (std::size_t di = 0; di < log.entries[qi].size(); ++di) {
      lists.positions[qi][di] = log.entries[qi][di].position;
    }
  }
  return lists;
}

}  // namespace cfc
