#include "gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "common.hpp"
#include "parallel.hpp"
#include "json.hpp"

namespace cfc::gbdt {

double Tree::eval(const double* row) const {
  int idx = 0;
  while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
    const Node& n = nodes[static_cast<std::size_t>(idx)];
    idx = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(idx)].value;
}

int Tree::leaf_count() const {
  int k = 0;
  for (const auto& n : nodes) {
    if (n.feature < 0) ++k;
  }
  return k;
}

double Ensemble::predict_row(const double* row) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.eval(row);
  return base_score + learning_rate * s;
}

double Ensemble::predict(const std::vector<double>& features, double control) const {
  if (static_cast<int>(features.size()) + 1 != input_dim) {
    throw std::invalid_argument("Ensemble::predict: feature dimension mismatch");
  }
  std::vector<double> row(features);
  row.push_back(control);
  return predict_row(row.data());
}

TreeFitter::TreeFitter(const RowMatrix& rows)
    : n_rows_(rows.n_rows()), n_features_(rows.n_cols) {
  sorted_.resize(static_cast<std::size_t>(n_features_));
  sorted_values_.resize(static_cast<std::size_t>(n_features_));
  parallel_for(static_cast<std::size_t>(n_features_), [&](std::size_t f) {
    auto& order = sorted_[f];
    order.resize(n_rows_);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       return static_cast<float>(rows.at(a, static_cast<int>(f))) <
                              static_cast<float>(rows.at(b, static_cast<int>(f)));
                     });
    auto& values = sorted_values_[f];
    values.resize(n_rows_);
    for (std::size_t i = 0; i < n_rows_; ++i) {
      values[i] = static_cast<float>(rows.at(order[i], static_cast<int>(f)));
    }
  });
}

namespace {

struct SplitInfo {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  std::size_t left_count = 0;
  double g_left = 0.0;
  double h_left = 0.0;

  bool valid() const { return feature >= 0 && gain > 0.0; }
};

struct NodeState {
  int tree_node = 0;
  // per feature: row ids in ascending value order plus the values
  std::vector<std::vector<std::uint32_t>> order;
  std::vector<std::vector<float>> values;
  double g_sum = 0.0;
  double h_sum = 0.0;
  SplitInfo best;

  std::size_t count() const { return order.empty() ? 0 : order[0].size(); }
};

// Candidate ordering: larger gain first; equal gains pop the earlier node.
struct CandidateLess {
  const std::vector<NodeState>* states;
  bool operator()(std::size_t a, std::size_t b) const {
    const SplitInfo& sa = (*states)[a].best;
    const SplitInfo& sb = (*states)[b].best;
    if (sa.gain != sb.gain) return sa.gain < sb.gain;
    return (*states)[a].tree_node > (*states)[b].tree_node;
  }
};

double leaf_value(double g, double h, double reg) { return -g / (h + reg); }

void find_best_split(const std::vector<float>& g, const std::vector<float>& h,
                     const TrainParams& params, NodeState& node) {
  node.best = SplitInfo{};
  const std::size_t n = node.count();
  const std::size_t min_leaf = static_cast<std::size_t>(params.min_data_in_leaf);
  if (n < 2 * min_leaf) return;
  const double reg = params.lambda_reg;
  const double parent_score = node.g_sum * node.g_sum / (node.h_sum + reg);

  const std::size_t n_features = node.order.size();
  std::vector<SplitInfo> per_feature(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    const auto& order = node.order[f];
    const auto& values = node.values[f];
    SplitInfo best;
    double gl = 0.0, hl = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::uint32_t r = order[i];
      gl += g[r];
      hl += h[r];
      const float v = values[i];
      const float v_next = values[i + 1];
      if (v == v_next) continue;
      const std::size_t left_n = i + 1;
      if (left_n < min_leaf || n - left_n < min_leaf) continue;
      const double gr = node.g_sum - gl;
      const double hr = node.h_sum - hl;
      const double gain =
          gl * gl / (hl + reg) + gr * gr / (hr + reg) - parent_score;
      if (gain > best.gain) {
        double thr = 0.5 * (static_cast<double>(v) + static_cast<double>(v_next));
        if (!(thr < static_cast<double>(v_next))) thr = v;  // adjacent floats
        best.gain = gain;
        best.feature = static_cast<int>(f);
        best.threshold = thr;
        best.left_count = left_n;
        best.g_left = gl;
        best.h_left = hl;
      }
    }
    per_feature[f] = best;
  }
  // Reduce in feature order; a strict improvement is required, so equal
  // gains keep the lowest feature index.
  for (const auto& cand : per_feature) {
    if (cand.valid() && cand.gain > node.best.gain) node.best = cand;
  }
}

}  // namespace

Tree TreeFitter::fit(const std::vector<double>& gradients,
                     const std::vector<double>& hessians,
                     const TrainParams& params,
                     std::vector<double>* row_values) const {
  const std::size_t n = n_rows_;
  if (n == 0) throw std::invalid_argument("fit_tree: empty input");
  if (gradients.size() != n || hessians.size() != n) {
    throw std::invalid_argument("fit_tree: gradient/hessian size mismatch");
  }

  std::vector<float> g(n), h(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = static_cast<float>(gradients[i]);
    h[i] = static_cast<float>(hessians[i]);
  }

  Tree tree;
  std::vector<NodeState> states;
  states.reserve(static_cast<std::size_t>(2 * params.max_leaves));

  NodeState root;
  root.tree_node = 0;
  root.order = sorted_;
  root.values = sorted_values_;
  root.g_sum = 0.0;
  root.h_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    root.g_sum += g[i];
    root.h_sum += h[i];
  }
  tree.nodes.push_back(Node{-1, 0.0, -1, -1,
                            leaf_value(root.g_sum, root.h_sum, params.lambda_reg),
                            static_cast<int>(n)});
  find_best_split(g, h, params, root);
  states.push_back(std::move(root));

  std::priority_queue<std::size_t, std::vector<std::size_t>, CandidateLess> frontier(
      CandidateLess{&states});
  if (states[0].best.valid()) frontier.push(0);

  std::vector<std::uint8_t> goes_left(n);
  int leaves = 1;
  while (leaves < params.max_leaves && !frontier.empty()) {
    const std::size_t si = frontier.top();
    frontier.pop();
    NodeState node = std::move(states[si]);
    const SplitInfo& split = node.best;

    // The split feature's sorted order already separates the sides: its
    // first left_count entries form the left child.
    const auto& split_order = node.order[static_cast<std::size_t>(split.feature)];
    for (std::size_t i = 0; i < node.count(); ++i) {
      goes_left[split_order[i]] = i < split.left_count ? 1 : 0;
    }

    NodeState left, right;
    left.g_sum = split.g_left;
    left.h_sum = split.h_left;
    right.g_sum = node.g_sum - split.g_left;
    right.h_sum = node.h_sum - split.h_left;
    const std::size_t n_features = node.order.size();
    left.order.resize(n_features);
    left.values.resize(n_features);
    right.order.resize(n_features);
    right.values.resize(n_features);
    const std::size_t count = node.count();
    for (std::size_t f = 0; f < n_features; ++f) {
      auto& lo = left.order[f];
      auto& lv = left.values[f];
      auto& ro = right.order[f];
      auto& rv = right.values[f];
      lo.reserve(split.left_count);
      lv.reserve(split.left_count);
      ro.reserve(count - split.left_count);
      rv.reserve(count - split.left_count);
      const auto& po = node.order[f];
      const auto& pv = node.values[f];
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t r = po[i];
        if (goes_left[r]) {
          lo.push_back(r);
          lv.push_back(pv[i]);
        } else {
          ro.push_back(r);
          rv.push_back(pv[i]);
        }
      }
    }
    node.order.clear();
    node.values.clear();

    const int left_idx = static_cast<int>(tree.nodes.size());
    const int right_idx = left_idx + 1;
    tree.nodes.push_back(Node{-1, 0.0, -1, -1,
                              leaf_value(left.g_sum, left.h_sum, params.lambda_reg),
                              static_cast<int>(left.count())});
    tree.nodes.push_back(Node{-1, 0.0, -1, -1,
                              leaf_value(right.g_sum, right.h_sum, params.lambda_reg),
                              static_cast<int>(right.count())});
    Node& parent = tree.nodes[static_cast<std::size_t>(node.tree_node)];
    parent.feature = split.feature;
    parent.threshold = split.threshold;
    parent.left = left_idx;
    parent.right = right_idx;
    ++leaves;

    left.tree_node = left_idx;
    right.tree_node = right_idx;
    find_best_split(g, h, params, left);
    find_best_split(g, h, params, right);
    states.push_back(std::move(left));
    if (states.back().best.valid()) frontier.push(states.size() - 1);
    states.push_back(std::move(right));
    if (states.back().best.valid()) frontier.push(states.size() - 1);
  }

  if (row_values) {
    row_values->assign(n, tree.nodes[0].value);
    for (const auto& state : states) {
      if (state.order.empty()) continue;  // split interior node
      const Node& leaf = tree.nodes[static_cast<std::size_t>(state.tree_node)];
      if (leaf.feature >= 0) continue;
      for (std::uint32_t r : state.order[0]) {
        (*row_values)[r] = leaf.value;
      }
    }
  }
  return tree;
}

Tree fit_tree(const RowMatrix& rows, const std::vector<double>& gradients,
              const std::vector<double>& hessians, const TrainParams& params) {
  TreeFitter fitter(rows);
  return fitter.fit(gradients, hessians, params);
}

namespace {

constexpr double kGain[] = {0.0, 1.0, 3.0, 7.0, 15.0, 31.0};

double label_gain(double label) {
  const int l = static_cast<int>(label);
  if (l >= 0 && l <= 5 && static_cast<double>(l) == label) {
    return kGain[l];
  }
  return std::exp2(label) - 1.0;
}

double rank_discount(std::size_t rank0, int cutoff) {
  if (static_cast<int>(rank0) >= cutoff) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank0) + 2.0);
}

struct GroupWork {
  std::vector<std::uint32_t> sorted;  // group-local row order by score desc
  std::vector<double> gains;
};

// Lambda gradients for one group at the current scores. Writes only this
// group's rows. Returns (sum pairwise logistic loss, pair count).
std::pair<double, std::size_t> accumulate_group_lambdas(
    const std::vector<double>& labels, const std::vector<double>& scores,
    const Group& grp, int cutoff, std::vector<double>& g,
    std::vector<double>& h, GroupWork& work) {
  const std::size_t n = grp.count;
  work.sorted.resize(n);
  std::iota(work.sorted.begin(), work.sorted.end(), 0u);
  std::sort(work.sorted.begin(), work.sorted.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              const double sa = scores[grp.start + a];
              const double sb = scores[grp.start + b];
              if (sa != sb) return sa > sb;
              return a < b;
            });
  work.gains.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    work.gains[i] = label_gain(labels[grp.start + i]);
  }
  std::vector<double> ideal(work.gains);
  std::sort(ideal.begin(), ideal.end(), std::greater<double>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < n && static_cast<int>(r) < cutoff; ++r) {
    idcg += ideal[r] * rank_discount(r, cutoff);
  }
  if (idcg <= 0.0) return {0.0, 0};
  const double inv_idcg = 1.0 / idcg;

  double loss_sum = 0.0;
  std::size_t pair_count = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::uint32_t ri = work.sorted[i];
    const double label_i = labels[grp.start + ri];
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::uint32_t rj = work.sorted[j];
      const double label_j = labels[grp.start + rj];
      if (label_i == label_j) continue;

      const bool i_high = label_i > label_j;
      const std::size_t hi_rank = i_high ? i : j;
      const std::size_t lo_rank = i_high ? j : i;
      const std::uint32_t hi = i_high ? ri : rj;
      const std::uint32_t lo = i_high ? rj : ri;
      const double s_diff = scores[grp.start + hi] - scores[grp.start + lo];
      loss_sum += std::log1p(std::exp(-s_diff));
      ++pair_count;

      const double delta =
          std::fabs(work.gains[hi] - work.gains[lo]) *
          std::fabs(rank_discount(hi_rank, cutoff) - rank_discount(lo_rank, cutoff)) *
          inv_idcg;
      if (delta == 0.0) continue;
      const double rho = 1.0 / (1.0 + std::exp(s_diff));
      const double lambda = rho * delta;
      const double weight = rho * (1.0 - rho) * delta;
      g[grp.start + hi] -= lambda;
      g[grp.start + lo] += lambda;
      h[grp.start + hi] += weight;
      h[grp.start + lo] += weight;
    }
  }
  return {loss_sum, pair_count};
}

double mean_pairwise_loss(const std::vector<std::pair<double, std::size_t>>& partials) {
  double loss = 0.0;
  std::size_t pairs = 0;
  for (const auto& [l, c] : partials) {
    loss += l;
    pairs += c;
  }
  return pairs == 0 ? 0.0 : loss / static_cast<double>(pairs);
}

}  // namespace

double ndcg_swap_delta(const std::vector<double>& gains_by_rank, std::size_t rank_a,
                       std::size_t rank_b, int cutoff) {
  std::vector<double> ideal(gains_by_rank);
  std::sort(ideal.begin(), ideal.end(), std::greater<double>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal.size() && static_cast<int>(r) < cutoff; ++r) {
    idcg += ideal[r] * rank_discount(r, cutoff);
  }
  if (idcg <= 0.0) return 0.0;
  return std::fabs(gains_by_rank[rank_a] - gains_by_rank[rank_b]) *
         std::fabs(rank_discount(rank_a, cutoff) - rank_discount(rank_b, cutoff)) /
         idcg;
}

void lambda_gradients(const std::vector<double>& labels,
                      const std::vector<double>& scores,
                      const std::vector<Group>& groups, int cutoff,
                      std::vector<double>& gradients, std::vector<double>& hessians) {
  gradients.assign(labels.size(), 0.0);
  hessians.assign(labels.size(), 0.0);
  std::vector<GroupWork> work(groups.size());
  std::vector<std::pair<double, std::size_t>> partials(groups.size());
  parallel_for(groups.size(), [&](std::size_t gi) {
    partials[gi] = accumulate_group_lambdas(labels, scores, groups[gi], cutoff,
                                            gradients, hessians, work[gi]);
  });
}

Ensemble train_lambdamart_rows(const RowMatrix& rows,
                               const std::vector<double>& labels,
                               const std::vector<Group>& groups,
                               const TrainParams& params, TrainTrace* trace) {
  const std::size_t n = rows.n_rows();
  if (n == 0) throw std::invalid_argument("train_lambdamart: empty input");
  if (labels.size() != n) throw std::invalid_argument("train_lambdamart: label size mismatch");
  if (params.n_trees < 0) throw std::invalid_argument("train_lambdamart: n_trees must be >= 0");

  bool any_discordant = false;
  for (const auto& grp : groups) {
    for (std::size_t i = grp.start + 1; i < grp.start + grp.count; ++i) {
      if (labels[i] != labels[grp.start]) {
        any_discordant = true;
        break;
      }
    }
    if (any_discordant) break;
  }
  if (!any_discordant) {
    throw DataError("train_lambdamart: no label-discordant pair in any group");
  }

  Ensemble model;
  model.objective = "lambdarank";
  model.input_dim = rows.n_cols;
  model.base_score = 0.0;
  model.learning_rate = params.learning_rate;
  model.params = params;

  TreeFitter fitter(rows);
  std::vector<double> scores(n, 0.0);
  std::vector<double> g(n), h(n), row_values;
  std::vector<GroupWork> work(groups.size());
  std::vector<std::pair<double, std::size_t>> partials(groups.size());

  for (int round = 0; round < params.n_trees; ++round) {
    std::fill(g.begin(), g.end(), 0.0);
    std::fill(h.begin(), h.end(), 0.0);
    parallel_for(groups.size(), [&](std::size_t gi) {
      partials[gi] = accumulate_group_lambdas(labels, scores, groups[gi],
                                              params.ndcg_cutoff, g, h, work[gi]);
    });
    if (trace) trace->pairwise_loss.push_back(mean_pairwise_loss(partials));

    model.trees.push_back(fitter.fit(g, h, params, &row_values));
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] += params.learning_rate * row_values[i];
    }
  }
  if (trace) {
    parallel_for(groups.size(), [&](std::size_t gi) {
      partials[gi] = accumulate_group_lambdas(labels, scores, groups[gi],
                                              params.ndcg_cutoff, g, h, work[gi]);
    });
    trace->pairwise_loss.push_back(mean_pairwise_loss(partials));
  }
  return model;
}

Ensemble train_pointwise(const RowMatrix& rows, const std::vector<double>& targets,
                         const TrainParams& params) {
  const std::size_t n = rows.n_rows();
  if (n == 0) throw std::invalid_argument("train_pointwise: empty input");
  if (targets.size() != n) throw std::invalid_argument("train_pointwise: target size mismatch");

  Ensemble model;
  model.objective = "regression";
  model.input_dim = rows.n_cols;
  model.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) /
                     static_cast<double>(n);
  model.learning_rate = params.learning_rate;
  model.params = params;

  TreeFitter fitter(rows);
  std::vector<double> scores(n, model.base_score);
  std::vector<double> g(n), h(n, 1.0), row_values;
  for (int round = 0; round < params.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) g[i] = scores[i] - targets[i];
    model.trees.push_back(fitter.fit(g, h, params, &row_values));
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] += params.learning_rate * row_values[i];
    }
  }
  return model;
}

LambdaMartData build_click_rows(const Dataset& data, const ClickLog& clicks,
                                const std::vector<std::vector<double>>* signals) {
  if (clicks.entries.size() != data.queries.size()) {
    throw std::invalid_argument("build_click_rows: clicks do not cover the dataset");
  }
  if (signals && signals->size() != data.queries.size()) {
    throw std::invalid_argument("build_click_rows: signals do not cover the dataset");
  }
  LambdaMartData out;
  const int cols = data.feature_dim + 1;
  out.rows.n_cols = cols;
  const std::size_t total =
      data.total_documents() * static_cast<std::size_t>(clicks.passes);
  out.rows.values.reserve(total * static_cast<std::size_t>(cols));
  out.labels.reserve(total);
  out.groups.reserve(data.queries.size() * static_cast<std::size_t>(clicks.passes));

  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const Query& q = data.queries[qi];
    if (clicks.entries[qi].size() != q.documents.size() ||
        (signals && (*signals)[qi].size() != q.documents.size())) {
      throw std::invalid_argument("build_click_rows: per-query coverage mismatch");
    }
    for (int pass = 0; pass < clicks.passes; ++pass) {
      Group grp;
      grp.start = out.labels.size();
      grp.count = q.documents.size();
      out.groups.push_back(grp);
      for (std::size_t di = 0; di < q.documents.size(); ++di) {
        const Document& d = q.documents[di];
        out.rows.values.insert(out.rows.values.end(), d.features.begin(),
                               d.features.end());
        out.rows.values.push_back(signals ? (*signals)[qi][di] : 0.0);
        out.labels.push_back(static_cast<double>(
            clicks.entries[qi][di].clicks[static_cast<std::size_t>(pass)]));
      }
    }
  }
  return out;
}

Ensemble train_lambdamart(const Dataset& data, const ClickLog& clicks,
                          const std::vector<std::vector<double>>* signals,
                          const TrainParams& params, TrainTrace* trace) {
  LambdaMartData d = build_click_rows(data, clicks, signals);
  return train_lambdamart_rows(d.rows, d.labels, d.groups, params, trace);
}

Ensemble train_on_relevance(const Dataset& data, const TrainParams& params) {
  LambdaMartData d;
  const int cols = data.feature_dim + 1;
  d.rows.n_cols = cols;
  d.rows.values.reserve(data.total_documents() * static_cast<std::size_t>(cols));
  for (const auto& q : data.queries) {
    Group grp;
    grp.start = d.labels.size();
    grp.count = q.documents.size();
    d.groups.push_back(grp);
    for (const auto& doc : q.documents) {
      d.rows.values.insert(d.rows.values.end(), doc.features.begin(),
                           doc.features.end());
      d.rows.values.push_back(0.0);
      d.labels.push_back(static_cast<double>(doc.relevance));
    }
  }
  return train_lambdamart_rows(d.rows, d.labels, d.groups, params, nullptr);
}

namespace {

void append_num(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string serialize_ensemble(const Ensemble& model) {
  std::string out;
  out.reserve(1024 + model.trees.size() * 4096);
  out += "{\"format\":\"cfc-ensemble\",\"version\":1,\"objective\":\"";
  out += model.objective;
  out += "\",\"input_dim\":";
  out += std::to_string(model.input_dim);
  out += ",\"base_score\":";
  append_num(out, model.base_score);
  out += ",\"learning_rate\":";
  append_num(out, model.learning_rate);
  out += ",\"params\":{\"n_trees\":";
  out += std::to_string(model.params.n_trees);
  out += ",\"learning_rate\":";
  append_num(out, model.params.learning_rate);
  out += ",\"max_leaves\":";
  out += std::to_string(model.params.max_leaves);
  out += ",\"min_data_in_leaf\":";
  out += std::to_string(model.params.min_data_in_leaf);
  out += ",\"ndcg_cutoff\":";
  out += std::to_string(model.params.ndcg_cutoff);
  out += ",\"lambda_reg\":";
  append_num(out, model.params.lambda_reg);
  out += ",\"seed\":";
  out += std::to_string(model.params.seed);
  out += "},\"trees\":[";
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    if (t) out += ',';
    out += "{\"nodes\":[";
    const auto& nodes = model.trees[t].nodes;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i) out += ',';
      const Node& n = nodes[i];
      out += '[';
      out += std::to_string(n.feature);
      out += ',';
      append_num(out, n.threshold);
      out += ',';
      out += std::to_string(n.left);
      out += ',';
      out += std::to_string(n.right);
      out += ',';
      append_num(out, n.value);
      out += ',';
      out += std::to_string(n.count);
      out += ']';
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

Ensemble parse_ensemble(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ensemble parse error: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "cfc-ensemble") {
    throw DataError("not a cfc-ensemble document");
  }
  if (j.value("version", 0) != 1) {
    throw DataError("unsupported cfc-ensemble version");
  }
  Ensemble model;
  try {
    model.objective = j.at("objective").get<std::string>();
    model.input_dim = j.at("input_dim").get<int>();
    model.base_score = j.at("base_score").get<double>();
    model.learning_rate = j.at("learning_rate").get<double>();
    const auto& p = j.at("params");
    model.params.n_trees = p.at("n_trees").get<int>();
    model.params.learning_rate = p.at("learning_rate").get<double>();
    model.params.max_leaves = p.at("max_leaves").get<int>();
    model.params.min_data_in_leaf = p.at("min_data_in_leaf").get<int>();
    model.params.ndcg_cutoff = p.at("ndcg_cutoff").get<int>();
    model.params.lambda_reg = p.at("lambda_reg").get<double>();
    model.params.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& jt : j.at("trees")) {
      Tree tree;
      for (const auto& jn : jt.at("nodes")) {
        Node n;
        n.feature = jn.at(0).get<int>();
        n.threshold = jn.at(1).get<double>();
        n.left = jn.at(2).get<int>();
        n.right = jn.at(3).get<int>();
        n.value = jn.at(4).get<double>();
        n.count = jn.at(5).get<int>();
        tree.nodes.push_back(n);
      }
      if (tree.nodes.empty()) throw DataError("ensemble tree with no nodes");
      model.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ensemble parse error: ") + e.what());
  }
  return model;
}

void save_ensemble(const Ensemble& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << serialize_ensemble(model) << '\n';
}

Ensemble load_ensemble(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_ensemble(buf.str());
}

}  // namespace cfc::gbdt
