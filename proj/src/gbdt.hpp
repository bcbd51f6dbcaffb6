#ifndef CFC_GBDT_HPP_
#define CFC_GBDT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "click_sim.hpp"
#include "dataset.hpp"

namespace cfc::gbdt {

// Binary regression tree. Internal nodes route left when
// row[feature] <= threshold; feature == -1 marks a leaf.
struct Node {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  int count = 0;
};

struct Tree {
  std::vector<Node> nodes;

  double eval(const double* row) const;
  int leaf_count() const;
};

struct TrainParams {
  int n_trees = 100;
  double learning_rate = 0.1;
  int max_leaves = 255;
  int min_data_in_leaf = 2;
  int ndcg_cutoff = 10;  // truncation for the lambda swap deltas
  double lambda_reg = 1.0;
  std::uint64_t seed = 0;
};

struct RowMatrix {
  int n_cols = 0;
  std::vector<double> values;  // row-major

  std::size_t n_rows() const {
    return n_cols == 0 ? 0 : values.size() / static_cast<std::size_t>(n_cols);
  }
  const double* row(std::size_t i) const {
    return values.data() + i * static_cast<std::size_t>(n_cols);
  }
  double at(std::size_t i, int j) const {
    return values[i * static_cast<std::size_t>(n_cols) + static_cast<std::size_t>(j)];
  }
};

// Contiguous run of rows scored together (one query, one pass).
struct Group {
  std::size_t start = 0;
  std::size_t count = 0;
};

// Additive model: score(row) = base_score + learning_rate * sum tree(row).
// input_dim counts the trailing control-signal slot; predict() fills it
// with `control`, zero in inference mode.
struct Ensemble {
  std::string objective;  // "lambdarank" | "regression"
  int input_dim = 0;
  double base_score = 0.0;
  double learning_rate = 0.1;
  TrainParams params;
  std::vector<Tree> trees;

  double predict_row(const double* row) const;
  double predict(const std::vector<double>& features, double control = 0.0) const;
};

struct TrainTrace {
  // Mean pairwise logistic loss over label-discordant pairs, recorded at
  // the scores entering each round and once more after the last round.
  std::vector<double> pairwise_loss;
};

// |NDCG@cutoff change| from swapping the documents at ranks a and b of the
// current ordering. gains_by_rank holds label gains in score order.
double ndcg_swap_delta(const std::vector<double>& gains_by_rank, std::size_t rank_a,
                       std::size_t rank_b, int cutoff);

// One round of lambda gradients/hessians at the given scores.
void lambda_gradients(const std::vector<double>& labels,
                      const std::vector<double>& scores,
                      const std::vector<Group>& groups, int cutoff,
                      std::vector<double>& gradients, std::vector<double>& hessians);

// Pre-sorted feature columns shared by every tree of a training run.
// Values are held column-major in sorted order so split scans stream
// sequentially; feature values are single precision.
class TreeFitter {
 public:
  explicit TreeFitter(const RowMatrix& rows);

  // row_values, when given, receives each row's leaf output so training
  // loops can update scores without walking the tree per row.
  Tree fit(const std::vector<double>& gradients,
           const std::vector<double>& hessians, const TrainParams& params,
           std::vector<double>* row_values = nullptr) const;

 private:
  std::size_t n_rows_ = 0;
  int n_features_ = 0;
  std::vector<std::vector<std::uint32_t>> sorted_;  // per feature, by value
  std::vector<std::vector<float>> sorted_values_;   // aligned with sorted_
};

// One tree of greedy best-first growth. Split gain is
// G_L^2/(H_L+reg) + G_R^2/(H_R+reg) - G^2/(H+reg) over exact sorted
// feature values; leaf value is -G/(H+reg).
Tree fit_tree(const RowMatrix& rows, const std::vector<double>& gradients,
              const std::vector<double>& hessians, const TrainParams& params);

Ensemble train_lambdamart_rows(const RowMatrix& rows,
                               const std::vector<double>& labels,
                               const std::vector<Group>& groups,
                               const TrainParams& params,
                               TrainTrace* trace = nullptr);

Ensemble train_pointwise(const RowMatrix& rows,
                         const std::vector<double>& targets,
                         const TrainParams& params);

// Training rows for the click objective: one row per (document, pass) of
// (features ++ control signal), label = that pass's click bit, grouped by
// (query, pass). signals == nullptr fills the control slot with zeros.
struct LambdaMartData {
  RowMatrix rows;
  std::vector<double> labels;
  std::vector<Group> groups;
};

LambdaMartData build_click_rows(const Dataset& data, const ClickLog& clicks,
                                const std::vector<std::vector<double>>* signals);

Ensemble train_lambdamart(const Dataset& data, const ClickLog& clicks,
                          const std::vector<std::vector<double>>* signals,
                          const TrainParams& params, TrainTrace* trace = nullptr);

// Relevance-labeled ranker (the upper-bound reference): one row per
// document, zero control slot, grouped by query.
Ensemble train_on_relevance(const Dataset& data, const TrainParams& params);

std::string serialize_ensemble(const Ensemble& model);
Ensemble parse_ensemble(const std::string& text);
void save_ensemble(const Ensemble& model, const std::string& path);
Ensemble load_ensemble(const std::string& path);

}  // namespace cfc::gbdt

#endif  // CFC_GBDT_HPP_
