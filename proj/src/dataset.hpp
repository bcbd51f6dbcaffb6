#ifndef CFC_DATASET_HPP_
#define CFC_DATASET_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cfc {

struct Document {
  std::int32_t doc_id = 0;  // ordinal within its query, assigned at load
  std::vector<double> features;
  int relevance = 0;

  bool operator==(const Document&) const = default;
};

struct Query {
  std::string query_id;
  std::vector<Document> documents;

  bool operator==(const Query&) const = default;
};

struct Dataset {
  std::vector<Query> queries;
  int feature_dim = 0;
  int rel_max = 4;

  std::size_t total_documents() const;
  bool operator==(const Dataset&) const = default;
};

struct FeatureStats {
  std::vector<double> min;
  std::vector<double> max;
};

// LETOR / SVMlight text: `<rel> qid:<id> <fid>:<val> ... [# comment]`.
// Documents are grouped by qid in first-appearance order; a qid block must
// be contiguous. Missing feature ids fill with 0.0, feature_dim is the
// largest feature id seen, rel_max = max(4, largest label).
Dataset parse_letor(std::istream& in);
Dataset parse_letor_string(const std::string& text);
Dataset load_letor_file(const std::string& path);
void serialize_letor(const Dataset& data, std::ostream& out);
void save_letor_file(const Dataset& data, const std::string& path);

// Min-max normalization fitted per feature; apply maps into [0, 1],
// clamping unseen ranges and sending constant features to 0.
FeatureStats fit_normalizer(const Dataset& data);
Dataset apply_normalizer(const Dataset& data, const FeatureStats& stats);
void save_feature_stats(const FeatureStats& stats, const std::string& path);
FeatureStats load_feature_stats(const std::string& path);

// Query-level split without replacement: round(fraction * n) queries,
// at least one, deterministic in `seed`. Both halves keep the input
// query order.
struct SplitResult {
  Dataset sampled;
  Dataset remainder;
};
SplitResult sample_fraction(const Dataset& data, double fraction,
                            std::uint64_t seed);

// Synthetic fixture: features uniform in [0,1]; relevance is a noisy
// nonlinear score discretized by fixed quantile cuts so every grade in
// {0..4} appears at usual sizes.
Dataset synth_dataset(int n_queries, int docs_per_query, int feature_dim,
                      std::uint64_t seed);

}  // namespace cfc

#endif  // CFC_DATASET_HPP_
