/*
 * C API for the cfc library: control-function correction of position bias
 * in learning-to-rank pipelines.
 *
 * Every function returns CFC_OK (0) on success or a nonzero error code;
 * cfc_get_last_error() describes the most recent failure on the calling
 * thread. Out-parameters are written only on success. Handles own their
 * objects and are released with the matching *_free function (freeing a
 * NULL handle is a no-op).
 */
#ifndef CFC_C_API_H_
#define CFC_C_API_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CFC_OK 0
/* invalid argument or unknown option */
#define CFC_ERR_ARG 1
/* malformed or inconsistent data (files, mismatched handles) */
#define CFC_ERR_DATA 2
/* unexpected internal failure */
#define CFC_ERR_INTERNAL 3

typedef void* CfcDataset;       /* queries with features and relevance */
typedef void* CfcFeatureStats;  /* min-max normalizer statistics */
typedef void* CfcRanker;        /* linear pairwise ranker (logging policy) */
typedef void* CfcLists;         /* logged positions per query-document */
typedef void* CfcClicks;        /* per-pass click log */
typedef void* CfcFirstStage;    /* position model m() */
typedef void* CfcResiduals;     /* first-stage residuals */
typedef void* CfcTransform;     /* fitted residual transform */
typedef void* CfcSignals;       /* transformed residuals (control signals) */
typedef void* CfcModel;         /* boosted tree ensemble g() */

const char* cfc_get_last_error(void);

/* Worker cap for internal parallelism; 0 restores one per hardware
 * thread. Results are identical for any setting. */
int cfc_set_max_threads(int n);

/* ---- datasets (LETOR/SVMlight text format) ---- */
int cfc_dataset_load(const char* path, CfcDataset* out);
int cfc_dataset_save(CfcDataset data, const char* path);
int cfc_dataset_synth(int n_queries, int docs_per_query, int feature_dim,
                      uint64_t seed, CfcDataset* out);
int cfc_dataset_info(CfcDataset data, size_t* n_queries, size_t* n_documents,
                     int* feature_dim, int* rel_max);
/* query-level split: round(fraction * n) queries, at least one */
int cfc_dataset_sample(CfcDataset data, double fraction, uint64_t seed,
                       CfcDataset* sampled, CfcDataset* remainder);
int cfc_normalizer_fit(CfcDataset data, CfcFeatureStats* out);
int cfc_normalizer_apply(CfcDataset data, CfcFeatureStats stats, CfcDataset* out);
int cfc_normalizer_save(CfcFeatureStats stats, const char* path);
int cfc_normalizer_load(const char* path, CfcFeatureStats* out);
void cfc_dataset_free(CfcDataset data);
void cfc_normalizer_free(CfcFeatureStats stats);

/* ---- click simulation ---- */
int cfc_ranker_train(CfcDataset data, int epochs, double step_size,
                     uint64_t seed, CfcRanker* out);
int cfc_ranker_save(CfcRanker ranker, const char* path);
int cfc_ranker_load(const char* path, CfcRanker* out);
int cfc_ranker_rank(CfcRanker ranker, CfcDataset data, CfcLists* out);
void cfc_ranker_free(CfcRanker ranker);
void cfc_lists_free(CfcLists lists);

int cfc_observation_prob(int position, double eta, double* out);
int cfc_relevance_prob(int rel, int rel_max, double eps_noise, double* out);

int cfc_simulate_clicks(CfcLists lists, CfcDataset data, double eta,
                        double eps_noise, int passes, uint64_t seed,
                        CfcClicks* out);
int cfc_clicks_save(CfcClicks clicks, CfcDataset data, const char* path);
int cfc_clicks_load(const char* path, CfcDataset data, CfcClicks* out);
int cfc_clicks_lists(CfcClicks clicks, CfcLists* out);
void cfc_clicks_free(CfcClicks clicks);

/* ---- first stage ---- */
/* kind: "ridge" | "gbdt-regression"; lambda < 0 selects it on a held-out
 * split; gbdt_* apply to the gbdt kind. */
int cfc_first_stage_fit(CfcDataset data, CfcLists lists, const char* kind,
                        double lambda, int gbdt_trees, double gbdt_learning_rate,
                        int gbdt_max_leaves, int gbdt_min_data, uint64_t seed,
                        CfcFirstStage* out);
int cfc_first_stage_save(CfcFirstStage model, const char* path);
int cfc_first_stage_load(const char* path, CfcFirstStage* out);
int cfc_first_stage_residuals(CfcFirstStage model, CfcDataset data,
                              CfcLists lists, CfcResiduals* out);
void cfc_first_stage_free(CfcFirstStage model);

int cfc_residuals_save(CfcResiduals residuals, CfcDataset data, const char* path);
int cfc_residuals_load(const char* path, CfcDataset data, CfcResiduals* out);
void cfc_residuals_free(CfcResiduals residuals);

/* Fligner-Killeen homogeneity-of-variance test over flattened groups. */
int cfc_fligner_killeen(const double* values, const size_t* group_sizes,
                        size_t n_groups, double* statistic, int* dof,
                        double* p_value);
/* Residuals binned into n_bins equal-frequency bins of predicted position. */
int cfc_heteroskedasticity(CfcResiduals residuals, int n_bins, double* statistic,
                           int* dof, double* p_value);

/* ---- residual transforms ---- */
/* kind: "minmax" | "pdf" | "imr" | "kde-hazard" */
int cfc_transform_fit(const char* kind, CfcResiduals residuals, CfcTransform* out);
int cfc_transform_save(CfcTransform transform, const char* path);
int cfc_transform_load(const char* path, CfcTransform* out);
int cfc_transform_value(CfcTransform transform, double value, double* out);
int cfc_transform_apply(CfcTransform transform, CfcResiduals residuals,
                        CfcSignals* out);
void cfc_transform_free(CfcTransform transform);

int cfc_signals_save(CfcSignals signals, CfcDataset data, const char* path);
int cfc_signals_load(const char* path, CfcDataset data, CfcSignals* out);
void cfc_signals_free(CfcSignals signals);

int cfc_normal_cdf(double z, double* out);

/* ---- ranker training ---- */
/* signals may be NULL: the control slot trains as zero (biased baseline). */
int cfc_train_lambdamart(CfcDataset data, CfcClicks clicks, CfcSignals signals,
                         int n_trees, double learning_rate, int max_leaves,
                         int min_data_in_leaf, int ndcg_cutoff, uint64_t seed,
                         CfcModel* out);
/* relevance-labeled upper bound */
int cfc_train_oracle(CfcDataset data, int n_trees, double learning_rate,
                     int max_leaves, int min_data_in_leaf, int ndcg_cutoff,
                     uint64_t seed, CfcModel* out);
int cfc_model_save(CfcModel model, const char* path);
int cfc_model_load(const char* path, CfcModel* out);
/* features has input_dim - 1 entries; control fills the trailing slot
 * (0 in inference mode). */
int cfc_model_predict(CfcModel model, const double* features, size_t n_features,
                      double control, double* out);
int cfc_model_info(CfcModel model, int* input_dim, size_t* n_trees);
void cfc_model_free(CfcModel model);

/* ---- evaluation ---- */
int cfc_ndcg_at(const double* ranked_gains, const double* ideal_gains, size_t n,
                int cutoff, double* out, int* skipped);
int cfc_err_at(const int* ranked_rels, size_t n, int cutoff, int rel_max,
               double* out);
/* writes `metric,cutoff,mean,n_queries,n_skipped` CSV and, when
 * json_path is non-NULL, per-query vectors as JSON */
int cfc_evaluate(CfcModel model, CfcDataset data, const int* cutoffs,
                 size_t n_cutoffs, const char* csv_path, const char* json_path);
int cfc_evaluate_mean(CfcModel model, CfcDataset data, const char* metric,
                      int cutoff, double* out);
int cfc_fisher_test(const double* per_query_a, const double* per_query_b,
                    size_t n, int n_permutations, uint64_t seed, double* p_value);

/* ---- pipeline ---- */
int cfc_debias_validation(CfcSignals train_signals, CfcClicks train_clicks,
                          CfcSignals valid_signals, CfcClicks valid_clicks,
                          double lambda, double* slope, double* intercept,
                          const char* proxy_tsv_path, CfcDataset valid_data);

/* Grid search over transforms x trees x learning rates selecting by
 * validation loss. transforms: comma list; trees / learning_rates: comma
 * lists; validation: "true-relevance" | "debiased-clicks" |
 * "biased-clicks". report_csv_path may be NULL. */
int cfc_tune(CfcDataset train, CfcDataset valid, CfcClicks train_clicks,
             CfcClicks valid_clicks, CfcResiduals train_residuals,
             CfcResiduals valid_residuals, const char* transforms,
             const char* trees, const char* learning_rates,
             const char* validation, int max_leaves, int min_data_in_leaf,
             int ndcg_cutoff, double debias_lambda, uint64_t seed,
             const char* report_csv_path, CfcModel* best);

/* Full experiment from a key=value config file; outputs under out_dir
 * (overrides the config's out_dir when non-NULL). */
int cfc_run_experiment(const char* config_path, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* CFC_C_API_H_ */
