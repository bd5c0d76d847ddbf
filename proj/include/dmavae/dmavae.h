/* C interface to the mediation-analysis library. Every function returns a
 * dmavae_status; on failure dmavae_last_error() describes the problem for
 * the calling thread. Handles are opaque and owned by the caller, who
 * releases them with the matching *_free function (NULL is accepted). */
#ifndef DMAVAE_H
#define DMAVAE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DMAVAE_API __declspec(dllexport)
#else
#define DMAVAE_API __attribute__((visibility("default")))
#endif

typedef enum dmavae_status {
  DMAVAE_OK = 0,
  DMAVAE_ERR_SHAPE,
  DMAVAE_ERR_DOMAIN,
  DMAVAE_ERR_SPEC,
  DMAVAE_ERR_ARGUMENT,
  DMAVAE_ERR_MODEL,
  DMAVAE_ERR_TRAINING,
  DMAVAE_ERR_IO,
  DMAVAE_ERR_PARSE,
  DMAVAE_ERR_INGESTION,
  DMAVAE_ERR_UNSUPPORTED,
  DMAVAE_ERR_SINGULAR_DESIGN,
  DMAVAE_ERR_UNDEFINED_METRIC,
  DMAVAE_ERR_AGGREGATION,
  DMAVAE_ERR_CONFIG,
  DMAVAE_ERR_NULL_ARGUMENT,
  DMAVAE_ERR_BUFFER_TOO_SMALL,
  DMAVAE_ERR_INTERNAL
} dmavae_status;

typedef enum dmavae_kind { DMAVAE_CONTINUOUS = 0, DMAVAE_BINARY = 1, DMAVAE_CATEGORICAL = 2 } dmavae_kind;

typedef enum dmavae_oracle { DMAVAE_CLOSED_FORM = 0, DMAVAE_MONTE_CARLO = 1, DMAVAE_ENUMERATION = 2 } dmavae_oracle;

typedef struct dmavae_spec dmavae_spec;
typedef struct dmavae_dataset dmavae_dataset;
typedef struct dmavae_model dmavae_model;
typedef struct dmavae_options dmavae_options;

typedef struct dmavae_effects {
  double nde, nie, nie_r, te;
  double se_nde, se_nie, se_nie_r, se_te;
  int n_samples;
  uint64_t seed;
} dmavae_effects;

typedef struct dmavae_truth {
  double nde, nie, nie_r, te;
  double se_nde, se_nie, se_nie_r, se_te;
  dmavae_oracle method;
  size_t n_mc;
  uint64_t seed;
} dmavae_truth;

typedef struct dmavae_dataset_info {
  size_t n;
  int x_dim;
  dmavae_kind m_kind;
  dmavae_kind y_kind;
  int m_classes;
  int has_truth;
  dmavae_truth truth;
  uint64_t seed;
} dmavae_dataset_info;

typedef struct dmavae_audit_report {
  double nde, nie, tau;
  int direct_flag, indirect_flag;
  size_t n;
  uint64_t seed;
} dmavae_audit_report;

typedef struct dmavae_bench_summary {
  size_t cells;
  size_t failed_cells;
  size_t flagged_aggregates;
  char hash[17];
} dmavae_bench_summary;

DMAVAE_API const char* dmavae_last_error(void);
DMAVAE_API const char* dmavae_status_string(dmavae_status status);

/* Options: string key/value settings shared by model construction, training,
 * estimation, benchmarking and the audit. dmavae_options_keys lists the
 * recognised keys, one per line. `seed` seeds every stage that has no
 * explicit *_seed key. */
DMAVAE_API dmavae_status dmavae_options_create(dmavae_options** out);
DMAVAE_API dmavae_status dmavae_options_set(dmavae_options* opts, const char* key, const char* value);
DMAVAE_API const char* dmavae_options_keys(void);
DMAVAE_API void dmavae_options_free(dmavae_options* opts);

/* Synthetic data specifications. Keys for dmavae_spec_set mirror the spec
 * file format. */
DMAVAE_API dmavae_status dmavae_spec_default(dmavae_spec** out);
DMAVAE_API dmavae_status dmavae_spec_load(const char* path, dmavae_spec** out);
DMAVAE_API dmavae_status dmavae_spec_save(const dmavae_spec* spec, const char* path);
DMAVAE_API dmavae_status dmavae_spec_set(dmavae_spec* spec, const char* key, const char* value);
DMAVAE_API dmavae_status dmavae_spec_case(const dmavae_spec* base, const char* case_id, dmavae_spec** out);
/* method NULL selects the default oracle for the spec. */
DMAVAE_API dmavae_status dmavae_spec_oracle(const dmavae_spec* spec, const char* method, size_t n_mc, uint64_t seed,
                                            dmavae_truth* out);
DMAVAE_API void dmavae_spec_free(dmavae_spec* spec);

DMAVAE_API dmavae_status dmavae_dataset_sample(const dmavae_spec* spec, size_t n, uint64_t seed,
                                               dmavae_dataset** out);
DMAVAE_API dmavae_status dmavae_dataset_load(const char* csv_path, dmavae_dataset** out);
DMAVAE_API dmavae_status dmavae_dataset_save(const dmavae_dataset* data, const char* csv_path);
DMAVAE_API dmavae_status dmavae_dataset_info_get(const dmavae_dataset* data, dmavae_dataset_info* out);
/* Raw Adult census file to a dataset. mapping_in (nullable) reuses saved
 * encodings; mapping_out (nullable) receives the mapping used. opts may be
 * NULL; its `adult_drop` key lists columns to leave out. */
DMAVAE_API dmavae_status dmavae_dataset_ingest_adult(const char* raw_path, const char* mapping_in,
                                                     const char* mapping_out, const dmavae_options* opts,
                                                     dmavae_dataset** out);
DMAVAE_API void dmavae_dataset_free(dmavae_dataset* data);

/* Model sized and typed for `data`. */
DMAVAE_API dmavae_status dmavae_model_create(const dmavae_options* opts, const dmavae_dataset* data,
                                             dmavae_model** out);
/* trace_csv (nullable) receives the per-epoch trace. */
DMAVAE_API dmavae_status dmavae_model_train(dmavae_model* model, const dmavae_dataset* data,
                                            const dmavae_options* opts, const char* trace_csv);
DMAVAE_API dmavae_status dmavae_model_save(const dmavae_model* model, const char* path);
DMAVAE_API dmavae_status dmavae_model_load(const char* path, dmavae_model** out);
DMAVAE_API void dmavae_model_free(dmavae_model* model);

DMAVAE_API dmavae_status dmavae_estimate(const dmavae_model* model, const dmavae_dataset* data,
                                         const dmavae_options* opts, dmavae_effects* out);
DMAVAE_API dmavae_status dmavae_lsem(const dmavae_dataset* data, dmavae_effects* out);

/* JSON text into buf (capacity cap, NUL included). *len receives the text
 * length; with a NULL or short buffer the call returns
 * DMAVAE_ERR_BUFFER_TOO_SMALL after setting *len. */
DMAVAE_API dmavae_status dmavae_effects_json(const dmavae_effects* e, char* buf, size_t cap, size_t* len);
DMAVAE_API dmavae_status dmavae_audit_json(const dmavae_audit_report* r, char* buf, size_t cap, size_t* len);

/* Runs the benchmark grid described by opts on top of `base` and writes the
 * report files into out_dir. */
DMAVAE_API dmavae_status dmavae_bench_run(const dmavae_spec* base, const dmavae_options* opts, const char* out_dir,
                                          dmavae_bench_summary* out);

/* Estimates effects with `model` and applies the threshold `tau` from opts. */
DMAVAE_API dmavae_status dmavae_audit(const dmavae_model* model, const dmavae_dataset* data,
                                      const dmavae_options* opts, dmavae_audit_report* out);

#ifdef __cplusplus
}
#endif

#endif
