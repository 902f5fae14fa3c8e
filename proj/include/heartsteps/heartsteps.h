/* C interface to the heartsteps library. All functions return an hs_status;
 * on failure hs_last_error() describes the problem for the calling thread.
 * Objects are opaque and released with the matching *_free function. */
#ifndef HEARTSTEPS_H
#define HEARTSTEPS_H

#include <stddef.h>
#include <stdint.h>

#if defined(HS_BUILDING_LIBRARY)
#define HS_API __attribute__((visibility("default")))
#else
#define HS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hs_status {
    HS_OK = 0,
    HS_ERR_INVALID_ARGUMENT = 1,
    HS_ERR_PARSE = 2,
    HS_ERR_IO = 3,
    HS_ERR_NUMERICAL = 4,
    HS_ERR_RANK_DEFICIENT = 5,
    HS_ERR_CONVERGENCE = 6,
    HS_ERR_INTERNAL = 7
} hs_status;

typedef struct hs_config hs_config;
typedef struct hs_corpus hs_corpus;
typedef struct hs_bundle hs_bundle;
typedef struct hs_tuning hs_tuning;

HS_API const char* hs_version(void);
HS_API const char* hs_status_string(hs_status status);
/* Message of the last failed call on this thread; empty after a success. */
HS_API const char* hs_last_error(void);

/* Algorithm settings plus the synthetic-corpus specification. */
HS_API hs_status hs_config_default(hs_config** out);
HS_API hs_status hs_config_read(const char* path, hs_config** out);
HS_API hs_status hs_config_parse(const char* json, hs_config** out);
/* Caller frees *out with hs_string_free. */
HS_API hs_status hs_config_to_json(const hs_config* cfg, char** out);
HS_API void hs_config_free(hs_config* cfg);

HS_API hs_status hs_corpus_generate(const hs_config* cfg, uint64_t seed, hs_corpus** out);
HS_API hs_status hs_corpus_read(const char* path, hs_corpus** out);
HS_API hs_status hs_corpus_write(const hs_corpus* corpus, const char* path);
HS_API size_t hs_corpus_rows(const hs_corpus* corpus);
HS_API size_t hs_corpus_participants(const hs_corpus* corpus);
/* Id of participant i, or NULL when out of range. Owned by the corpus. */
HS_API const char* hs_corpus_participant_id(const hs_corpus* corpus, size_t i);
HS_API void hs_corpus_free(hs_corpus* corpus);

HS_API hs_status hs_calibrate(const hs_corpus* corpus, const hs_config* cfg, hs_bundle** out);
HS_API hs_status hs_bundle_read(const char* path, hs_bundle** out);
HS_API hs_status hs_bundle_write(const hs_bundle* bundle, const char* path);

typedef struct hs_bundle_info {
    double sigma2;
    double p_avail;
    double gamma;
    double w;
    size_t n_participants;
    size_t n_rows;
    int tuned;
} hs_bundle_info;

HS_API hs_status hs_bundle_info_get(const hs_bundle* bundle, hs_bundle_info* out);
HS_API void hs_bundle_free(hs_bundle* bundle);

/* NULL grids select the defaults {0, .25, .5, .75, .9, .95} and
 * {0, .1, .25, .5, .75, 1}; reps <= 0 selects 96. */
typedef struct hs_grid_options {
    const double* gammas;
    size_t n_gammas;
    const double* ws;
    size_t n_ws;
    int reps;
    int jobs;
} hs_grid_options;

/* Grid search on environments built from `corpus` with the bundle's
 * population coefficients. */
HS_API hs_status hs_tune(const hs_corpus* corpus, const hs_bundle* bundle,
                         const hs_grid_options* opts, uint64_t seed, hs_tuning** out);
HS_API hs_status hs_tuning_best(const hs_tuning* tuning, double* gamma, double* w);
/* Mean total reward of cell (gamma index, w index). */
HS_API hs_status hs_tuning_cell(const hs_tuning* tuning, size_t gi, size_t wi, double* out);
HS_API hs_status hs_tuning_write(const hs_tuning* tuning, const char* path);
/* Sets the bundle's gamma and w to the tuned pair and re-solves H1. */
HS_API hs_status hs_bundle_apply_tuning(hs_bundle* bundle, const hs_tuning* tuning);
HS_API void hs_tuning_free(hs_tuning* tuning);

typedef enum hs_policy { HS_POLICY_PROPOSED = 0, HS_POLICY_BANDIT = 1 } hs_policy;

/* One episode for one participant of `corpus`, rewards generated with the
 * bundle's population coefficients. Writes the trajectory log CSV. */
HS_API hs_status hs_simulate(const hs_corpus* corpus, const hs_bundle* bundle,
                             const char* participant, hs_policy policy, uint64_t seed,
                             const char* trajectory_csv, double* total_reward);

typedef struct hs_evaluate_options {
    int folds;        /* <= 0: 3 */
    int reps;         /* <= 0: 96 */
    int tuning_reps;  /* <= 0: same as reps */
    hs_grid_options grid;
    int null_comparison;
    int write_trajectories;
    int jobs;
} hs_evaluate_options;

typedef struct hs_evaluate_summary {
    size_t n_participants;
    size_t n_improved;
    double mean_improvement;
    double p_value;
} hs_evaluate_summary;

/* Cross-validated comparison with the Thompson-sampling bandit. Writes
 * report.csv, summary.json and, if requested, trajectories/ into out_dir. */
HS_API hs_status hs_evaluate(const hs_corpus* corpus, const hs_config* cfg,
                             const hs_evaluate_options* opts, uint64_t seed, const char* out_dir,
                             hs_evaluate_summary* summary);

/* Lowercase hex digest into out (65 bytes including the terminator). */
HS_API hs_status hs_sha256_file(const char* path, char out[65]);
HS_API void hs_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
