#ifndef NEC_NEC_H
#define NEC_NEC_H

/* C interface to the episodic-control library. Every function returns an
 * nec_status; on failure nec_last_error() describes the problem (the message is
 * thread-local and valid until the next failing call on the same thread).
 * Strings returned through char** are heap-allocated and released with
 * nec_string_free. Handles are released with their matching *_free function;
 * passing NULL to a *_free function is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(NEC_BUILDING_LIBRARY)
#    define NEC_API __declspec(dllexport)
#  else
#    define NEC_API __declspec(dllimport)
#  endif
#else
#  define NEC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nec_status {
    NEC_OK = 0,
    NEC_ERR_CONFIG = 1,       /* invalid or unknown configuration */
    NEC_ERR_INPUT = 2,        /* malformed argument or data */
    NEC_ERR_INTERNAL = 3,     /* invariant violation inside the library */
    NEC_ERR_USAGE = 4,        /* call made in the wrong state */
    NEC_ERR_EMPTY_MEMORY = 5, /* lookup on an empty memory */
    NEC_ERR_IO = 6,           /* file could not be read or written */
    NEC_ERR_AGGREGATION = 7   /* missing or degenerate reference scores */
} nec_status;

typedef struct nec_config nec_config;
typedef struct nec_run_record nec_run_record;
typedef struct nec_dnd nec_dnd;

NEC_API const char* nec_version(void);
NEC_API const char* nec_last_error(void);
NEC_API const char* nec_status_string(nec_status status);
NEC_API void nec_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

NEC_API nec_status nec_config_default(nec_config** out);
NEC_API nec_status nec_config_parse(const char* text, nec_config** out);
NEC_API nec_status nec_config_load(const char* path, nec_config** out);
/* Sets one key; the configuration is re-validated by the functions that use it. */
NEC_API nec_status nec_config_set(nec_config* cfg, const char* key, const char* value);
NEC_API nec_status nec_config_get(const nec_config* cfg, const char* key, char** value);
NEC_API nec_status nec_config_validate(const nec_config* cfg);
/* Full `key = value` listing that parses back to the same configuration. */
NEC_API nec_status nec_config_to_text(const nec_config* cfg, char** text);
NEC_API void nec_config_free(nec_config* cfg);

/* ---- experiments ------------------------------------------------------ */

/* Trains every configured seed and computes reference scores for the env. */
NEC_API nec_status nec_run_experiment(const nec_config* cfg, nec_run_record** out);
/* Rows in the frozen schema env,agent,seed,step,metric,value. */
NEC_API nec_status nec_run_record_csv(const nec_run_record* rec, char** csv);
NEC_API nec_status nec_run_record_summary_json(const nec_run_record* rec, char** json);
NEC_API nec_status nec_run_record_num_rows(const nec_run_record* rec, size_t* n);
/* Borrowed strings stay valid while the record lives. */
NEC_API nec_status nec_run_record_row(const nec_run_record* rec, size_t i, const char** env, const char** agent,
                                      uint64_t* seed, uint64_t* step, const char** metric, double* value);
/* Writes records.csv, run.json, refs.json and (if configured) checkpoint_seed<k>.bin
 * into `dir`, creating it. NULL dir: experiment.output, then $NEC_OUTPUT_DIR, then
 * "runs". The directory actually used is returned through `used_dir` if non-NULL. */
NEC_API nec_status nec_run_record_write(const nec_run_record* rec, const char* dir, char** used_dir);
NEC_API void nec_run_record_free(nec_run_record* rec);

/* Reference scores (random and oracle) for the configured env, as JSON. */
NEC_API nec_status nec_compute_references(const nec_config* cfg, char** json);

/* Aggregates every records.csv found under `in_dir` (recursively). References
 * come from `refs_path`, or, when NULL, from the refs.json files found next to
 * the records. Output: agent,step,statistic,env,value CSV. */
NEC_API nec_status nec_aggregate(const char* in_dir, const char* refs_path, char** csv);

/* ---- inspection ------------------------------------------------------- */

/* Transition table of the configured env. */
NEC_API nec_status nec_dump_env(const nec_config* cfg, char** text);
/* Statistics of a DND snapshot, an MFEC snapshot, or every memory in an agent
 * checkpoint. */
NEC_API nec_status nec_dump_memory(const char* path, char** text);
/* Exact vs approximate kd-tree query timing and approximate recall. */
NEC_API nec_status nec_bench_index(size_t num_keys, size_t dim, size_t num_queries, int p, uint64_t seed,
                                   char** report);

/* ---- standalone DND --------------------------------------------------- */

NEC_API nec_status nec_dnd_create(size_t key_dim, size_t capacity, int p, double delta, double alpha, nec_dnd** out);
NEC_API nec_status nec_dnd_write(nec_dnd* dnd, const double* key, size_t dim, double value);
/* Kernel-weighted estimate; NEC_ERR_EMPTY_MEMORY when nothing is stored. */
NEC_API nec_status nec_dnd_lookup(nec_dnd* dnd, const double* key, size_t dim, double* out);
NEC_API nec_status nec_dnd_size(const nec_dnd* dnd, size_t* out);
NEC_API nec_status nec_dnd_stats(const nec_dnd* dnd, char** text);
NEC_API nec_status nec_dnd_save(const nec_dnd* dnd, const char* path);
NEC_API nec_status nec_dnd_load(const char* path, nec_dnd** out);
NEC_API void nec_dnd_free(nec_dnd* dnd);

#ifdef __cplusplus
}
#endif

#endif /* NEC_NEC_H */
