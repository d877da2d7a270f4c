/* hamlet.h - C interface to the HAMLET forgery-detection library.
 *
 * All functions return HAMLET_OK (0) on success, HAMLET_ERR_USAGE (1) for
 * configuration/argument problems, HAMLET_ERR_RUNTIME (2) for runtime
 * failures. The last error message for the calling thread is available via
 * hamlet_errmsg(). Strings returned through out-parameters are heap-allocated
 * and must be released with hamlet_free().
 */
#ifndef HAMLET_H
#define HAMLET_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct hamlet_ctx hamlet_ctx;

enum {
    HAMLET_OK = 0,
    HAMLET_ERR_USAGE = 1,
    HAMLET_ERR_RUNTIME = 2
};

/* Resolves a run context from an optional JSON config document (NULL or empty
 * for defaults), a profile name ("desk" or "paper"; NULL means desk), a master
 * seed and a worker-thread budget. Returns NULL on error. */
hamlet_ctx *hamlet_ctx_create(const char *config_json, const char *profile, uint64_t seed,
                              int threads);
void hamlet_ctx_destroy(hamlet_ctx *ctx);

/* Last error message recorded on this thread; empty string if none. */
const char *hamlet_errmsg(void);

/* Fully-resolved configuration echo as JSON. */
int hamlet_resolved_config(hamlet_ctx *ctx, char **json_out);

void hamlet_free(char *str);

/* Synthesizes the configured corpus (per-family train/test manifests) under
 * out_dir; summary JSON returned via summary_out when non-NULL. */
int hamlet_synth(hamlet_ctx *ctx, const char *out_dir, char **summary_out);

/* Trains on a manifest; writes model.hmlt, model_init.hmlt and JSON sidecars
 * under out_dir. */
int hamlet_train(hamlet_ctx *ctx, const char *train_manifest, const char *out_dir);

/* Evaluates a checkpoint on a manifest; the MetricReport JSON is returned via
 * report_out. The model configuration is read from the checkpoint sidecar. */
int hamlet_eval(const char *checkpoint, const char *manifest, int threads, char **report_out);

/* 6x6 perturbation-kind x severity AUC grids written as CSV under out_dir. */
int hamlet_perturb_eval(const char *checkpoint, const char *manifest, const char *out_dir,
                        int threads, char **summary_out);

/* Trains and evaluates one cell per value of the named ablation axis
 * (fusion | arrangement | composition | objective | weights | heads | taps).
 * values_csv may be NULL/empty for the default grid; cross_manifest may be
 * NULL. Results land in out_csv. */
int hamlet_ablate(hamlet_ctx *ctx, const char *axis, const char *values_csv,
                  const char *train_manifest, const char *within_manifest,
                  const char *cross_manifest, const char *out_csv, char **summary_out);

/* Finite-difference gradient suite over randomized small configurations.
 * precision is "f64" or "f32". Writes the max relative error observed. */
int hamlet_grad_check(const char *precision, uint64_t seed, int configs,
                      double *max_rel_err_out);

/* Compares backbone tensors of two checkpoints byte-for-byte; *frozen_out is 1
 * when identical. */
int hamlet_verify_frozen(const char *before, const char *after, int *frozen_out);

/* Writes one PGM attention map per prompt token for the given image. */
int hamlet_attn_export(const char *checkpoint, const char *image_path, const char *out_dir,
                       int threads, int *map_count_out);

#ifdef __cplusplus
}
#endif

#endif /* HAMLET_H */
