#ifndef METAREG_H
#define METAREG_H

/* C interface to the meta-learning library.  All functions return an
 * mr_status; on failure, mr_last_error() holds a message for the calling
 * thread.  Handles are opaque and freed with their matching _free call. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Mirrors the CLI exit codes: 2 rejects bad configs or inputs, 3 reports a
 * numeric abort mid-training, 4 a failed check, 1 everything else. */
typedef enum mr_status {
    MR_OK = 0,
    MR_ERROR = 1,
    MR_CONFIG_ERROR = 2,
    MR_NUMERIC_ERROR = 3,
    MR_THRESHOLD_ERROR = 4
} mr_status;

const char* mr_version(void);

/* Message from the most recent failing call on this thread ("" if none).
 * The pointer stays valid until the thread's next library call. */
const char* mr_last_error(void);

/* --- experiment configuration ------------------------------------------- */

typedef struct mr_config mr_config;

mr_status mr_config_new(mr_config** out);
mr_status mr_config_load(const char* path, mr_config** out);
mr_status mr_config_parse(const char* text, mr_config** out);
mr_status mr_config_set(mr_config* cfg, const char* key, const char* value);
/* Validates the whole config the way training would, without running it. */
mr_status mr_config_check(const mr_config* cfg);
void mr_config_free(mr_config* cfg);

/* --- training ------------------------------------------------------------ */

typedef struct mr_metrics_row {
    int64_t iteration;
    double task_loss;
    double reg_loss;
    double total_loss;
    double train_acc;
    double val_pre_acc; /* latest evaluation, repeated until the next one */
    double val_post_acc;
    double summary_ratio;
    double mean_phi_distance;
    double wall_ms;
    uint64_t seed;
} mr_metrics_row;

typedef void (*mr_progress_fn)(const mr_metrics_row* row, void* user);

/* Trains per the config into out_dir (manifest, metrics.csv, timing.csv,
 * checkpoint.mrckpt).  out_dir may be NULL when the config carries out_dir.
 * progress may be NULL. */
mr_status mr_train(const mr_config* cfg, const char* out_dir, mr_progress_fn progress,
                   void* user);

/* Re-runs a recorded experiment; refuses when the dataset at the configured
 * root no longer matches the manifest's checksum. */
mr_status mr_train_from_manifest(const char* manifest_path, const char* out_dir,
                                 mr_progress_fn progress, void* user);

/* --- evaluation ----------------------------------------------------------- */

typedef struct mr_eval_result {
    double pre_mean; /* accuracy, or MSE for regression checkpoints */
    double pre_std;
    double post_mean;
    double post_std;
    int adapted;    /* nonzero when post went through test-time adaptation */
    int regression; /* nonzero when the means are MSE rather than accuracy */
} mr_eval_result;

/* Evaluates a checkpoint on a split ("train", "val", or "test"; NULL means
 * "val") and appends a row to eval.csv beside the checkpoint. */
mr_status mr_eval(const char* checkpoint_path, const char* split, int64_t episodes,
                  uint64_t seed, mr_eval_result* out);

/* --- diagnostics ---------------------------------------------------------- */

typedef void (*mr_gradcheck_fn)(const char* name, double max_rel_error, double threshold,
                                int ok, void* user);

/* Runs the finite-difference battery over every primitive and both learner
 * losses.  Reports each item through the callback (may be NULL) and returns
 * MR_THRESHOLD_ERROR when any item exceeds its threshold. */
mr_status mr_gradcheck(mr_gradcheck_fn item, void* user);

/* Renders training curves from a metrics.csv.  columns is a comma-separated
 * list of metric names (NULL means "task_loss,train_acc"). */
mr_status mr_render_curves(const char* csv_path, const char* columns, const char* out_path);

/* --- datasets ------------------------------------------------------------- */

/* Synthetic many-class image tree in the on-disk layout the loader expects;
 * small stand-in for the real corpus in tests and demos. */
mr_status mr_make_fixture(const char* root, int64_t n_classes, int64_t images_per_class,
                          uint64_t seed);

/* Downloads both archive halves, verifies SHA-256 digests when given (hex,
 * NULL or "" skips), and unpacks them into root.  The computed digests are
 * written to the out parameters when non-NULL (65-byte buffers). */
mr_status mr_fetch_omniglot(const char* root, const char* background_url,
                            const char* evaluation_url, const char* background_sha256,
                            const char* evaluation_sha256, char* out_background_sha256,
                            char* out_evaluation_sha256);

#ifdef __cplusplus
}
#endif

#endif /* METAREG_H */
