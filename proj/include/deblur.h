/*
 * deblur — C API for the multi-scale CNN motion deblurring toolkit.
 *
 * All functions return DEBLUR_OK (0) on success or a nonzero status code;
 * deblur_last_error() describes the most recent failure on the calling
 * thread. Handles are opaque and must be released with their _close/_free
 * function.
 */

#ifndef DEBLUR_H
#define DEBLUR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DEBLUR_API __declspec(dllexport)
#else
#define DEBLUR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum deblur_status {
    DEBLUR_OK = 0,
    DEBLUR_ERR_ARGUMENT = 1,  /* bad option value or unknown key */
    DEBLUR_ERR_IO = 2,        /* missing/corrupt file or directory */
    DEBLUR_ERR_SHAPE = 3,     /* tensor/layer dimension mismatch */
    DEBLUR_ERR_NUMERIC = 4,   /* non-finite values, training divergence */
    DEBLUR_ERR_INTERNAL = 5
} deblur_status;

DEBLUR_API const char* deblur_version(void);
DEBLUR_API const char* deblur_status_name(deblur_status status);
/* Message for the last failing call on this thread; empty string if none. */
DEBLUR_API const char* deblur_last_error(void);

/* Worker threads for internal parallelism (0 = hardware default). Results
 * are identical for any setting. */
DEBLUR_API void deblur_set_threads(int32_t n);

/* -------------------------------------------------------------------------
 * Dataset synthesis: frame directory -> blur/ + sharp/ + manifest.txt
 * ------------------------------------------------------------------------- */

typedef struct deblur_synth_options {
    const char* input_dir;    /* PNG frames + meta.txt with "fps <n>" */
    const char* output_dir;
    const int32_t* windows;   /* odd window lengths; NULL = 7,9,11,13 */
    int32_t window_count;
    int32_t stride;           /* window placement stride, >= 1 */
    double gamma;             /* CRF gamma, > 0 */
    uint64_t seed;
} deblur_synth_options;

/* pairs_out (optional) receives the number of emitted pairs; zero pairs with
 * DEBLUR_OK means the sequence was shorter than the largest window. */
DEBLUR_API deblur_status deblur_synth(const deblur_synth_options* options,
                                      int32_t* pairs_out);

/* -------------------------------------------------------------------------
 * Augmentation preview
 * ------------------------------------------------------------------------- */

typedef struct deblur_augment_preview_options {
    const char* blur_path;
    const char* sharp_path;
    const char* output_dir;
    int32_t count;
    uint64_t seed;
} deblur_augment_preview_options;

DEBLUR_API deblur_status
deblur_augment_preview(const deblur_augment_preview_options* options);

/* -------------------------------------------------------------------------
 * Training
 * ------------------------------------------------------------------------- */

typedef struct deblur_train_options {
    const char* dataset_dir;   /* may be NULL if the config file names it */
    const char* output_dir;
    const char* preset;        /* "desk" (default) or "paper" */
    const char* config_path;   /* optional key-value file */
    const char* resume_checkpoint;
    /* extra "key value" overrides applied last, e.g. "seed 7" */
    const char* const* overrides;
    int32_t override_count;
} deblur_train_options;

typedef struct deblur_train_summary {
    int64_t iterations;
    double content_loss;
    double adversarial_g_loss;
    double adversarial_d_loss;
    double total_loss;
    char checkpoint_path[1024];
} deblur_train_summary;

DEBLUR_API deblur_status deblur_train(const deblur_train_options* options,
                                      deblur_train_summary* summary_out);

/* -------------------------------------------------------------------------
 * Inference
 * ------------------------------------------------------------------------- */

typedef struct deblur_infer_options {
    const char* checkpoint;
    const char* input_path;   /* one PNG or a directory of PNGs */
    const char* output_dir;
    int32_t save_pyramid;     /* also write the coarser-level outputs */
} deblur_infer_options;

DEBLUR_API deblur_status deblur_infer(const deblur_infer_options* options,
                                      int32_t* written_out, int32_t* failed_out);

/* Opaque generator handle for in-memory use. */
typedef struct deblur_model deblur_model;

DEBLUR_API deblur_status deblur_model_open(const char* checkpoint_path,
                                           deblur_model** model_out);
DEBLUR_API void deblur_model_close(deblur_model* model);
DEBLUR_API deblur_status deblur_model_scales(const deblur_model* model,
                                             int32_t* scales_out);
/* Deblurs one RGB image in channel-major [0,1] doubles (3*height*width).
 * output must hold the same number of values. Arbitrary sizes are handled
 * by internal reflection padding. */
DEBLUR_API deblur_status deblur_model_run(deblur_model* model, const double* rgb,
                                          int32_t height, int32_t width,
                                          double* output);

/* -------------------------------------------------------------------------
 * Evaluation
 * ------------------------------------------------------------------------- */

typedef struct deblur_eval_options {
    const char* checkpoint;   /* NULL = identity model (blurry baseline) */
    const char* dataset_dir;
    const char* output_path;  /* report file; "<path>.csv" is written too */
    int32_t scales;           /* 0 = take from the checkpoint */
    int32_t quantize;         /* quantize outputs to 8 bits before scoring */
} deblur_eval_options;

typedef struct deblur_eval_summary {
    int32_t images;
    int32_t errors;
    double mean_psnr;
    double mean_ssim;
    double mean_msssim;       /* NaN when images are too small for 5 levels */
} deblur_eval_summary;

DEBLUR_API deblur_status deblur_eval(const deblur_eval_options* options,
                                     deblur_eval_summary* summary_out);

/* Metric helpers on raw channel-major [0,1] buffers (channels*height*width). */
DEBLUR_API deblur_status deblur_metric_psnr(const double* a, const double* b,
                                            int32_t channels, int32_t height,
                                            int32_t width, double* out);
DEBLUR_API deblur_status deblur_metric_ssim(const double* a, const double* b,
                                            int32_t channels, int32_t height,
                                            int32_t width, double* out);
DEBLUR_API deblur_status deblur_metric_msssim(const double* a, const double* b,
                                              int32_t channels, int32_t height,
                                              int32_t width, double* out);

/* -------------------------------------------------------------------------
 * Gradient checking
 * ------------------------------------------------------------------------- */

typedef struct deblur_gradcheck_report {
    int32_t passed;
    double max_rel_err;
    double tolerance;
    int32_t coords_checked;
    char worst[256];
} deblur_gradcheck_report;

/* scope: "layer", "resblock", "generator" or "discriminator". */
DEBLUR_API deblur_status deblur_gradcheck(const char* scope, uint64_t seed,
                                          deblur_gradcheck_report* report_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DEBLUR_H */
