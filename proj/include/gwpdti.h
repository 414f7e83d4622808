#ifndef GWPDTI_H
#define GWPDTI_H

/* C interface to the gwpdti library.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every call returns a gwpdti_status; on failure gwpdti_last_error() gives
 * a message that stays valid until the next call on the same thread.
 * Strings returned through char** are owned by the caller and released
 * with gwpdti_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(GWPDTI_BUILDING)
#define GWPDTI_API __attribute__((visibility("default")))
#else
#define GWPDTI_API
#endif

typedef enum gwpdti_status {
  GWPDTI_OK = 0,
  GWPDTI_USAGE = 2,     /* bad arguments, config or option values */
  GWPDTI_DATA = 3,      /* malformed, inconsistent or out-of-domain data */
  GWPDTI_NUMERICAL = 4, /* conditioning or numerical failure */
  GWPDTI_INTERNAL = 5
} gwpdti_status;

typedef struct gwpdti_field gwpdti_field;     /* tensor grid */
typedef struct gwpdti_split gwpdti_split;     /* kept / held-out partition */
typedef struct gwpdti_archive gwpdti_archive; /* posterior samples */
typedef struct gwpdti_metrics gwpdti_metrics; /* error table */
typedef struct gwpdti_config gwpdti_config;   /* experiment configuration */

GWPDTI_API const char* gwpdti_version(void);
GWPDTI_API const char* gwpdti_last_error(void);
GWPDTI_API void gwpdti_string_free(char* s);

/* Experiment configuration: a named preset ("quick", "paper", "crossing";
 * NULL means quick) overlaid with versioned JSON text (may be NULL). The
 * seed drives every random stream of synth, fit, interp and pipeline. */
GWPDTI_API gwpdti_status gwpdti_config_create(const char* preset, const char* json_text, gwpdti_config** out);
GWPDTI_API gwpdti_status gwpdti_config_set_seed(gwpdti_config* c, uint64_t seed);
GWPDTI_API gwpdti_status gwpdti_config_seed(const gwpdti_config* c, uint64_t* seed);
GWPDTI_API gwpdti_status gwpdti_config_format(const gwpdti_config* c, char** out);
GWPDTI_API void gwpdti_config_free(gwpdti_config* c);

/* Fields. Tensors are 6 doubles each: xx, yy, zz, xy, xz, yz, x fastest. */
GWPDTI_API gwpdti_status gwpdti_field_create(const size_t dims[3], const double spacing[3], const double* tensors,
                                             const uint8_t* mask, gwpdti_field** out);
GWPDTI_API gwpdti_status gwpdti_field_read(const char* path, gwpdti_field** out);
GWPDTI_API gwpdti_status gwpdti_field_parse(const char* text, gwpdti_field** out);
GWPDTI_API gwpdti_status gwpdti_field_write(const gwpdti_field* f, const char* path);
GWPDTI_API gwpdti_status gwpdti_field_format(const gwpdti_field* f, char** out);
GWPDTI_API gwpdti_status gwpdti_field_dims(const gwpdti_field* f, size_t dims[3]);
GWPDTI_API gwpdti_status gwpdti_field_tensor(const gwpdti_field* f, size_t flat_index, double out6[6]);
GWPDTI_API gwpdti_status gwpdti_field_checksum(const gwpdti_field* f, char** out);
GWPDTI_API void gwpdti_field_free(gwpdti_field* f);

/* Synthetic ground truth for the configured dataset ("file" datasets are
 * read from their path). */
GWPDTI_API gwpdti_status gwpdti_synth(const gwpdti_config* c, gwpdti_field** out);

/* Simulated DWI volume (JSON text) of a field with the configured
 * acquisition, and the tensor fit of such a volume. */
GWPDTI_API gwpdti_status gwpdti_simulate_dwi(const gwpdti_field* f, const gwpdti_config* c, char** out);
GWPDTI_API gwpdti_status gwpdti_estimate_dti(const char* dwi_text, gwpdti_field** out);

GWPDTI_API gwpdti_status gwpdti_downsample(const gwpdti_field* f, gwpdti_field** low_res, gwpdti_split** split);
GWPDTI_API gwpdti_status gwpdti_split_read(const char* path, gwpdti_split** out);
GWPDTI_API gwpdti_status gwpdti_split_write(const gwpdti_split* s, const char* path);
GWPDTI_API gwpdti_status gwpdti_split_counts(const gwpdti_split* s, size_t* kept, size_t* held_out);
GWPDTI_API void gwpdti_split_free(gwpdti_split* s);

/* MCMC fit on a low-resolution field with the configured chain settings. */
GWPDTI_API gwpdti_status gwpdti_fit(const gwpdti_field* low_res, const gwpdti_config* c, gwpdti_archive** out);
GWPDTI_API gwpdti_status gwpdti_archive_read(const char* path, gwpdti_archive** out);
GWPDTI_API gwpdti_status gwpdti_archive_write(const gwpdti_archive* a, const char* path);
GWPDTI_API gwpdti_status gwpdti_archive_size(const gwpdti_archive* a, size_t* n_samples);
GWPDTI_API void gwpdti_archive_free(gwpdti_archive* a);

/* Full-resolution prediction for method "gwp", "linear" or "logeuclid".
 * `archive` is required for gwp and ignored otherwise; `c` (may be NULL
 * for defaults) sets the gwp prediction options. `uncertainty`, when
 * non-NULL, receives the gwp sidecar JSON text or NULL for other methods. */
GWPDTI_API gwpdti_status gwpdti_interp(const char* method, const gwpdti_field* low_res, const gwpdti_split* split,
                                       const gwpdti_archive* archive, const gwpdti_config* c, gwpdti_field** out,
                                       char** uncertainty);

/* Errors of `predicted` (full-resolution) against `truth` on held-out sites. */
GWPDTI_API gwpdti_status gwpdti_eval(const char* method, const gwpdti_field* predicted, const gwpdti_field* truth,
                                     const gwpdti_split* split, gwpdti_metrics** out);
GWPDTI_API gwpdti_status gwpdti_metrics_csv(const gwpdti_metrics* m, char** out);
GWPDTI_API gwpdti_status gwpdti_metrics_merge(gwpdti_metrics* into, const gwpdti_metrics* from);
GWPDTI_API gwpdti_status gwpdti_metrics_get(const gwpdti_metrics* m, const char* method, const char* metric,
                                            double* mean, double* std, size_t* n, size_t* spd_violations);
GWPDTI_API void gwpdti_metrics_free(gwpdti_metrics* m);

/* format: "glyph-json" or "svg-slice". c <= 0 picks the scale automatically. */
GWPDTI_API gwpdti_status gwpdti_glyphs_export(const gwpdti_field* f, double c, const char* path, const char* format,
                                              size_t slice);
GWPDTI_API gwpdti_status gwpdti_glyphs_validate(const char* json_text, size_t* n_glyphs);

/* Whole experiment. Writes every output under `out_dir` (NULL or "":
 * nothing is written). `metrics` may be NULL. */
GWPDTI_API gwpdti_status gwpdti_pipeline_run(const gwpdti_config* c, const char* out_dir, gwpdti_metrics** metrics);

#ifdef __cplusplus
}
#endif

#endif
