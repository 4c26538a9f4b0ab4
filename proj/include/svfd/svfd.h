/* C interface of the svfd library. All handles are opaque; every fallible
 * call returns an svfd_status and leaves a message for svfd_last_error().
 * Strings and arrays returned through out-parameters are owned by the caller
 * and released with the matching svfd_*_free function. Points are passed as
 * row-major n x 3 double arrays. */
#ifndef SVFD_SVFD_H
#define SVFD_SVFD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SVFD_BUILDING_LIBRARY)
#    define SVFD_API __declspec(dllexport)
#  else
#    define SVFD_API __declspec(dllimport)
#  endif
#else
#  define SVFD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum svfd_status {
    SVFD_OK = 0,
    SVFD_ERR_VALIDATION = 1,
    SVFD_ERR_NUMERIC = 2,
    SVFD_ERR_IO = 3,
    SVFD_ERR_INTERNAL = 4
} svfd_status;

typedef struct svfd_cloud svfd_cloud;
typedef struct svfd_mesh svfd_mesh;
typedef struct svfd_model svfd_model;
typedef struct svfd_vessel svfd_vessel;

SVFD_API const char* svfd_version(void);
/* Message of the last failure on the calling thread ("" if none). */
SVFD_API const char* svfd_last_error(void);
SVFD_API void svfd_string_free(char* s);

typedef void (*svfd_message_fn)(const char* message, void* user);
/* Warnings go to stderr unless a handler is installed (NULL restores it). */
SVFD_API void svfd_set_warning_handler(svfd_message_fn fn, void* user);

/* Cooperative cancellation of long-running calls (train, infer, augment).
 * Safe to call from a signal handler. */
SVFD_API void svfd_request_stop(void);
SVFD_API void svfd_clear_stop(void);
SVFD_API int svfd_stop_requested(void);

/* Settings: JSON objects with flat dotted keys ("train.epochs", ...). */
SVFD_API svfd_status svfd_default_settings(char** json_out);
/* Applies `overrides` on top of the defaults; returns the effective settings. */
SVFD_API svfd_status svfd_resolve_settings(const char* overrides, char** json_out);

/* ---- clouds ---- */
SVFD_API svfd_status svfd_cloud_load(const char* path, svfd_cloud** out);
/* weights may be NULL (uniform); normals may be NULL. */
SVFD_API svfd_status svfd_cloud_from_arrays(const double* points, const double* weights, const double* normals,
                                            size_t n, svfd_cloud** out);
SVFD_API svfd_status svfd_cloud_save(const svfd_cloud* cloud, const char* path);
SVFD_API size_t svfd_cloud_size(const svfd_cloud* cloud);
SVFD_API int svfd_cloud_has_normals(const svfd_cloud* cloud);
SVFD_API svfd_status svfd_cloud_points(const svfd_cloud* cloud, double* out);
SVFD_API svfd_status svfd_cloud_weights(const svfd_cloud* cloud, double* out);
SVFD_API void svfd_cloud_free(svfd_cloud* cloud);

/* ---- meshes ---- */
SVFD_API svfd_status svfd_mesh_load(const char* path, svfd_mesh** out);
SVFD_API svfd_status svfd_mesh_save(const svfd_mesh* mesh, const char* path);
/* kind: "ellipsoid", "tube" or "y_branch"; params: JSON with optional keys
 * axes, center, radius, length, branch_length, branch_angle, ring_vertices. */
SVFD_API svfd_status svfd_mesh_synth(const char* kind, const char* params_json, int resolution, svfd_mesh** out);
SVFD_API svfd_status svfd_mesh_to_cloud(const svfd_mesh* mesh, svfd_cloud** out);
SVFD_API size_t svfd_mesh_vertex_count(const svfd_mesh* mesh);
SVFD_API size_t svfd_mesh_face_count(const svfd_mesh* mesh);
/* JSON {"min_jacobian", "decile_mean", "pass"}. */
SVFD_API svfd_status svfd_mesh_quality(const svfd_mesh* mesh, char** json_out);
SVFD_API void svfd_mesh_free(svfd_mesh* mesh);

/* Rigid CPD of source onto target, initialized by matching barycentres and
 * bounding diameters. transform_out (nullable) receives the 4x4 row-major
 * similarity matrix. */
SVFD_API svfd_status svfd_rigid_align(const svfd_cloud* source, const svfd_cloud* target, double outlier_weight,
                                      double* transform_out, svfd_cloud** aligned);

/* ---- discrepancy measures ---- */
/* options: {"measures": ["cd", ...] (default: all applicable), "w_n",
 * "sinkhorn.epsilon", "sinkhorn.scaling", "sinkhorn.max_iters",
 * "sinkhorn.tolerance"}. Result: JSON object of values plus FLD/BLD. */
SVFD_API svfd_status svfd_metrics(const svfd_cloud* a, const svfd_cloud* b, const char* options_json,
                                  char** json_out);

/* ---- training and models ---- */
typedef void (*svfd_epoch_fn)(int epoch, const char* loss_json, void* user);

/* Shapes and template are in physical units; they are embedded jointly in the
 * unit cube before training. `ids` may be NULL. When checkpoint_path is not
 * NULL the model is saved there every train.checkpoint_every epochs. A stop
 * request ends training after the current epoch and still returns the model. */
SVFD_API svfd_status svfd_train(const svfd_cloud* const* shapes, const char* const* ids, size_t count,
                                const svfd_cloud* templ, const char* settings_json, svfd_epoch_fn on_epoch,
                                void* user, const char* checkpoint_path, svfd_model** out);
/* Continues training a model on the same shapes. */
SVFD_API svfd_status svfd_train_resume(svfd_model* model, const svfd_cloud* const* shapes, size_t count,
                                       const char* settings_json, svfd_epoch_fn on_epoch, void* user,
                                       const char* checkpoint_path);
/* Per-shape FLD/BLD of the direct maps, unit-cube and physical units. */
SVFD_API svfd_status svfd_model_report(const svfd_model* model, const svfd_cloud* const* shapes, size_t count,
                                       char** json_out);
SVFD_API svfd_status svfd_model_save(const svfd_model* model, const char* path);
SVFD_API svfd_status svfd_model_load(const char* path, svfd_model** out);
/* Architecture, ids, checksum, parameter count, settings. */
SVFD_API svfd_status svfd_model_info(const svfd_model* model, char** json_out);
SVFD_API uint64_t svfd_model_checksum(const svfd_model* model);
SVFD_API size_t svfd_model_code_dim(const svfd_model* model);
SVFD_API size_t svfd_model_code_count(const svfd_model* model);
SVFD_API svfd_status svfd_model_code(const svfd_model* model, size_t index, double* out);
SVFD_API svfd_status svfd_model_template(const svfd_model* model, svfd_cloud** out);
SVFD_API void svfd_model_free(svfd_model* model);

/* Fits a code for `shape` (physical units) with the network frozen.
 * code_out has svfd_model_code_dim entries. report: FLD/BLD of both map
 * directions before and after, unit-cube and physical units. direct/inverse
 * receive the mapped clouds in physical units when non-NULL. */
SVFD_API svfd_status svfd_infer(const svfd_model* model, const svfd_cloud* shape, const char* settings_json,
                                double* code_out, char** report_json, svfd_cloud** direct, svfd_cloud** inverse);

/* direction 0: shape -> template (forward Euler); 1: template -> shape
 * (modified Euler). Physical units in and out. snapshots receives steps+1
 * clouds, release with svfd_cloud_array_free. */
SVFD_API svfd_status svfd_geodesic(const svfd_model* model, const double* code, const svfd_cloud* cloud,
                                   int direction, int steps, svfd_cloud*** snapshots, size_t* count);
SVFD_API void svfd_cloud_array_free(svfd_cloud** clouds, size_t count);

/* New shape: template mapped backwards under `code` (physical units). */
SVFD_API svfd_status svfd_generate(const svfd_model* model, const double* code, svfd_cloud** out);
/* n codes from N(0, unbiased covariance of the training codes), row-major n x N_z. */
SVFD_API svfd_status svfd_sample_codes(const svfd_model* model, size_t n, uint64_t seed, double* out);
/* PCA of training codes plus `extra` codes (row-major n_extra x N_z). */
SVFD_API svfd_status svfd_pca(const svfd_model* model, const double* extra, size_t n_extra,
                              const char* const* extra_ids, char** csv_out, char** svg_out);

/* ---- vessel models and augmentation ---- */
SVFD_API svfd_status svfd_vessel_load(const char* path, svfd_vessel** out);
SVFD_API svfd_status svfd_vessel_mesh(const svfd_vessel* vessel, int ring_vertices, svfd_mesh** out);
SVFD_API void svfd_vessel_free(svfd_vessel* vessel);

/* meshes may be NULL (or hold NULL entries) to use swept vessel meshes.
 * Returns inputs followed by accepted meshes; report is a CSV of attempts.
 * SVFD_OK is returned even when the attempt budget runs out; check the
 * accepted count. */
SVFD_API svfd_status svfd_augment(const svfd_vessel* const* vessels, const svfd_mesh* const* meshes, size_t count,
                                  const char* settings_json, svfd_mesh*** out, size_t* out_count, size_t* accepted,
                                  char** report_csv);
SVFD_API void svfd_mesh_array_free(svfd_mesh** meshes, size_t count);

#ifdef __cplusplus
}
#endif

#endif
