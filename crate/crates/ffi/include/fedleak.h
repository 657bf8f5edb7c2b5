#ifndef FEDLEAK_H
#define FEDLEAK_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_SHAPE = 3,
  FL_STATUS_IO = 4,
  FL_STATUS_FORMAT = 5,
  FL_STATUS_NUMERIC = 6,
  FL_STATUS_CONFIG = 7,
  FL_STATUS_DATA = 8,
  FL_STATUS_PANIC = 9,
} FlStatus;

/**
 * Noise added to client gradients.
 */
typedef enum FlNoiseKind {
  FL_NOISE_KIND_NONE = 0,
  FL_NOISE_KIND_GAUSSIAN = 1,
  FL_NOISE_KIND_LAPLACE = 2,
} FlNoiseKind;

/**
 * Labelled samples.
 */
typedef struct FlDataset FlDataset;

/**
 * Dummy-client meta-dataset.
 */
typedef struct FlMeta FlMeta;

/**
 * A model architecture together with its parameters.
 */
typedef struct FlModel FlModel;

/**
 * A fitted PCA projection.
 */
typedef struct FlPca FlPca;

/**
 * Trained label-distribution predictor.
 */
typedef struct FlPredictor FlPredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next fedleak call on the same thread.
 */
const char *fl_last_error(void);

/**
 * Loads an MNIST IDX image/label file pair (optionally gzipped).
 */
enum FlStatus fl_dataset_load_mnist(const char *images, const char *labels, struct FlDataset **out);

/**
 * Class-dependent Gaussian blobs: `n` samples of `dims` values, `labels` classes.
 */
enum FlStatus fl_dataset_synthetic(size_t labels,
                                   size_t n,
                                   size_t dims,
                                   uint64_t seed,
                                   struct FlDataset **out);

/**
 * Sample count, or 0 for NULL.
 */
size_t fl_dataset_len(const struct FlDataset *dataset);

/**
 * Values per sample, or 0 for NULL.
 */
size_t fl_dataset_sample_len(const struct FlDataset *dataset);

/**
 * Copies all labels into `out` (length `fl_dataset_len`).
 */
enum FlStatus fl_dataset_labels(const struct FlDataset *dataset, size_t *out, size_t len);

void fl_dataset_free(struct FlDataset *dataset);

/**
 * A model by name (`mnist-mlp`, `mnist-autoencoder`, `cifar-cnn`) with
 * freshly initialised parameters.
 */
enum FlStatus fl_model_new(const char *name, uint64_t seed, struct FlModel **out);

/**
 * A `inputs -> hidden... -> labels` ReLU MLP with softmax output.
 */
enum FlStatus fl_model_mlp(size_t inputs,
                           const size_t *hidden,
                           size_t hidden_len,
                           size_t labels,
                           uint64_t seed,
                           struct FlModel **out);

/**
 * Total parameter count, or 0 for NULL.
 */
size_t fl_model_param_count(const struct FlModel *model);

/**
 * Copies the flattened parameters into `out`.
 */
enum FlStatus fl_model_get_params(const struct FlModel *model, double *out, size_t len);

/**
 * Replaces the parameters with the flattened values in `values`.
 */
enum FlStatus fl_model_set_params(struct FlModel *model, const double *values, size_t len);

/**
 * Trains a copy of `global` on the selected samples and returns it as a new
 * model handle. `noise_kind` takes an `FlNoiseKind` value.
 */
enum FlStatus fl_model_client_update(const struct FlModel *global,
                                     const struct FlDataset *dataset,
                                     const size_t *indices,
                                     size_t indices_len,
                                     size_t epochs,
                                     size_t batch_size,
                                     double learning_rate,
                                     int32_t noise_kind,
                                     double noise_scale,
                                     uint64_t seed,
                                     struct FlModel **out);

/**
 * Argmax accuracy of the model on `dataset`.
 */
enum FlStatus fl_model_evaluate(const struct FlModel *model,
                                const struct FlDataset *dataset,
                                double *accuracy);

void fl_model_free(struct FlModel *model);

/**
 * Draws a symmetric Dirichlet(`alpha`) vector of length `labels` into `out`.
 */
enum FlStatus fl_dirichlet(double alpha, size_t labels, uint64_t seed, double *out);

/**
 * Fits `dims` principal components to `n` row-major rows of width `width`.
 */
enum FlStatus fl_pca_fit(const double *rows,
                         size_t n,
                         size_t width,
                         size_t dims,
                         struct FlPca **out);

/**
 * Number of output coordinates, or 0 for NULL.
 */
size_t fl_pca_dims(const struct FlPca *pca);

/**
 * Copies the explained variances (length `fl_pca_dims`) into `out`.
 */
enum FlStatus fl_pca_explained_variance(const struct FlPca *pca, double *out, size_t len);

/**
 * Projects one row of length `width` into `out` (length `fl_pca_dims`).
 */
enum FlStatus fl_pca_apply(const struct FlPca *pca,
                           const double *row,
                           size_t width,
                           double *out,
                           size_t out_len);

void fl_pca_free(struct FlPca *pca);

/**
 * Reads a binary meta-dataset written by the `attack` experiment.
 */
enum FlStatus fl_meta_load(const char *path, struct FlMeta **out);

/**
 * Input dimension of the meta-dataset, or 0 for NULL.
 */
size_t fl_meta_input_dim(const struct FlMeta *meta);

/**
 * Label count of the meta-dataset, or 0 for NULL.
 */
size_t fl_meta_num_labels(const struct FlMeta *meta);

void fl_meta_free(struct FlMeta *meta);

/**
 * Trains a predictor with the given hidden widths and schedule; other
 * settings follow the library defaults.
 */
enum FlStatus fl_predictor_train(const struct FlMeta *meta,
                                 const size_t *hidden,
                                 size_t hidden_len,
                                 double learning_rate,
                                 size_t epochs,
                                 size_t batch_size,
                                 uint64_t seed,
                                 struct FlPredictor **out);

/**
 * Predicted label distribution for one projected input.
 */
enum FlStatus fl_predictor_predict(const struct FlPredictor *predictor,
                                   const double *x,
                                   size_t x_len,
                                   double *out,
                                   size_t out_len);

/**
 * Mean cross-entropy and KL divergence on the meta-dataset's test split.
 */
enum FlStatus fl_predictor_evaluate(const struct FlPredictor *predictor,
                                    const struct FlMeta *meta,
                                    double *cross_entropy,
                                    double *kl);

void fl_predictor_free(struct FlPredictor *predictor);

/**
 * Runs the experiment described by a config file, writing its artifacts.
 */
enum FlStatus fl_run_config(const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDLEAK_H */
