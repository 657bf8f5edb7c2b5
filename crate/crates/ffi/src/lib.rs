//! C ABI over `fedleak`.
//!
//! Objects are opaque heap handles created by `*_new`/`*_load`/`*_fit`/
//! `*_train` functions and released with the matching `*_free`. Every
//! fallible call returns an [`FlStatus`]; on failure a description is kept
//! per thread and can be read with [`fl_last_error`]. Panics never cross the
//! boundary; they are reported as [`FlStatus::Panic`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fedleak::attack::{
    evaluate_predictor, pca_fit, train_predictor, MetaDataset, PcaModel, Predictor, PredictorSpec,
};
use fedleak::data::{load_mnist, sample_dirichlet, synth_dataset, Dataset};
use fedleak::federation::{client_update, evaluate, LocalTraining, NoiseConfig, NoiseKind};
use fedleak::nn::{ModelParams, ModelSpec};
use fedleak::{rng, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Numeric = 6,
    Config = 7,
    Data = 8,
    Panic = 9,
}

/// Noise added to client gradients.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlNoiseKind {
    None = 0,
    Gaussian = 1,
    Laplace = 2,
}

/// Labelled samples.
pub struct FlDataset(Dataset);

/// A model architecture together with its parameters.
pub struct FlModel {
    spec: ModelSpec,
    params: ModelParams,
}

/// A fitted PCA projection.
pub struct FlPca(PcaModel);

/// Dummy-client meta-dataset.
pub struct FlMeta(MetaDataset);

/// Trained label-distribution predictor.
pub struct FlPredictor(Predictor);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FlStatus {
    match err {
        Error::InvalidSpec(_) | Error::InvalidArgument(_) | Error::Empty(_) => FlStatus::InvalidArgument,
        Error::Shape(_) => FlStatus::Shape,
        Error::NonFinite { .. } | Error::NoConvergence(_) => FlStatus::Numeric,
        Error::Io { .. } => FlStatus::Io,
        Error::BadMagic { .. } | Error::Truncated { .. } | Error::CountMismatch { .. } | Error::Format { .. } => {
            FlStatus::Format
        }
        Error::LabelOutOfRange { .. } | Error::InsufficientSamples(_) | Error::PoolExhausted { .. } => FlStatus::Data,
        Error::Config(_) => FlStatus::Config,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (FlStatus, String)>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FlStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (FlStatus, String)>;
}

impl<T> IntoFfi<T> for fedleak::Result<T> {
    fn ffi(self) -> Result<T, (FlStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (FlStatus, String) {
    (FlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FlStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (FlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (FlStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, (FlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (FlStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), (FlStatus, String)> {
    if got == want {
        Ok(())
    } else {
        Err((FlStatus::Shape, format!("{what}: buffer holds {got} values, need {want}")))
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next fedleak call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads an MNIST IDX image/label file pair (optionally gzipped).
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_load_mnist(
    images: *const c_char,
    labels: *const c_char,
    out: *mut *mut FlDataset,
) -> FlStatus {
    guard(|| {
        let images = string(images, "images path")?;
        let labels = string(labels, "labels path")?;
        let d = load_mnist(Path::new(images), Path::new(labels)).ffi()?;
        put(out, FlDataset(d))
    })
}

/// Class-dependent Gaussian blobs: `n` samples of `dims` values, `labels` classes.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_synthetic(
    labels: usize,
    n: usize,
    dims: usize,
    seed: u64,
    out: *mut *mut FlDataset,
) -> FlStatus {
    guard(|| put(out, FlDataset(synth_dataset(labels, n, dims, seed).ffi()?)))
}

/// Sample count, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_len(dataset: *const FlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Values per sample, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_sample_len(dataset: *const FlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.sample_len())
}

/// Copies all labels into `out` (length `fl_dataset_len`).
#[no_mangle]
pub unsafe extern "C" fn fl_dataset_labels(dataset: *const FlDataset, out: *mut usize, len: usize) -> FlStatus {
    guard(|| {
        let d = &as_ref(dataset, "dataset")?.0;
        check_len(len, d.len(), "labels")?;
        slice_mut(out, len, "labels buffer")?.copy_from_slice(d.labels());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fl_dataset_free(dataset: *mut FlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// A model by name (`mnist-mlp`, `mnist-autoencoder`, `cifar-cnn`) with
/// freshly initialised parameters.
#[no_mangle]
pub unsafe extern "C" fn fl_model_new(name: *const c_char, seed: u64, out: *mut *mut FlModel) -> FlStatus {
    guard(|| {
        let spec = ModelSpec::by_name(string(name, "model name")?).ffi()?;
        let params = ModelParams::init(&spec, seed).ffi()?;
        put(out, FlModel { spec, params })
    })
}

/// A `inputs -> hidden... -> labels` ReLU MLP with softmax output.
#[no_mangle]
pub unsafe extern "C" fn fl_model_mlp(
    inputs: usize,
    hidden: *const usize,
    hidden_len: usize,
    labels: usize,
    seed: u64,
    out: *mut *mut FlModel,
) -> FlStatus {
    guard(|| {
        let spec = ModelSpec::mlp(inputs, slice(hidden, hidden_len, "hidden widths")?, labels).ffi()?;
        let params = ModelParams::init(&spec, seed).ffi()?;
        put(out, FlModel { spec, params })
    })
}

/// Total parameter count, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fl_model_param_count(model: *const FlModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.num_values())
}

/// Copies the flattened parameters into `out`.
#[no_mangle]
pub unsafe extern "C" fn fl_model_get_params(model: *const FlModel, out: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        check_len(len, m.params.num_values(), "parameters")?;
        slice_mut(out, len, "parameter buffer")?.copy_from_slice(&m.params.flatten());
        Ok(())
    })
}

/// Replaces the parameters with the flattened values in `values`.
#[no_mangle]
pub unsafe extern "C" fn fl_model_set_params(model: *mut FlModel, values: *const f64, len: usize) -> FlStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        m.params = ModelParams::unflatten(&m.spec, slice(values, len, "parameter values")?).ffi()?;
        Ok(())
    })
}

/// Trains a copy of `global` on the selected samples and returns it as a new
/// model handle. `noise_kind` takes an `FlNoiseKind` value.
#[no_mangle]
pub unsafe extern "C" fn fl_model_client_update(
    global: *const FlModel,
    dataset: *const FlDataset,
    indices: *const usize,
    indices_len: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    noise_kind: i32,
    noise_scale: f64,
    seed: u64,
    out: *mut *mut FlModel,
) -> FlStatus {
    guard(|| {
        let g = as_ref(global, "global model")?;
        let d = &as_ref(dataset, "dataset")?.0;
        let idx = slice(indices, indices_len, "indices")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= d.len()) {
            return Err((FlStatus::InvalidArgument, format!("sample index {bad} out of range")));
        }
        let kind = match noise_kind {
            x if x == FlNoiseKind::None as i32 => NoiseKind::None,
            x if x == FlNoiseKind::Gaussian as i32 => NoiseKind::Gaussian,
            x if x == FlNoiseKind::Laplace as i32 => NoiseKind::Laplace,
            other => return Err((FlStatus::InvalidArgument, format!("unknown noise kind {other}"))),
        };
        let noise = NoiseConfig {
            kind,
            scale: noise_scale,
            ..NoiseConfig::NONE
        };
        let hyper = LocalTraining {
            epochs,
            batch_size,
            learning_rate,
        };
        let r = client_update(&g.spec, &g.params, d, idx, &hyper, &noise, seed).ffi()?;
        put(
            out,
            FlModel {
                spec: g.spec.clone(),
                params: r.params,
            },
        )
    })
}

/// Argmax accuracy of the model on `dataset`.
#[no_mangle]
pub unsafe extern "C" fn fl_model_evaluate(model: *const FlModel, dataset: *const FlDataset, accuracy: *mut f64) -> FlStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let d = &as_ref(dataset, "dataset")?.0;
        let acc = evaluate(&m.spec, &m.params, d).ffi()?;
        *accuracy.as_mut().ok_or_else(|| null("accuracy"))? = acc;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fl_model_free(model: *mut FlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Draws a symmetric Dirichlet(`alpha`) vector of length `labels` into `out`.
#[no_mangle]
pub unsafe extern "C" fn fl_dirichlet(alpha: f64, labels: usize, seed: u64, out: *mut f64) -> FlStatus {
    guard(|| {
        let mut r = rng::rng_from(seed, &[rng::tag::PARTITION]);
        let dist = sample_dirichlet(alpha, labels, &mut r).ffi()?;
        slice_mut(out, labels, "output")?.copy_from_slice(dist.probs());
        Ok(())
    })
}

/// Fits `dims` principal components to `n` row-major rows of width `width`.
#[no_mangle]
pub unsafe extern "C" fn fl_pca_fit(
    rows: *const f64,
    n: usize,
    width: usize,
    dims: usize,
    out: *mut *mut FlPca,
) -> FlStatus {
    guard(|| {
        let total = n
            .checked_mul(width)
            .ok_or_else(|| (FlStatus::InvalidArgument, "matrix size overflows".to_string()))?;
        let data = slice(rows, total, "rows")?;
        let rows: Vec<Vec<f64>> = data.chunks(width.max(1)).map(<[f64]>::to_vec).collect();
        put(out, FlPca(pca_fit(&rows, dims).ffi()?))
    })
}

/// Number of output coordinates, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fl_pca_dims(pca: *const FlPca) -> usize {
    pca.as_ref().map_or(0, |p| p.0.dims())
}

/// Copies the explained variances (length `fl_pca_dims`) into `out`.
#[no_mangle]
pub unsafe extern "C" fn fl_pca_explained_variance(pca: *const FlPca, out: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        let p = &as_ref(pca, "pca")?.0;
        check_len(len, p.dims(), "explained variance")?;
        slice_mut(out, len, "output")?.copy_from_slice(p.explained_variance());
        Ok(())
    })
}

/// Projects one row of length `width` into `out` (length `fl_pca_dims`).
#[no_mangle]
pub unsafe extern "C" fn fl_pca_apply(
    pca: *const FlPca,
    row: *const f64,
    width: usize,
    out: *mut f64,
    out_len: usize,
) -> FlStatus {
    guard(|| {
        let p = &as_ref(pca, "pca")?.0;
        let coords = p.apply(slice(row, width, "row")?).ffi()?;
        check_len(out_len, coords.len(), "projection")?;
        slice_mut(out, out_len, "output")?.copy_from_slice(&coords);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fl_pca_free(pca: *mut FlPca) {
    if !pca.is_null() {
        drop(Box::from_raw(pca));
    }
}

/// Reads a binary meta-dataset written by the `attack` experiment.
#[no_mangle]
pub unsafe extern "C" fn fl_meta_load(path: *const c_char, out: *mut *mut FlMeta) -> FlStatus {
    guard(|| {
        let path = string(path, "path")?;
        put(out, FlMeta(MetaDataset::read_binary(Path::new(path)).ffi()?))
    })
}

/// Input dimension of the meta-dataset, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fl_meta_input_dim(meta: *const FlMeta) -> usize {
    meta.as_ref().map_or(0, |m| m.0.input_dim())
}

/// Label count of the meta-dataset, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn fl_meta_num_labels(meta: *const FlMeta) -> usize {
    meta.as_ref().map_or(0, |m| m.0.num_labels())
}

#[no_mangle]
pub unsafe extern "C" fn fl_meta_free(meta: *mut FlMeta) {
    if !meta.is_null() {
        drop(Box::from_raw(meta));
    }
}

/// Trains a predictor with the given hidden widths and schedule; other
/// settings follow the library defaults.
#[no_mangle]
pub unsafe extern "C" fn fl_predictor_train(
    meta: *const FlMeta,
    hidden: *const usize,
    hidden_len: usize,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    out: *mut *mut FlPredictor,
) -> FlStatus {
    guard(|| {
        let m = &as_ref(meta, "meta-dataset")?.0;
        let spec = PredictorSpec {
            hidden: slice(hidden, hidden_len, "hidden widths")?.to_vec(),
            learning_rate,
            epochs,
            batch_size,
            ..PredictorSpec::reference(m.input_dim(), m.num_labels())
        };
        let (p, _) = train_predictor(m, &spec, seed).ffi()?;
        put(out, FlPredictor(p))
    })
}

/// Predicted label distribution for one projected input.
#[no_mangle]
pub unsafe extern "C" fn fl_predictor_predict(
    predictor: *const FlPredictor,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> FlStatus {
    guard(|| {
        let p = &as_ref(predictor, "predictor")?.0;
        let q = p.predict(slice(x, x_len, "input")?).ffi()?;
        check_len(out_len, q.num_labels(), "distribution")?;
        slice_mut(out, out_len, "output")?.copy_from_slice(q.probs());
        Ok(())
    })
}

/// Mean cross-entropy and KL divergence on the meta-dataset's test split.
#[no_mangle]
pub unsafe extern "C" fn fl_predictor_evaluate(
    predictor: *const FlPredictor,
    meta: *const FlMeta,
    cross_entropy: *mut f64,
    kl: *mut f64,
) -> FlStatus {
    guard(|| {
        let p = &as_ref(predictor, "predictor")?.0;
        let m = &as_ref(meta, "meta-dataset")?.0;
        let (ce, k) = evaluate_predictor(p, &m.test).ffi()?;
        *cross_entropy.as_mut().ok_or_else(|| null("cross_entropy"))? = ce;
        *kl.as_mut().ok_or_else(|| null("kl"))? = k;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fl_predictor_free(predictor: *mut FlPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Runs the experiment described by a config file, writing its artifacts.
#[no_mangle]
pub unsafe extern "C" fn fl_run_config(path: *const c_char) -> FlStatus {
    guard(|| {
        let path = string(path, "config path")?;
        let cfg = fedleak::cli::load_config(Path::new(path), &[]).ffi()?;
        fedleak::cli::run(&cfg).ffi()?;
        Ok(())
    })
}
