//! C ABI over `scint-core`.
//!
//! Datasets and models cross the boundary as opaque handles created by
//! `scint_*_new`/`_read`/`_train`/`_load` and released by the matching
//! `_free`. Every fallible call returns a [`ScintStatus`]; on failure the
//! message is available from [`scint_last_error_message`] on the same
//! thread until the next failing call. Output pointers are written only on
//! success. Strings returned by the library are released with
//! [`scint_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use scint_core::geo::{self, ShellModel};
use scint_core::learners::{self, ModelKind, ModelParams, Samples, TrainedModel};
use scint_core::metrics::ConfusionMatrix;
use scint_core::pipeline::{self, FeatureVector, SplitPlan, N_FEATURES};
use scint_core::{eval, Dataset, Error, SeverityClass};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScintStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad parameters or hyperparameters.
    Config = 3,
    /// File could not be read or written.
    Io = 4,
    /// Input malformed or violating a precondition.
    Data = 5,
    /// Argument outside a function's domain.
    Domain = 6,
    /// Numerical failure (non-convergence, singular matrix).
    Numerical = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// Confusion counts, `counts[predicted - 1][truth - 1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScintConfusion {
    pub counts: [[u64; 3]; 3],
}

impl From<ConfusionMatrix> for ScintConfusion {
    fn from(cm: ConfusionMatrix) -> Self {
        ScintConfusion { counts: cm.counts }
    }
}

/// Labelled feature rows.
pub struct ScintDataset {
    inner: Dataset,
}

/// A trained classifier.
pub struct ScintModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ScintStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => ScintStatus::Config,
            Error::Io { .. } | Error::Stream(_) => ScintStatus::Io,
            Error::Format(_) | Error::Data(_) => ScintStatus::Data,
            Error::Domain(_) => ScintStatus::Domain,
            Error::Numerical(_) => ScintStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> ScintStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScintStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ScintStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(ScintStatus::NullArgument, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ScintStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(name))
}

fn class_arg(label: u8) -> FfiResult<SeverityClass> {
    SeverityClass::try_from(label)
        .map_err(|_| Failure(ScintStatus::Data, format!("class label {label} is not 1, 2 or 3")))
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn scint_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scint_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn scint_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Severity class (1, 2 or 3) of an S4 value.
///
/// # Safety
/// `out_class` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn scint_classify_s4(s4: f64, out_class: *mut u8) -> ScintStatus {
    guard(|| {
        let out = out_arg(out_class, "out_class")?;
        if !(s4 >= 0.0 && s4.is_finite()) {
            return Err(Failure(
                ScintStatus::Domain,
                format!("S4 must be finite and non-negative, got {s4}"),
            ));
        }
        *out = pipeline::classify_s4(s4).label();
        Ok(())
    })
}

/// Pierce point of a line of sight on a thin shell at `shell_height_km`
/// over a 6371 km Earth. Longitude is returned in [0, 360).
///
/// # Safety
/// `out_lat_deg` and `out_lon_deg` must be null or point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn scint_compute_ipp(
    receiver_lat_deg: f64,
    receiver_lon_deg: f64,
    elevation_deg: f64,
    azimuth_deg: f64,
    shell_height_km: f64,
    out_lat_deg: *mut f64,
    out_lon_deg: *mut f64,
) -> ScintStatus {
    guard(|| {
        let lat = out_arg(out_lat_deg, "out_lat_deg")?;
        let lon = out_arg(out_lon_deg, "out_lon_deg")?;
        let shell = ShellModel::new(shell_height_km, geo::DEFAULT_EARTH_RADIUS_KM)?;
        let ipp = geo::compute_ipp(receiver_lat_deg, receiver_lon_deg, elevation_deg, azimuth_deg, &shell)?;
        *lat = ipp.lat_deg;
        *lon = ipp.lon_deg;
        Ok(())
    })
}

/// Builds a dataset from `n_rows` rows of 7 features (row-major: day of
/// year, hour of day, IPP latitude, IPP longitude, Kp, SSN, F10.7) and
/// class labels 1-3.
///
/// # Safety
/// `features` must point to `7 * n_rows` doubles and `labels` to `n_rows`
/// bytes; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn scint_dataset_new(
    features: *const f64,
    labels: *const u8,
    n_rows: usize,
    out: *mut *mut ScintDataset,
) -> ScintStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let x = slice_arg(features, n_rows * N_FEATURES, "features")?;
        let y = slice_arg(labels, n_rows, "labels")?;
        let mut rows = Vec::with_capacity(n_rows);
        for i in 0..n_rows {
            let mut v = [0.0; N_FEATURES];
            v.copy_from_slice(&x[i * N_FEATURES..(i + 1) * N_FEATURES]);
            let fv = FeatureVector::from_array(v).map_err(|e| Failure::from(e).with_row(i))?;
            rows.push((fv, class_arg(y[i])?));
        }
        *out = Box::into_raw(Box::new(ScintDataset {
            inner: Dataset::new(rows),
        }));
        Ok(())
    })
}

impl Failure {
    fn with_row(self, i: usize) -> Self {
        Failure(self.0, format!("row {i}: {}", self.1))
    }
}

/// Reads a dataset CSV as written by `scint preprocess`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn scint_dataset_read_csv(path: *const c_char, out: *mut *mut ScintDataset) -> ScintStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = Path::new(str_arg(path, "path")?);
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let inner = Dataset::read_csv(std::io::BufReader::new(file))?;
        *out = Box::into_raw(Box::new(ScintDataset { inner }));
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scint_dataset_len(dataset: *const ScintDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Per-class row counts.
///
/// # Safety
/// `dataset` must be a live handle and `out_counts` point to 3 writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn scint_dataset_class_counts(
    dataset: *const ScintDataset,
    out_counts: *mut usize,
) -> ScintStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if out_counts.is_null() {
            return Err(null("out_counts"));
        }
        let counts = d.inner.class_counts();
        std::slice::from_raw_parts_mut(out_counts, 3).copy_from_slice(&counts);
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scint_dataset_free(dataset: *mut ScintDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn parse_params(spec: &str) -> FfiResult<ModelParams> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        let p: ModelParams =
            serde_json::from_str(spec).map_err(|e| Failure(ScintStatus::Config, format!("model parameters: {e}")))?;
        p.validate()?;
        Ok(p)
    } else {
        Ok(ModelParams::defaults(spec.parse::<ModelKind>()?))
    }
}

/// Trains a classifier. `params` is a model name (`tree`, `nb`, `svm`,
/// `knn`, `boosted`, `bagged`) for default hyperparameters, or a JSON
/// object such as `{"model_kind":"bagged_trees","n_learners":50}`.
///
/// # Safety
/// `dataset` must be a live handle, `params` a NUL-terminated string and
/// `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn scint_model_train(
    dataset: *const ScintDataset,
    params: *const c_char,
    seed: u64,
    out: *mut *mut ScintModel,
) -> ScintStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let params = parse_params(str_arg(params, "params")?)?;
        let mut inner = learners::train(&params, &Samples::from_dataset(&d.inner), seed)?;
        inner.metadata.dataset_fingerprint = Some(d.inner.fingerprint());
        *out = Box::into_raw(Box::new(ScintModel { inner }));
        Ok(())
    })
}

/// Loads a model saved by `scint train` or [`scint_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn scint_model_load(path: *const c_char, out: *mut *mut ScintModel) -> ScintStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = TrainedModel::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(ScintModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn scint_model_save(model: *const ScintModel, path: *const c_char) -> ScintStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        m.inner.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Serialized model; release with [`scint_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn scint_model_to_json(model: *const ScintModel, out_json: *mut *mut c_char) -> ScintStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let text = m.inner.to_json()?;
        *out = CString::new(text).expect("JSON has no interior nul").into_raw();
        Ok(())
    })
}

/// Predicts one row of `n_features` values. `out_scores`, when not null,
/// receives the three class scores.
///
/// # Safety
/// `model` must be a live handle, `features` point to `n_features`
/// doubles, `out_class` be writable and `out_scores` null or point to 3
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn scint_model_predict(
    model: *const ScintModel,
    features: *const f64,
    n_features: usize,
    out_class: *mut u8,
    out_scores: *mut f64,
) -> ScintStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = slice_arg(features, n_features, "features")?;
        let class = out_arg(out_class, "out_class")?;
        let scores = m.inner.predict_scores(x)?;
        *class = learners::argmax(&scores).label();
        if !out_scores.is_null() {
            std::slice::from_raw_parts_mut(out_scores, 3).copy_from_slice(&scores);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scint_model_free(model: *mut ScintModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Confusion counts of paired class labels (1-3).
///
/// # Safety
/// `predicted` and `truth` must point to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scint_confusion_accumulate(
    predicted: *const u8,
    truth: *const u8,
    n: usize,
    out: *mut ScintConfusion,
) -> ScintStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = slice_arg(predicted, n, "predicted")?;
        let t = slice_arg(truth, n, "truth")?;
        let mut cm = ConfusionMatrix::default();
        for (a, b) in p.iter().zip(t) {
            cm.record(class_arg(*a)?, class_arg(*b)?);
        }
        *out = cm.into();
        Ok(())
    })
}

/// Trace over total. Fails with `Data` on an empty matrix.
///
/// # Safety
/// `cm` must point to a valid struct and `out_accuracy` be writable.
#[no_mangle]
pub unsafe extern "C" fn scint_confusion_accuracy(cm: *const ScintConfusion, out_accuracy: *mut f64) -> ScintStatus {
    guard(|| {
        let cm = cm.as_ref().ok_or_else(|| null("cm"))?;
        let out = out_arg(out_accuracy, "out_accuracy")?;
        *out = ConfusionMatrix::from_counts(cm.counts).accuracy()?;
        Ok(())
    })
}

/// One-vs-rest precision and recall of `class` (1-3). A rate whose
/// denominator is zero is reported as NaN.
///
/// # Safety
/// `cm` must point to a valid struct; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn scint_confusion_precision_recall(
    cm: *const ScintConfusion,
    class: u8,
    out_precision: *mut f64,
    out_recall: *mut f64,
) -> ScintStatus {
    guard(|| {
        let cm = cm.as_ref().ok_or_else(|| null("cm"))?;
        let c = class_arg(class)?;
        let p = out_arg(out_precision, "out_precision")?;
        let r = out_arg(out_recall, "out_recall")?;
        let (prec, rec) = ConfusionMatrix::from_counts(cm.counts).precision_recall(c);
        *p = prec.unwrap_or(f64::NAN);
        *r = rec.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Pooled confusion counts of `k`-fold cross-validation.
///
/// # Safety
/// `dataset` must be a live handle, `params` as for [`scint_model_train`]
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scint_cross_validate(
    dataset: *const ScintDataset,
    params: *const c_char,
    k: usize,
    seed: u64,
    out: *mut ScintConfusion,
) -> ScintStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let params = parse_params(str_arg(params, "params")?)?;
        let plan = SplitPlan::kfold(k, scint_core::seed::derive(seed, "split"));
        let e = eval::cross_validate(&Samples::from_dataset(&d.inner), &params, &plan, seed)?;
        *out = e.report.pooled.into();
        Ok(())
    })
}
