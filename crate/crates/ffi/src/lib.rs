//! C ABI over `lfq-core`: metric scoring, Thurstone scaling, logistic
//! fitting, correlation statistics and the durable study store.
//!
//! Every function returns an [`LfqStatus`]. On failure the message is kept
//! per thread and read with [`lfq_last_error`]. Handles are opaque and freed
//! with their `_free` function; strings returned through `char **` are freed
//! with [`lfq_string_free`].

use lfq_core::bench::{correlate, logistic_fit, predict, LogisticParams};
use lfq_core::lightfield::{load_view, BitDepth, View};
use lfq_core::metrics::{compute, MetricConfig, MetricId};
use lfq_core::scaling::{thurstone_case_v, ComparisonMatrix, FitOptions};
use lfq_core::service::{ObserverRecord, StudyOptions, StudyStore};
use lfq_core::study::{write_responses, StudyManifest};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfqStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Metric = 5,
    Scaling = 6,
    Bench = 7,
    Service = 8,
    Panic = 9,
}

/// Parameter tables for the metrics.
pub struct LfqMetricConfig(MetricConfig);

/// A directory of durable studies.
pub struct LfqStudyStore(StudyStore);

/// Fitted `q = a + b / (1 + exp(-c (o - d)))`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LfqLogistic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LfqCorrelation {
    pub pcc: f64,
    pub srocc: f64,
    pub rmse: f64,
    pub outlier_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LfqStatus, String);

type Outcome = Result<(), Failure>;

fn fail(status: LfqStatus, e: impl std::fmt::Display) -> Failure {
    Failure(status, e.to_string())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Outcome) -> LfqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LfqStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LfqStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(LfqStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(LfqStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` is null or points to `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, n))
}

fn out_string(out: *mut *mut c_char, s: String) -> Outcome {
    non_null(out, "out")?;
    let c = CString::new(s).map_err(|e| fail(LfqStatus::InvalidArgument, e))?;
    // SAFETY: checked non-null; the caller owns the slot.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length.
///
/// # Safety
/// `buf` is null or points to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lfq_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lfq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Bundled metric tables.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lfq_metric_config_default(out: *mut *mut LfqMetricConfig) -> LfqStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(LfqMetricConfig(MetricConfig::default())));
        Ok(())
    })
}

/// Tables from `dir`; files absent there keep their defaults.
///
/// # Safety
/// `dir` is a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lfq_metric_config_load(dir: *const c_char, out: *mut *mut LfqMetricConfig) -> LfqStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        non_null(out, "out")?;
        let cfg = MetricConfig::load_dir(Path::new(dir)).map_err(|e| fail(LfqStatus::Metric, e))?;
        *out = Box::into_raw(Box::new(LfqMetricConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lfq_metric_config_free(cfg: *mut LfqMetricConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn metric_id(name: &str) -> Result<MetricId, Failure> {
    name.parse().map_err(|e| fail(LfqStatus::InvalidArgument, e))
}

fn rgb_view(samples: &[f64], width: usize, height: usize) -> Result<View, Failure> {
    View::new(width, height, BitDepth::Sixteen, samples.to_vec()).map_err(|e| fail(LfqStatus::InvalidArgument, e))
}

/// Scores `test` against `reference`: interleaved RGB samples in `[0,1]`,
/// `width * height * 3` each. `metric` is one of `psnr_hvs`, `ms_ssim`,
/// `fsimc`, `iw_ssim`, `psnr`.
///
/// # Safety
/// Pointers are valid for the sizes given; `metric` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lfq_metric_compute(
    cfg: *const LfqMetricConfig,
    metric: *const c_char,
    reference: *const f64,
    test: *const f64,
    width: usize,
    height: usize,
    out_value: *mut f64,
) -> LfqStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out_value, "out_value")?;
        let id = metric_id(text(metric, "metric")?)?;
        let n = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(3))
            .ok_or_else(|| fail(LfqStatus::InvalidArgument, "image size overflows"))?;
        let r = rgb_view(slice(reference, n, "reference")?, width, height)?;
        let t = rgb_view(slice(test, n, "test")?, width, height)?;
        let result = compute(id, &r, &t, &(*cfg).0).map_err(|e| fail(LfqStatus::Metric, e))?;
        *out_value = result.value;
        Ok(())
    })
}

/// Scores two image files (PNG or PPM).
///
/// # Safety
/// Strings are NUL-terminated; `cfg` and `out_value` are valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_metric_compute_files(
    cfg: *const LfqMetricConfig,
    metric: *const c_char,
    reference_path: *const c_char,
    test_path: *const c_char,
    out_value: *mut f64,
) -> LfqStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out_value, "out_value")?;
        let id = metric_id(text(metric, "metric")?)?;
        let load = |p: &str| load_view(Path::new(p), None).map_err(|e| fail(LfqStatus::Io, e));
        let r = load(text(reference_path, "reference_path")?)?;
        let t = load(text(test_path, "test_path")?)?;
        *out_value = compute(id, &r, &t, &(*cfg).0).map_err(|e| fail(LfqStatus::Metric, e))?.value;
        Ok(())
    })
}

/// Case V scale values from an `n x n` row-major win matrix (`wins[i*n+j]`:
/// times `i` was preferred over `j`). `out_scores` receives `n` values with
/// the first condition at 0. `prior` is the Bayesian regularization weight.
///
/// # Safety
/// `wins` holds `n*n` values and `out_scores` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn lfq_thurstone(wins: *const f64, n: usize, prior: f64, out_scores: *mut f64) -> LfqStatus {
    guard(|| {
        let nn = n.checked_mul(n).ok_or_else(|| fail(LfqStatus::InvalidArgument, "n overflows"))?;
        let w = slice(wins, nn, "wins")?;
        non_null(out_scores, "out_scores")?;
        let m = ComparisonMatrix {
            conditions: (0..n).map(|i| i.to_string()).collect(),
            v: w.chunks(n.max(1)).map(<[f64]>::to_vec).collect(),
        };
        let opts = FitOptions { prior, ..FitOptions::default() };
        let q = thurstone_case_v(&m, &opts).map_err(|e| fail(LfqStatus::Scaling, e))?;
        std::ptr::copy_nonoverlapping(q.as_ptr(), out_scores, n);
        Ok(())
    })
}

/// Least-squares logistic fit of `q` against `o`.
///
/// # Safety
/// `o` and `q` hold `n` values; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_logistic_fit(o: *const f64, q: *const f64, n: usize, out: *mut LfqLogistic) -> LfqStatus {
    guard(|| {
        let (o, q) = (slice(o, n, "o")?, slice(q, n, "q")?);
        non_null(out, "out")?;
        let points: Vec<(f64, f64)> = o.iter().copied().zip(q.iter().copied()).collect();
        let p = logistic_fit(&points).map_err(|e| fail(LfqStatus::Bench, e))?;
        *out = LfqLogistic { a: p.a, b: p.b, c: p.c, d: p.d };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lfq_logistic_predict(p: LfqLogistic, o: f64) -> f64 {
    predict(&LogisticParams { a: p.a, b: p.b, c: p.c, d: p.d }, o)
}

/// PCC, SROCC, RMSE and outlier ratio of `predicted` against `observed`;
/// `half_widths` (CI half-widths of the observations) may be null.
///
/// # Safety
/// Arrays hold `n` values; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_correlate(
    predicted: *const f64,
    observed: *const f64,
    half_widths: *const f64,
    n: usize,
    out: *mut LfqCorrelation,
) -> LfqStatus {
    guard(|| {
        let (p, o) = (slice(predicted, n, "predicted")?, slice(observed, n, "observed")?);
        let hw: Vec<f64> = if half_widths.is_null() { vec![0.0; n] } else { slice(half_widths, n, "half_widths")?.to_vec() };
        non_null(out, "out")?;
        let pairs: Vec<(f64, f64)> = p.iter().copied().zip(o.iter().copied()).collect();
        let c = correlate(&pairs, &hw).map_err(|e| fail(LfqStatus::Bench, e))?;
        *out = LfqCorrelation {
            pcc: c.pcc,
            srocc: c.srocc,
            rmse: c.rmse,
            outlier_ratio: c.outlier_ratio,
        };
        Ok(())
    })
}

/// Opens (creating if needed) a study store and replays its logs.
///
/// # Safety
/// `root` is NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_open(root: *const c_char, out: *mut *mut LfqStudyStore) -> LfqStatus {
    guard(|| {
        let root = text(root, "root")?;
        non_null(out, "out")?;
        let store = StudyStore::open(Path::new(root)).map_err(|e| fail(LfqStatus::Service, e))?;
        *out = Box::into_raw(Box::new(LfqStudyStore(store)));
        Ok(())
    })
}

/// # Safety
/// `store` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_free(store: *mut LfqStudyStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

fn json<T: serde::de::DeserializeOwned>(s: &str, name: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| fail(LfqStatus::InvalidArgument, format!("{name}: {e}")))
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string(v).expect("service types serialize")
}

/// Registers a study manifest (JSON) whose images live under `assets_dir`.
/// `options_json` may be null for defaults. Writes the study id.
///
/// # Safety
/// Strings are NUL-terminated; `out_id` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_create_study(
    store: *const LfqStudyStore,
    manifest_json: *const c_char,
    assets_dir: *const c_char,
    options_json: *const c_char,
    out_id: *mut *mut c_char,
) -> LfqStatus {
    guard(|| {
        non_null(store, "store")?;
        let manifest: StudyManifest = json(text(manifest_json, "manifest_json")?, "manifest_json")?;
        let options: StudyOptions = if options_json.is_null() {
            StudyOptions::default()
        } else {
            json(text(options_json, "options_json")?, "options_json")?
        };
        let assets = text(assets_dir, "assets_dir")?;
        let id = (*store)
            .0
            .create_study(manifest, Path::new(assets), options)
            .map_err(|e| fail(LfqStatus::Service, e))?;
        out_string(out_id, id)
    })
}

/// Registers an observer from an operator record (JSON); writes the
/// observer state as JSON.
///
/// # Safety
/// Strings are NUL-terminated; `out_json` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_register(
    store: *const LfqStudyStore,
    study_id: *const c_char,
    record_json: *const c_char,
    out_json: *mut *mut c_char,
) -> LfqStatus {
    guard(|| {
        non_null(store, "store")?;
        let id = text(study_id, "study_id")?;
        let record: ObserverRecord = json(text(record_json, "record_json")?, "record_json")?;
        let state = (*store).0.with(id, |s| s.register(record)).map_err(|e| fail(LfqStatus::Service, e))?;
        out_string(out_json, to_json(&state))
    })
}

/// Serves the observer's next item; writes the directive as JSON.
///
/// # Safety
/// Strings are NUL-terminated; `out_json` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_next(
    store: *const LfqStudyStore,
    study_id: *const c_char,
    observer_id: *const c_char,
    out_json: *mut *mut c_char,
) -> LfqStatus {
    guard(|| {
        non_null(store, "store")?;
        let (id, oid) = (text(study_id, "study_id")?, text(observer_id, "observer_id")?);
        let d = (*store).0.with(id, |s| s.next(oid)).map_err(|e| fail(LfqStatus::Service, e))?;
        out_string(out_json, to_json(&d))
    })
}

/// Records an answer (`left`, `right` or `not_sure`, as displayed).
/// `latency_ms` below zero means unknown. Writes the acknowledgement JSON.
///
/// # Safety
/// Strings are NUL-terminated; `out_json` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_submit(
    store: *const LfqStudyStore,
    study_id: *const c_char,
    observer_id: *const c_char,
    triplet_id: *const c_char,
    choice: *const c_char,
    latency_ms: i64,
    out_json: *mut *mut c_char,
) -> LfqStatus {
    guard(|| {
        non_null(store, "store")?;
        let (id, oid) = (text(study_id, "study_id")?, text(observer_id, "observer_id")?);
        let (tid, choice) = (text(triplet_id, "triplet_id")?, text(choice, "choice")?);
        let latency = u64::try_from(latency_ms).ok();
        let ack = (*store)
            .0
            .with(id, |s| s.submit(oid, tid, choice, latency))
            .map_err(|e| fail(LfqStatus::Service, e))?;
        out_string(out_json, to_json(&ack))
    })
}

/// Exports responses as newline-delimited JSON.
///
/// # Safety
/// Strings are NUL-terminated; `out_ndjson` is valid.
#[no_mangle]
pub unsafe extern "C" fn lfq_store_export(
    store: *const LfqStudyStore,
    study_id: *const c_char,
    include_training: bool,
    out_ndjson: *mut *mut c_char,
) -> LfqStatus {
    guard(|| {
        non_null(store, "store")?;
        let id = text(study_id, "study_id")?;
        let responses = (*store).0.with(id, |s| s.export(include_training)).map_err(|e| fail(LfqStatus::Service, e))?;
        let mut buf = Vec::new();
        write_responses(&mut buf, &responses).map_err(|e| fail(LfqStatus::Io, e))?;
        out_string(out_ndjson, String::from_utf8(buf).expect("json is UTF-8"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { lfq_last_error(buf.as_mut_ptr(), buf.len()) };
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
        assert_eq!(s.len(), n.min(255));
        s
    }

    #[test]
    fn metric_on_identical_images_hits_identity() {
        let mut cfg = std::ptr::null_mut();
        assert_eq!(unsafe { lfq_metric_config_default(&mut cfg) }, LfqStatus::Ok);
        let img: Vec<f64> = (0..200 * 200 * 3).map(|i| ((i * 37) % 251) as f64 / 250.0).collect();
        let mut v = 0.0;
        let name = CString::new("ms_ssim").unwrap();
        let st = unsafe { lfq_metric_compute(cfg, name.as_ptr(), img.as_ptr(), img.as_ptr(), 200, 200, &mut v) };
        assert_eq!(st, LfqStatus::Ok, "{}", last_error());
        assert!((v - 1.0).abs() < 1e-12);
        let bad = CString::new("nope").unwrap();
        let st = unsafe { lfq_metric_compute(cfg, bad.as_ptr(), img.as_ptr(), img.as_ptr(), 200, 200, &mut v) };
        assert_eq!(st, LfqStatus::InvalidArgument);
        assert!(last_error().contains("nope"));
        unsafe { lfq_metric_config_free(cfg) };
    }

    #[test]
    fn null_arguments_are_reported() {
        let st = unsafe { lfq_metric_config_default(std::ptr::null_mut()) };
        assert_eq!(st, LfqStatus::NullArgument);
        assert_eq!(last_error(), "out is null");
        let mut small = [0 as c_char; 4];
        assert_eq!(unsafe { lfq_last_error(small.as_mut_ptr(), 4) }, 11);
        assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_str().unwrap(), "out");
    }

    #[test]
    fn thurstone_logistic_and_correlation() {
        // three conditions, 0 < 1 < 2
        let wins = [0.0, 2.0, 1.0, 8.0, 0.0, 3.0, 9.0, 7.0, 0.0];
        let mut q = [f64::NAN; 3];
        assert_eq!(unsafe { lfq_thurstone(wins.as_ptr(), 3, 0.0, q.as_mut_ptr()) }, LfqStatus::Ok, "{}", last_error());
        assert_eq!(q[0], 0.0);
        assert!(q[0] < q[1] && q[1] < q[2], "{q:?}");

        let truth = LfqLogistic { a: 0.1, b: 0.8, c: 3.0, d: 0.5 };
        let o: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let obs: Vec<f64> = o.iter().map(|&x| lfq_logistic_predict(truth, x)).collect();
        let mut fit = LfqLogistic::default();
        assert_eq!(unsafe { lfq_logistic_fit(o.as_ptr(), obs.as_ptr(), o.len(), &mut fit) }, LfqStatus::Ok);
        let pred: Vec<f64> = o.iter().map(|&x| lfq_logistic_predict(fit, x)).collect();
        let mut c = LfqCorrelation::default();
        let st = unsafe { lfq_correlate(pred.as_ptr(), obs.as_ptr(), std::ptr::null(), o.len(), &mut c) };
        assert_eq!(st, LfqStatus::Ok);
        assert!(c.pcc > 0.999999 && c.srocc == 1.0 && c.rmse < 1e-5, "{c:?}");

        let st = unsafe { lfq_logistic_fit(o.as_ptr(), obs.as_ptr(), 2, &mut fit) };
        assert_eq!(st, LfqStatus::Bench);
    }

    #[test]
    fn strings_round_trip() {
        let mut out = std::ptr::null_mut();
        out_string(&mut out, "hello".into()).ok().unwrap();
        assert_eq!(unsafe { CStr::from_ptr(out) }.to_str().unwrap(), "hello");
        unsafe { lfq_string_free(out) };
        unsafe { lfq_string_free(std::ptr::null_mut()) };
    }
}
