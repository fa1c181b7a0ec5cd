//! C ABI for the cascade toolkit: build record sets from raw arrays or the
//! interchange CSV, compute the metric suite and deferral curves, evaluate
//! the hybrid loss on logits, and derive gating signals and thresholds.
//!
//! Conventions:
//! - Every function returns a [`GkStatus`]; outputs are written through
//!   pointers only on `GK_STATUS_OK`.
//! - `GkRecords` is an opaque handle; free it with [`gk_records_free`].
//! - Optional metric values use NaN as the "absent" sentinel.
//! - Callers must pass valid, correctly-sized buffers; array lengths are
//!   taken on trust like any C API.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gatekeeper::cascade::{
    build_graded_records, read_records_csv, write_records_csv, CascadeDataset, ExampleRecord,
    RecordMode,
};
use gatekeeper::gating::calibrate_threshold;
use gatekeeper::loss::{gatekeeper_loss_classification, GatekeeperConfig};
use gatekeeper::metrics::KdeConfig;
use gatekeeper::numerics::{entropy_slice, softmax_into, DenseMatrix};
use gatekeeper::Error;

/// Result code of every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    GkStatusOk = 0,
    GkStatusNullArgument = 1,
    GkStatusInvalidArgument = 2,
    GkStatusNumericError = 3,
    GkStatusIoError = 4,
    GkStatusUtf8Error = 5,
    GkStatusBufferTooSmall = 6,
    GkStatusPanic = 7,
}

use GkStatus::*;

/// Opaque record-set handle.
pub struct GkRecords {
    inner: CascadeDataset,
}

/// Metric suite of one evaluated record set. NaN marks absent values
/// (graded-mode overlap/AUROC/dominance, degenerate deferral headroom,
/// undefined correlation).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GkMetrics {
    pub acc_s: f64,
    pub acc_l: f64,
    pub delta: f64,
    pub s_o: f64,
    pub s_auroc: f64,
    pub s_d: f64,
    pub pearson_rho: f64,
}

/// Hybrid-loss terms for one batch.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GkLossBreakdown {
    pub l_corr: f64,
    pub l_incorr: f64,
    pub l_total: f64,
    pub n_corr: usize,
    pub n_incorr: usize,
}

/// Which deferral curve to evaluate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkCurveKind {
    GkCurveRealized = 0,
    GkCurveIdeal = 1,
    GkCurveRandom = 2,
}

/// Which confidence signal to derive from logits.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkGating {
    GkGatingMaxSoftmax = 0,
    GkGatingNegPredEntropy = 1,
}

fn status_of(err: &Error) -> GkStatus {
    match err {
        Error::Numeric(_) => GkStatusNumericError,
        Error::Io(_) => GkStatusIoError,
        _ => GkStatusInvalidArgument,
    }
}

fn guarded<F: FnOnce() -> GkStatus>(f: F) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => GkStatusPanic,
    }
}

/// Toolkit version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn gk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

fn finish_records(
    result: Result<CascadeDataset, Error>,
    out: *mut *mut GkRecords,
) -> GkStatus {
    match result {
        Ok(inner) => {
            let handle = Box::new(GkRecords { inner });
            unsafe { *out = Box::into_raw(handle) };
            GkStatusOk
        }
        Err(e) => status_of(&e),
    }
}

/// Build a binary-mode record set from parallel arrays. Correctness flags
/// are 0 or 1.
///
/// # Safety
/// `signals`, `s_correct`, `l_correct` must point to `len` readable
/// elements; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_records_from_binary(
    signals: *const f64,
    s_correct: *const u8,
    l_correct: *const u8,
    len: usize,
    out: *mut *mut GkRecords,
) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            return GkStatusNullArgument;
        }
        let (Some(signals), Some(s), Some(l)) = (
            slice_arg(signals, len),
            slice_arg(s_correct, len),
            slice_arg(l_correct, len),
        ) else {
            return GkStatusNullArgument;
        };
        let records = (0..len)
            .map(|i| ExampleRecord {
                index: i,
                signal: signals[i],
                s_value: (s[i] != 0) as u8 as f64,
                l_value: (l[i] != 0) as u8 as f64,
            })
            .collect();
        finish_records(
            CascadeDataset::from_records(records, RecordMode::Binary, None),
            out,
        )
    })
}

/// Build a graded-mode record set from parallel score arrays in `[0, 1]`.
///
/// # Safety
/// `signals`, `s_scores`, `l_scores` must point to `len` readable
/// elements; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gk_records_from_graded(
    signals: *const f64,
    s_scores: *const f64,
    l_scores: *const f64,
    len: usize,
    out: *mut *mut GkRecords,
) -> GkStatus {
    guarded(|| {
        if out.is_null() {
            return GkStatusNullArgument;
        }
        let (Some(signals), Some(s), Some(l)) =
            (slice_arg(signals, len), slice_arg(s_scores, len), slice_arg(l_scores, len))
        else {
            return GkStatusNullArgument;
        };
        finish_records(build_graded_records(signals, s, l, None), out)
    })
}

/// Read a record set from the interchange CSV
/// (`index,signal,s_value,l_value,mode`).
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_records_read_csv(
    path: *const c_char,
    out: *mut *mut GkRecords,
) -> GkStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return GkStatusNullArgument;
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return GkStatusUtf8Error;
        };
        finish_records(read_records_csv(Path::new(path)), out)
    })
}

/// Write a record set to the interchange CSV.
///
/// # Safety
/// `records` must be a live handle; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn gk_records_write_csv(
    records: *const GkRecords,
    path: *const c_char,
) -> GkStatus {
    guarded(|| {
        if records.is_null() || path.is_null() {
            return GkStatusNullArgument;
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return GkStatusUtf8Error;
        };
        match write_records_csv(Path::new(path), &(*records).inner) {
            Ok(()) => GkStatusOk,
            Err(e) => status_of(&e),
        }
    })
}

/// Number of records in the set.
///
/// # Safety
/// `records` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_records_len(records: *const GkRecords, out: *mut usize) -> GkStatus {
    guarded(|| {
        if records.is_null() || out.is_null() {
            return GkStatusNullArgument;
        }
        *out = (*records).inner.len();
        GkStatusOk
    })
}

/// Release a record handle. Passing NULL is a no-op.
///
/// # Safety
/// `records` must have been returned by a `gk_records_*` constructor and
/// not freed before.
#[no_mangle]
pub unsafe extern "C" fn gk_records_free(records: *mut GkRecords) {
    if !records.is_null() {
        drop(Box::from_raw(records));
    }
}

/// Run a full threshold sweep and fill the metric suite. `grid_points`
/// controls the overlap estimator's density grid (0 selects the default);
/// `unit_interval_domain` selects reflected `[0,1]` support for bounded
/// confidence signals, otherwise the padded data span is used.
///
/// # Safety
/// `records` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_records_metrics(
    records: *const GkRecords,
    grid_points: usize,
    unit_interval_domain: bool,
    out: *mut GkMetrics,
) -> GkStatus {
    guarded(|| {
        if records.is_null() || out.is_null() {
            return GkStatusNullArgument;
        }
        let mut kde = if unit_interval_domain {
            KdeConfig::unit_interval()
        } else {
            KdeConfig::data_span()
        };
        if grid_points > 0 {
            kde.grid_points = grid_points;
        }
        match (*records).inner.sweep(&kde) {
            Ok(sweep) => {
                let r = sweep.report;
                let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
                *out = GkMetrics {
                    acc_s: r.acc_s,
                    acc_l: r.acc_l,
                    delta: opt(r.delta),
                    s_o: opt(r.s_o),
                    s_auroc: opt(r.s_auroc),
                    s_d: opt(r.s_d),
                    pearson_rho: opt(r.pearson_rho),
                };
                GkStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Evaluate one deferral curve on its `n + 1` cut points. `capacity` is
/// the element count of both output buffers; `written` receives the
/// number of points.
///
/// # Safety
/// `records` must be a live handle; `ratios_out` and `accuracies_out`
/// must hold at least `capacity` elements; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_records_curve(
    records: *const GkRecords,
    kind: GkCurveKind,
    ratios_out: *mut f64,
    accuracies_out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GkStatus {
    guarded(|| {
        if records.is_null() || ratios_out.is_null() || accuracies_out.is_null() || written.is_null()
        {
            return GkStatusNullArgument;
        }
        let inner = &(*records).inner;
        let needed = inner.len() + 1;
        *written = needed;
        if capacity < needed {
            return GkStatusBufferTooSmall;
        }
        let sweep = match inner.sweep(&KdeConfig::data_span()) {
            Ok(s) => s,
            Err(e) => return status_of(&e),
        };
        let curve = match kind {
            GkCurveKind::GkCurveRealized => &sweep.realized,
            GkCurveKind::GkCurveIdeal => &sweep.ideal,
            GkCurveKind::GkCurveRandom => &sweep.random,
        };
        std::ptr::copy_nonoverlapping(curve.ratios().as_ptr(), ratios_out, needed);
        std::ptr::copy_nonoverlapping(curve.accuracies().as_ptr(), accuracies_out, needed);
        GkStatusOk
    })
}

/// Evaluate the hybrid correctness-aware loss on a batch of logits
/// (row-major, `examples x classes`). When `grad_out` is non-NULL it
/// receives the analytic logit gradient in the same layout.
///
/// # Safety
/// `logits` must hold `examples * classes` elements, `labels` must hold
/// `examples` elements, `breakdown_out` must be valid, and `grad_out`
/// must be NULL or hold `examples * classes` elements.
#[no_mangle]
pub unsafe extern "C" fn gk_loss_classification(
    logits: *const f64,
    labels: *const u32,
    examples: usize,
    classes: usize,
    alpha: f64,
    breakdown_out: *mut GkLossBreakdown,
    grad_out: *mut f64,
) -> GkStatus {
    guarded(|| {
        if breakdown_out.is_null() {
            return GkStatusNullArgument;
        }
        let (Some(logits), Some(labels)) =
            (slice_arg(logits, examples * classes), slice_arg(labels, examples))
        else {
            return GkStatusNullArgument;
        };
        let cfg = match GatekeeperConfig::new(alpha) {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        let matrix = match DenseMatrix::from_vec(examples, classes, logits.to_vec()) {
            Ok(m) => m,
            Err(e) => return status_of(&e),
        };
        let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        match gatekeeper_loss_classification(&matrix, &labels, &cfg) {
            Ok((breakdown, grad)) => {
                *breakdown_out = GkLossBreakdown {
                    l_corr: breakdown.l_corr,
                    l_incorr: breakdown.l_incorr,
                    l_total: breakdown.l_total,
                    n_corr: breakdown.n_corr,
                    n_incorr: breakdown.n_incorr,
                };
                if !grad_out.is_null() {
                    std::ptr::copy_nonoverlapping(
                        grad.values().as_ptr(),
                        grad_out,
                        examples * classes,
                    );
                }
                GkStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Derive one confidence signal per logit row: max softmax, or negative
/// entropy of the row distribution.
///
/// # Safety
/// `logits` must hold `examples * classes` elements; `signals_out` must
/// hold `examples` elements.
#[no_mangle]
pub unsafe extern "C" fn gk_signals_from_logits(
    logits: *const f64,
    examples: usize,
    classes: usize,
    gating: GkGating,
    signals_out: *mut f64,
) -> GkStatus {
    guarded(|| {
        if signals_out.is_null() {
            return GkStatusNullArgument;
        }
        let Some(logits) = slice_arg(logits, examples * classes) else {
            return GkStatusNullArgument;
        };
        if classes < 2 {
            return GkStatusInvalidArgument;
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return GkStatusNumericError;
        }
        let out = std::slice::from_raw_parts_mut(signals_out, examples);
        let mut probs = vec![0.0; classes];
        for (row, slot) in logits.chunks(classes).zip(out.iter_mut()) {
            softmax_into(row, &mut probs);
            *slot = match gating {
                GkGating::GkGatingMaxSoftmax => {
                    probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
                GkGating::GkGatingNegPredEntropy => -entropy_slice(&probs, 1e-12),
            };
        }
        GkStatusOk
    })
}

/// Pick the acceptance threshold whose deferred fraction is closest to
/// the target on the calibration signals; ties prefer fewer deferrals.
///
/// # Safety
/// `signals` must hold `len` elements; `tau_out` and `achieved_out` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn gk_calibrate_threshold(
    signals: *const f64,
    len: usize,
    target_deferral_ratio: f64,
    tau_out: *mut f64,
    achieved_out: *mut f64,
) -> GkStatus {
    guarded(|| {
        if tau_out.is_null() || achieved_out.is_null() {
            return GkStatusNullArgument;
        }
        let Some(signals) = slice_arg(signals, len) else {
            return GkStatusNullArgument;
        };
        match calibrate_threshold(signals, target_deferral_ratio) {
            Ok(cal) => {
                *tau_out = cal.tau;
                *achieved_out = cal.achieved_ratio;
                GkStatusOk
            }
            Err(e) => status_of(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(gk_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
