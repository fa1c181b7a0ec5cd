//! Exercise the C entry points the way a foreign caller would: raw
//! pointers, status codes, and the generated header.

use std::ffi::CString;
use std::ptr;

use gatekeeper_ffi::*;

fn oracle_records() -> *mut GkRecords {
    // oracle signal: the signal equals the small model's correctness bit
    let signals = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let s: Vec<u8> = signals.iter().map(|&v| v as u8).collect();
    let l = [1u8, 1, 1, 0, 1, 1, 1, 1];
    let mut handle: *mut GkRecords = ptr::null_mut();
    let status = unsafe {
        gk_records_from_binary(signals.as_ptr(), s.as_ptr(), l.as_ptr(), 8, &mut handle)
    };
    assert_eq!(status, GkStatus::GkStatusOk);
    assert!(!handle.is_null());
    handle
}

#[test]
fn binary_records_round_trip_and_metrics() {
    let handle = oracle_records();
    let mut len = 0usize;
    assert_eq!(unsafe { gk_records_len(handle, &mut len) }, GkStatus::GkStatusOk);
    assert_eq!(len, 8);

    let mut metrics = GkMetrics {
        acc_s: 0.0,
        acc_l: 0.0,
        delta: 0.0,
        s_o: 0.0,
        s_auroc: 0.0,
        s_d: 0.0,
        pearson_rho: 0.0,
    };
    let status = unsafe { gk_records_metrics(handle, 0, true, &mut metrics) };
    assert_eq!(status, GkStatus::GkStatusOk);
    assert!((metrics.acc_s - 5.0 / 8.0).abs() < 1e-12);
    assert!((metrics.acc_l - 7.0 / 8.0).abs() < 1e-12);
    assert_eq!(metrics.s_auroc, 1.0); // oracle signal separates perfectly
    assert!((metrics.s_d - 1.0).abs() < 1e-9);
    assert!(metrics.pearson_rho.is_nan()); // binary mode has no correlation column

    let mut ratios = vec![0.0; 16];
    let mut accs = vec![0.0; 16];
    let mut written = 0usize;
    let status = unsafe {
        gk_records_curve(
            handle,
            GkCurveKind::GkCurveRealized,
            ratios.as_mut_ptr(),
            accs.as_mut_ptr(),
            ratios.len(),
            &mut written,
        )
    };
    assert_eq!(status, GkStatus::GkStatusOk);
    assert_eq!(written, 9);
    assert_eq!(ratios[0], 0.0);
    assert_eq!(ratios[8], 1.0);
    assert!((accs[0] - 5.0 / 8.0).abs() < 1e-12);
    assert!((accs[8] - 7.0 / 8.0).abs() < 1e-12);

    // a too-small buffer reports the required size
    let status = unsafe {
        gk_records_curve(
            handle,
            GkCurveKind::GkCurveIdeal,
            ratios.as_mut_ptr(),
            accs.as_mut_ptr(),
            4,
            &mut written,
        )
    };
    assert_eq!(status, GkStatus::GkStatusBufferTooSmall);
    assert_eq!(written, 9);

    unsafe { gk_records_free(handle) };
}

#[test]
fn csv_round_trip_through_the_c_surface() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("records.csv").to_str().unwrap()).unwrap();
    let handle = oracle_records();
    assert_eq!(unsafe { gk_records_write_csv(handle, path.as_ptr()) }, GkStatus::GkStatusOk);
    unsafe { gk_records_free(handle) };

    let mut loaded: *mut GkRecords = ptr::null_mut();
    assert_eq!(
        unsafe { gk_records_read_csv(path.as_ptr(), &mut loaded) },
        GkStatus::GkStatusOk
    );
    let mut len = 0usize;
    unsafe { gk_records_len(loaded, &mut len) };
    assert_eq!(len, 8);
    unsafe { gk_records_free(loaded) };

    let missing = CString::new("/no/such/dir/records.csv").unwrap();
    let mut out: *mut GkRecords = ptr::null_mut();
    assert_eq!(
        unsafe { gk_records_read_csv(missing.as_ptr(), &mut out) },
        GkStatus::GkStatusIoError
    );
}

#[test]
fn loss_and_gradient_through_the_c_surface() {
    // two examples, two classes: first correct, second incorrect
    let logits = [3.0f64.ln(), 0.0, 0.0, 3.0f64.ln()];
    let labels = [0u32, 0];
    let mut breakdown = GkLossBreakdown {
        l_corr: 0.0,
        l_incorr: 0.0,
        l_total: 0.0,
        n_corr: 0,
        n_incorr: 0,
    };
    let mut grad = [0.0f64; 4];
    let status = unsafe {
        gk_loss_classification(
            logits.as_ptr(),
            labels.as_ptr(),
            2,
            2,
            0.5,
            &mut breakdown,
            grad.as_mut_ptr(),
        )
    };
    assert_eq!(status, GkStatus::GkStatusOk);
    assert!((breakdown.l_total - 0.10462352709822947).abs() < 1e-12);
    assert_eq!((breakdown.n_corr, breakdown.n_incorr), (1, 1));
    assert!(grad.iter().all(|g| g.is_finite()));

    // invalid alpha surfaces as an argument error
    let status = unsafe {
        gk_loss_classification(
            logits.as_ptr(),
            labels.as_ptr(),
            2,
            2,
            1.5,
            &mut breakdown,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, GkStatus::GkStatusInvalidArgument);
}

#[test]
fn signals_and_threshold_through_the_c_surface() {
    let logits = [5.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut signals = [0.0f64; 3];
    let status = unsafe {
        gk_signals_from_logits(
            logits.as_ptr(),
            3,
            2,
            GkGating::GkGatingMaxSoftmax,
            signals.as_mut_ptr(),
        )
    };
    assert_eq!(status, GkStatus::GkStatusOk);
    assert!(signals[0] > 0.99);
    assert!((signals[1] - 0.5).abs() < 1e-12);

    let calib = [0.1, 0.2, 0.3, 0.4];
    let mut tau = 0.0;
    let mut achieved = 0.0;
    let status =
        unsafe { gk_calibrate_threshold(calib.as_ptr(), 4, 0.5, &mut tau, &mut achieved) };
    assert_eq!(status, GkStatus::GkStatusOk);
    assert_eq!(achieved, 0.5);
    assert!(calib.iter().filter(|&&s| s < tau).count() == 2);
}

#[test]
fn null_arguments_are_rejected_not_crashed() {
    let mut out: *mut GkRecords = ptr::null_mut();
    assert_eq!(
        unsafe { gk_records_from_binary(ptr::null(), ptr::null(), ptr::null(), 3, &mut out) },
        GkStatus::GkStatusNullArgument
    );
    assert_eq!(
        unsafe { gk_records_len(ptr::null(), ptr::null_mut()) },
        GkStatus::GkStatusNullArgument
    );
    unsafe { gk_records_free(ptr::null_mut()) }; // no-op
}

#[test]
fn generated_header_exposes_the_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/gatekeeper.h");
    let text = std::fs::read_to_string(header).expect("header generated by the build script");
    for symbol in [
        "gk_version",
        "gk_records_from_binary",
        "gk_records_from_graded",
        "gk_records_metrics",
        "gk_records_curve",
        "gk_loss_classification",
        "gk_signals_from_logits",
        "gk_calibrate_threshold",
        "gk_records_free",
        "typedef struct GkRecords GkRecords;",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
