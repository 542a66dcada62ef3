use std::ffi::{CStr, CString};
use std::ptr;

use gravimetric::synth::{generate_bundle, write_bundle, SynthConfig};
use gravimetric_ffi::*;

fn synth_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        n_countries: 30,
        ..SynthConfig::default()
    };
    write_bundle(&generate_bundle(&config).unwrap(), dir.path()).unwrap();
    dir
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(gm_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn load_fit_and_read_back() {
    let dir = synth_dir();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let est = CString::new("ppml").unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(gm_dataset_load(path.as_ptr(), &mut ds), GmStatus::Ok);
        assert!(gm_dataset_n_flows(ds) > 0);

        let mut fit = ptr::null_mut();
        assert_eq!(gm_fit(ds, est.as_ptr(), ptr::null(), ptr::null(), &mut fit), GmStatus::Ok);
        let p = gm_fit_n_coefficients(fit);
        assert!(p > 1);
        let names: Vec<String> = (0..p)
            .map(|i| CStr::from_ptr(gm_fit_coefficient_name(fit, i)).to_string_lossy().into_owned())
            .collect();
        assert!(names.iter().any(|n| n == "gb"));
        assert!(gm_fit_coefficient_name(fit, p).is_null());

        let mut b = f64::NAN;
        let mut se = f64::NAN;
        assert_eq!(gm_fit_coefficient(fit, 0, &mut b), GmStatus::Ok);
        assert!(b.is_finite());
        assert_eq!(gm_fit_robust_se(fit, 0, &mut se), GmStatus::Ok);
        assert!(se > 0.0);
        assert_eq!(gm_fit_coefficient(fit, p, &mut b), GmStatus::Input);
        assert!(gm_fit_loglik(fit).is_finite());

        let json = gm_fit_to_json(fit);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        gm_string_free(json);
        assert!(text.trim_start().starts_with('{'));
        assert!(text.contains("\"gb\""));

        gm_fit_free(fit);
        gm_dataset_free(ds);
    }
}

#[test]
fn sector_fit_and_bad_arguments() {
    let dir = synth_dir();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(gm_dataset_load(path.as_ptr(), &mut ds), GmStatus::Ok);
        let mut fit = ptr::null_mut();

        let est = CString::new("ols").unwrap();
        let sector = CString::new("Agriculture").unwrap();
        assert_eq!(gm_fit(ds, est.as_ptr(), ptr::null(), sector.as_ptr(), &mut fit), GmStatus::Ok);
        gm_fit_free(fit);

        let bogus = CString::new("probit").unwrap();
        assert_eq!(gm_fit(ds, bogus.as_ptr(), ptr::null(), ptr::null(), &mut fit), GmStatus::Input);
        assert!(fit.is_null());
        assert!(last_error().contains("probit"));

        let bad_spec = CString::new("{not json").unwrap();
        assert_eq!(gm_fit(ds, est.as_ptr(), bad_spec.as_ptr(), ptr::null(), &mut fit), GmStatus::Input);
        assert_eq!(gm_fit(ptr::null(), est.as_ptr(), ptr::null(), ptr::null(), &mut fit), GmStatus::Input);
        gm_dataset_free(ds);
    }
}

#[test]
fn remoteness_computed_from_bilateral() {
    let dir = synth_dir();
    std::fs::remove_file(dir.path().join("remoteness.csv")).ok();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let ie = CString::new("IE").unwrap();
    let est = CString::new("ppml").unwrap();
    let spec = CString::new(r#"{"remoteness_terms": true, "time_term": false}"#).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(gm_dataset_load(path.as_ptr(), &mut ds), GmStatus::Ok);
        assert_eq!(gm_dataset_compute_remoteness(ds, ie.as_ptr()), GmStatus::Ok);
        let mut fit = ptr::null_mut();
        let status = gm_fit(ds, est.as_ptr(), spec.as_ptr(), ptr::null(), &mut fit);
        assert_eq!(status, GmStatus::Ok, "{}", last_error());
        gm_fit_free(fit);
        gm_dataset_free(ds);
    }
}

#[test]
fn missing_directory_is_input_error() {
    let path = CString::new("/nonexistent/gravimetric").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { gm_dataset_load(path.as_ptr(), &mut ds) }, GmStatus::Input);
    assert!(ds.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn formulas() {
    assert!((gm_percent_effect(0.89) - 143.512965).abs() < 1e-5);
    assert!((gm_indicator_relative_impact(-0.05, 0.0) - (-4.8771)).abs() < 1e-3);
    assert!((gm_worst_case_two_se(-0.05, 0.1) - (-22.1199)).abs() < 1e-3);

    let mut v = 0.0;
    assert_eq!(unsafe { gm_continuous_relative_impact(0.58, 0.66, &mut v) }, GmStatus::Ok);
    assert!((v - (-12.1212)).abs() < 1e-3);
    assert_eq!(unsafe { gm_continuous_relative_impact(1.0, 0.0, &mut v) }, GmStatus::Numerical);

    let (mut adj, mut pct) = (0.0, 0.0);
    assert_eq!(unsafe { gm_gni_adjustment(181.0, 10.0, 9.2, &mut adj, &mut pct) }, GmStatus::Ok);
    assert!((adj - 180.2).abs() < 1e-9);
    assert!((pct - (-0.44199)).abs() < 1e-4);

    let version = unsafe { CStr::from_ptr(gm_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}
