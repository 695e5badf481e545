use std::ffi::{CStr, CString};
use std::ptr;

use sparfsim_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sparfsim_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn scenario_roundtrip_through_handles() {
    unsafe {
        let mut s = ptr::null_mut();
        let st = sparfsim_scenario_new(SparfSystem::Instinfer, 8, 128, 8, 0.125, 2, 1, &mut s);
        assert_eq!(st, SparfStatus::Ok, "{}", last_error());
        let mut r = ptr::null_mut();
        assert_eq!(sparfsim_simulate(s, &mut r), SparfStatus::Ok);
        let mut sum = SparfReportSummary::default();
        assert_eq!(sparfsim_report_summary(r, &mut sum), SparfStatus::Ok);
        assert!(sum.throughput_tok_s > 0.0);
        assert_eq!(sum.csd_count, 2);
        let shares = sum.weight_share + sum.kv_share + sum.compute_share + sum.transfer_share;
        assert!((shares - 1.0).abs() < 1e-9);
        sparfsim_report_free(r);
        sparfsim_scenario_free(s);
    }
}

#[test]
fn json_errors_carry_the_field_name() {
    let json = CString::new(r#"{"system": "ssd-offload", "workload": {"batch": 1, "input_len": 8, "output_len": 1}}"#).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { sparfsim_scenario_from_json(json.as_ptr(), &mut s) };
    assert_eq!(st, SparfStatus::Parse);
    assert!(s.is_null());
    assert!(last_error().contains("seed"), "{}", last_error());
}

#[test]
fn null_and_invalid_arguments() {
    unsafe {
        assert_eq!(sparfsim_simulate(ptr::null(), ptr::null_mut()), SparfStatus::NullPointer);
        let mut s = ptr::null_mut();
        let st = sparfsim_scenario_new(SparfSystem::SsdOffload, 0, 128, 8, 1.0, 1, 0, &mut s);
        assert_eq!(st, SparfStatus::InvalidArgument);
        sparfsim_scenario_free(ptr::null_mut());
        sparfsim_report_free(ptr::null_mut());
        sparfsim_layout_free(ptr::null_mut());
    }
}

#[test]
fn kv_sizing_matches_the_closed_form() {
    let mut bytes = 0.0;
    assert_eq!(unsafe { sparfsim_kv_cache_bytes(40, 5120, 2, 1, 1, &mut bytes) }, SparfStatus::Ok);
    assert_eq!(bytes, 819_200.0);
}

#[test]
fn attention_entry_points() {
    let (d, s) = (16usize, 64usize);
    let q: Vec<f64> = (0..d).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
    let k: Vec<f64> = (0..d * s).map(|i| ((i * 13 % 11) as f64 - 5.0) * 0.1).collect();
    let v: Vec<f64> = (0..d * s).map(|i| ((i * 17 % 7) as f64 - 3.0) * 0.2).collect();
    let mut dense = vec![0.0; d];
    let mut sparse = vec![0.0; d];
    let mut alpha = 0.0;
    unsafe {
        assert_eq!(
            sparfsim_dense_attention(q.as_ptr(), k.as_ptr(), v.as_ptr(), d, s, dense.as_mut_ptr()),
            SparfStatus::Ok
        );
        let st = sparfsim_sparf_attention(q.as_ptr(), k.as_ptr(), v.as_ptr(), d, s, d, s, 4, 16, sparse.as_mut_ptr(), &mut alpha);
        assert_eq!(st, SparfStatus::Ok, "{}", last_error());
        let st = sparfsim_sparf_attention(q.as_ptr(), k.as_ptr(), v.as_ptr(), d, s, d + 1, s, 4, 16, sparse.as_mut_ptr(), ptr::null_mut());
        assert_eq!(st, SparfStatus::InvalidArgument);
    }
    assert!((alpha - 1.0).abs() < 1e-12);
    for (a, b) in dense.iter().zip(&sparse) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn layout_counts_pages() {
    unsafe {
        let mut l = ptr::null_mut();
        assert_eq!(sparfsim_layout_new(1, 1, 128, 4096, 8, &mut l), SparfStatus::Ok, "{}", last_error());
        let row = vec![0.25; 128];
        for _ in 0..40 {
            assert_eq!(sparfsim_layout_append(l, 0, 0, row.as_ptr(), row.as_ptr()), SparfStatus::Ok);
        }
        assert_eq!(sparfsim_layout_sync(l, 0), SparfStatus::Ok);
        let tokens: Vec<usize> = (0..16).collect();
        let (mut pages, mut hits) = (0, 0);
        let st = sparfsim_layout_lookup_tokens(l, 0, 0, SparfTensor::K, tokens.as_ptr(), tokens.len(), &mut pages, &mut hits);
        assert_eq!(st, SparfStatus::Ok, "{}", last_error());
        assert_eq!((pages, hits), (1, 0));
        let tail = [35usize];
        sparfsim_layout_lookup_tokens(l, 0, 0, SparfTensor::V, tail.as_ptr(), 1, &mut pages, &mut hits);
        assert_eq!((pages, hits), (0, 1));
        let bad = [99usize];
        let st = sparfsim_layout_lookup_tokens(l, 0, 0, SparfTensor::V, bad.as_ptr(), 1, &mut pages, &mut hits);
        assert_eq!(st, SparfStatus::Mapping);
        assert_eq!(sparfsim_layout_sync(l, 1), SparfStatus::Ok);
        let mut wa = 0.0;
        assert_eq!(sparfsim_layout_write_amplification(l, &mut wa), SparfStatus::Ok);
        assert!(wa >= 1.0);
        sparfsim_layout_free(l);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(sparfsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
