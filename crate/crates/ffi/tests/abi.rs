use std::ffi::{c_char, CStr};
use std::path::Path;
use std::process::Command;
use std::ptr;

use hchain_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { hc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn build(mode: usize, groups: usize, d: usize) -> *mut HcBlockSystem {
    let mut h = ptr::null_mut();
    let s = unsafe { hc_block_system_new(mode, groups, d, 1.0, 1.0, 1.0, &mut h) };
    assert_eq!(s, HcStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

#[test]
fn handle_lifecycle_and_queries() {
    let h = build(30, 630, 8);
    let mut n = 0usize;
    assert_eq!(unsafe { hc_block_system_env_dim(h, &mut n) }, HcStatus::Ok);
    assert_eq!(n, 7);

    let (mut k, mut v) = (0.0, 0.0);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    let s = unsafe {
        hc_block_system_reduced_forms(h, &mut k, &mut v, re.as_mut_ptr(), im.as_mut_ptr(), n)
    };
    assert_eq!(s, HcStatus::Ok);
    assert!((k - 1.0).abs() < 1e-12, "kinetic constant {k}");
    let mut omega = 0.0;
    assert_eq!(
        unsafe { hc_block_system_coarse_frequency(h, &mut omega) },
        HcStatus::Ok
    );
    assert!((v - omega * omega).abs() < 1e-12);
    assert!(re.iter().zip(&im).any(|(a, b)| a.hypot(*b) > 0.0));

    let mut s2 = 0.0;
    assert_eq!(
        unsafe { hc_block_system_noise_strength(h, &mut s2) },
        HcStatus::Ok
    );
    let mut direct = 0.0;
    assert_eq!(
        unsafe { hc_noise_strength(30, 8, 630, &mut direct) },
        HcStatus::Ok
    );
    assert_eq!(s2, direct);
    assert!(s2 > 0.0);

    let mut trace = 0.0;
    assert_eq!(
        unsafe { hc_block_system_kernel_trace(h, 1.0, 0.5, &mut trace) },
        HcStatus::Ok
    );
    let mut measure = 0.0;
    assert_eq!(
        unsafe { hc_trace_measure(30, 8, 630, &mut measure) },
        HcStatus::Ok
    );
    assert!((trace - measure).abs() <= 1e-12 * measure.abs());
    unsafe { hc_block_system_free(h) };
}

#[test]
fn buffer_too_small_is_reported() {
    let h = build(2, 16, 4);
    let (mut k, mut v) = (0.0, 0.0);
    let mut re = [0.0; 2];
    let mut im = [0.0; 2];
    let s = unsafe {
        hc_block_system_reduced_forms(h, &mut k, &mut v, re.as_mut_ptr(), im.as_mut_ptr(), 2)
    };
    assert_eq!(s, HcStatus::BufferTooSmall);
    assert!(last_error().contains("3 needed"));
    unsafe { hc_block_system_free(h) };
}

#[test]
fn single_group_needs_no_coupling_arrays() {
    let h = build(5, 16, 1);
    let (mut k, mut v) = (0.0, 0.0);
    let s = unsafe {
        hc_block_system_reduced_forms(h, &mut k, &mut v, ptr::null_mut(), ptr::null_mut(), 0)
    };
    assert_eq!(s, HcStatus::Ok);
    let mut s2 = -1.0;
    assert_eq!(
        unsafe { hc_block_system_noise_strength(h, &mut s2) },
        HcStatus::Ok
    );
    assert_eq!(s2, 0.0);
    unsafe { hc_block_system_free(h) };
}

#[test]
fn invalid_arguments_map_to_status_codes() {
    let mut h = ptr::null_mut();
    let s = unsafe { hc_block_system_new(1, 16, 4, -1.0, 1.0, 1.0, &mut h) };
    assert_eq!(s, HcStatus::Domain);
    assert!(h.is_null());
    assert!(last_error().contains("positive"));

    let s = unsafe { hc_block_system_new(1, 16, 4, 1.0, 1.0, 1.0, ptr::null_mut()) };
    assert_eq!(s, HcStatus::NullPointer);

    let mut out = 0.0;
    assert_eq!(
        unsafe { hc_block_system_noise_strength(ptr::null(), &mut out) },
        HcStatus::NullPointer
    );
    assert!(last_error().contains("handle"));

    let h = build(1, 16, 2);
    assert_eq!(
        unsafe { hc_block_system_kernel_trace(h, 1.0, 0.0, &mut out) },
        HcStatus::Domain
    );
    unsafe { hc_block_system_free(h) };
    unsafe { hc_block_system_free(ptr::null_mut()) };
}

#[test]
fn reduced_form_check_through_the_abi() {
    let (mut r, mut pass) = (1.0, false);
    let s = unsafe { hc_check_reduced_forms(30, 8, 630, 8, 1.0, &mut r, &mut pass) };
    assert_eq!(s, HcStatus::Ok, "{}", last_error());
    assert!(pass && r < 1e-10, "residual {r}");
}

#[test]
fn last_error_truncates_and_reports_length() {
    let mut h = ptr::null_mut();
    unsafe { hc_block_system_new(1, 16, 4, 0.0, 1.0, 1.0, &mut h) };
    let full = unsafe { hc_last_error_message(ptr::null_mut(), 0) };
    let mut buf = [0x7f as c_char; 8];
    let n = unsafe { hc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert!(n > 7);
    assert_eq!(buf[7], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes().len(), 7);
}

#[test]
fn status_strings_are_static() {
    for s in [
        HcStatus::Ok,
        HcStatus::NullPointer,
        HcStatus::Panic,
        HcStatus::BufferTooSmall,
    ] {
        let text = unsafe { CStr::from_ptr(hc_status_string(s)) };
        assert!(!text.to_bytes().is_empty());
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hchain.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "hc_block_system_new",
        "hc_block_system_free",
        "hc_block_system_env_dim",
        "hc_block_system_coarse_frequency",
        "hc_block_system_reduced_forms",
        "hc_block_system_noise_strength",
        "hc_block_system_kernel_trace",
        "hc_noise_strength",
        "hc_trace_measure",
        "hc_check_reduced_forms",
        "hc_last_error_message",
        "hc_status_string",
        "HC_STATUS_PANIC",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax-check the header as C when a compiler is on PATH.
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99"])
        .arg(&header)
        .output()
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let Ok(exe) = std::env::current_exe() else {
        return;
    };
    let profile = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile.join("libhchain_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        return;
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let bin = Path::new(env!("CARGO_TARGET_TMPDIR")).join("hchain_smoke");
    let out = Command::new("cc")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let mut expected = 0.0;
    unsafe { hc_noise_strength(30, 8, 630, &mut expected) };
    let printed: f64 = String::from_utf8_lossy(&run.stdout)
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((printed - expected).abs() <= 1e-11 * expected);
}
