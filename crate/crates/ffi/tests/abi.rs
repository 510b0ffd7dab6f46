//! Calls through the exported C functions, plus a C program built against
//! the generated header and shared library.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use fblab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fblab_last_error()) }.to_string_lossy().into_owned()
}

fn params(gamma: f64) -> *mut FblabParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { fblab_params_new(gamma, &mut p) }, FblabStatus::Ok);
    assert!(!p.is_null());
    p
}

fn field_2d(h_cells: usize, f: impl Fn(f64, f64) -> f64) -> *mut FblabField {
    let n = h_cells + 1;
    let h = 2.0 / h_cells as f64;
    let values: Vec<f64> = (0..n * n).map(|k| f(-1.0 + h * (k % n) as f64, -1.0 + h * (k / n) as f64)).collect();
    let mut out = ptr::null_mut();
    let s =
        unsafe { fblab_field_new_2d(-1.0, 1.0, -1.0, 1.0, h_cells, h_cells, values.as_ptr(), values.len(), &mut out) };
    assert_eq!(s, FblabStatus::Ok, "{}", last_error());
    out
}

#[test]
fn exponents_and_profile() {
    let p = params(1.0);
    let mut e = FblabExponents::default();
    assert_eq!(unsafe { fblab_params_exponents(p, &mut e) }, FblabStatus::Ok);
    assert!((e.alpha - 2.0 / 3.0).abs() < 1e-15);
    assert!((e.s + 2.0 / 3.0).abs() < 1e-15);
    assert!((e.c_gamma - 1.0 / 16.0).abs() < 1e-15);
    let mut u = 0.0;
    assert_eq!(unsafe { fblab_params_profile(p, 1.0, &mut u) }, FblabStatus::Ok);
    assert!((u - e.c_alpha).abs() < 1e-15);
    assert_eq!(unsafe { fblab_params_profile(p, -1.0, &mut u) }, FblabStatus::Ok);
    assert_eq!(u, 0.0);
    assert!(last_error().is_empty());
    unsafe { fblab_params_free(p) };
}

#[test]
fn errors_set_status_and_message() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { fblab_params_new(2.0, &mut p) }, FblabStatus::InvalidArgument);
    assert!(p.is_null());
    assert!(last_error().contains("gamma"), "{}", last_error());
    assert_eq!(unsafe { fblab_params_new(1.0, ptr::null_mut()) }, FblabStatus::NullPointer);
    let mut e = FblabExponents::default();
    assert_eq!(unsafe { fblab_params_exponents(ptr::null(), &mut e) }, FblabStatus::NullPointer);
    assert!(last_error().contains("params"));
    // success clears the message
    let q = params(0.5);
    assert!(last_error().is_empty());
    unsafe {
        fblab_params_free(q);
        fblab_params_free(ptr::null_mut());
        fblab_field_free(ptr::null_mut());
        fblab_radial_free(ptr::null_mut());
    }
}

#[test]
fn radial_mu_is_alpha_in_one_dimension() {
    let p = params(1.5);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { fblab_radial_solve(p, 1, 1e-12, &mut r) }, FblabStatus::Ok);
    let mut mu = 0.0;
    assert_eq!(unsafe { fblab_radial_mu(r, &mut mu) }, FblabStatus::Ok);
    assert!((mu - 2.0 / 3.5).abs() < 1e-5);
    let mut v = 0.0;
    assert_eq!(unsafe { fblab_radial_value(r, 1.0, &mut v) }, FblabStatus::Ok);
    assert!((v - 1.0).abs() < 1e-9);
    assert_eq!(unsafe { fblab_radial_value(r, 1.0 + mu + 0.5, &mut v) }, FblabStatus::Ok);
    assert_eq!(v, 0.0);
    unsafe {
        fblab_radial_free(r);
        fblab_params_free(p);
    }
}

#[test]
fn field_values_roundtrip_through_csv() {
    let f = field_2d(16, |x, y| (x + 2.0 * y).max(0.0));
    let mut len = 0;
    assert_eq!(unsafe { fblab_field_len(f, &mut len) }, FblabStatus::Ok);
    assert_eq!(len, 17 * 17);
    let mut small = vec![0.0; len - 1];
    assert_eq!(unsafe { fblab_field_values(f, small.as_mut_ptr(), small.len()) }, FblabStatus::BufferTooSmall);
    let mut a = vec![0.0; len];
    assert_eq!(unsafe { fblab_field_values(f, a.as_mut_ptr(), len) }, FblabStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("f.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fblab_field_save_csv(f, path.as_ptr()) }, FblabStatus::Ok);
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { fblab_field_load_csv(path.as_ptr(), &mut g) }, FblabStatus::Ok);
    let mut b = vec![0.0; len];
    assert_eq!(unsafe { fblab_field_values(g, b.as_mut_ptr(), len) }, FblabStatus::Ok);
    assert_eq!(a, b);

    let missing = CString::new(dir.path().join("none.csv").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { fblab_field_load_csv(missing.as_ptr(), &mut h) }, FblabStatus::Io);
    assert!(h.is_null());
    unsafe {
        fblab_field_free(f);
        fblab_field_free(g);
    }
}

#[test]
fn field_rejects_wrong_length_and_negative_values() {
    let v = [1.0, 2.0, 3.0];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { fblab_field_new_1d(0.0, 1.0, 4, v.as_ptr(), v.len(), &mut out) }, FblabStatus::InvalidArgument);
    assert!(out.is_null());
    let f = field_2d(8, |x, _| x);
    let p = params(1.0);
    let mut e = FblabEnergy::default();
    assert_ne!(unsafe { fblab_energy(f, p, false, &mut e) }, FblabStatus::Ok);
    assert!(!last_error().is_empty());
    unsafe {
        fblab_field_free(f);
        fblab_params_free(p);
    }
}

#[test]
fn profile_energy_flatness_and_touch() {
    let p = params(1.0);
    let mut e = FblabExponents::default();
    unsafe { fblab_params_exponents(p, &mut e) };
    let u0 = |t: f64| e.c_alpha * t.max(0.0).powf(e.alpha);
    let f = field_2d(128, |_, y| u0(y));
    let mut flat = FblabFlatness::default();
    assert_eq!(unsafe { fblab_flatness(f, p, 0.0, 0.0, 0.5, &mut flat) }, FblabStatus::Ok);
    assert!(flat.nu_y > 0.9999 && flat.epsilon < 2.0 / 64.0, "{flat:?}");
    let mut passed = false;
    let s = unsafe { fblab_touch_test(f, p, 0.0, 0.0, 0.5, 0.3, FblabSide::Above, &mut passed) };
    assert_eq!(s, FblabStatus::Ok, "{}", last_error());
    assert!(passed);
    assert_eq!(
        unsafe { fblab_touch_test(f, p, 0.0, 0.0, 0.5, 0.3, FblabSide::Below, &mut passed) },
        FblabStatus::InvalidArgument
    );

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fblab_minimize_1d(p, 1.0, 0.0, 128, false, &mut m) }, FblabStatus::Ok, "{}", last_error());
    let mut energy = FblabEnergy::default();
    assert_eq!(unsafe { fblab_energy(m, p, false, &mut energy) }, FblabStatus::Ok);
    assert!(energy.total > 0.0 && (energy.dirichlet + energy.potential - energy.total).abs() < 1e-12);
    unsafe {
        fblab_field_free(m);
        fblab_field_free(f);
        fblab_params_free(p);
    }
}

#[test]
fn validate_suite_passes() {
    let (mut passed, mut total) = (0, 0);
    assert_eq!(unsafe { fblab_validate(&mut passed, &mut total) }, FblabStatus::Ok);
    assert!(total > 0);
    assert_eq!(passed, total);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(fblab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/fblab.h")).unwrap();
    let src = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Directory holding the shared library: the parent of `deps/`.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let lib = lib_dir();
    assert!(lib.join("libfblab_ffi.so").exists() || lib.join("libfblab_ffi.dylib").exists(), "no cdylib in {lib:?}");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg("-L")
        .arg(&lib)
        .args(["-lfblab_ffi", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).env("LD_LIBRARY_PATH", &lib).env("DYLD_LIBRARY_PATH", &lib).output().unwrap();
    assert!(out.status.success(), "{:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "mu=0.666667");
}
