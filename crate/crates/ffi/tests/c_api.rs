use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use accel_mfg::oracle1d::{self, EntryProblem};
use accel_mfg_ffi::*;

fn last_error() -> String {
    let p = am_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn interval(a: f64, b: f64) -> *mut AmDomain {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { am_domain_interval(a, b, &mut d) }, AmStatus::Ok);
    d
}

fn st(x: f64, v: f64) -> AmState {
    AmState { x: [x, 0.0], v: [v, 0.0] }
}

#[test]
fn domain_constructors_and_errors() {
    let d = interval(-1.0, 1.0);
    let mut s = 0.0;
    assert_eq!(unsafe { am_domain_signed_distance(d, 0.25, 0.0, &mut s) }, AmStatus::Ok);
    assert!((s + 0.75).abs() < 1e-15);
    unsafe { am_domain_free(d) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { am_domain_interval(1.0, -1.0, &mut bad) }, AmStatus::InvalidArgument);
    assert!(bad.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { am_domain_interval(0.0, 1.0, ptr::null_mut()) }, AmStatus::NullPointer);
    assert!(last_error().contains("out"));

    let square = [-1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { am_domain_polygon(square.as_ptr(), 4, &mut p) }, AmStatus::Ok);
    assert_eq!(unsafe { am_domain_signed_distance(p, 0.0, 0.5, &mut s) }, AmStatus::Ok);
    assert!((s + 0.5).abs() < 1e-12);
    unsafe { am_domain_free(p) };

    let mut disc = ptr::null_mut();
    assert_eq!(unsafe { am_domain_disc(0.0, 0.0, 2.0, &mut disc) }, AmStatus::Ok);
    assert_eq!(unsafe { am_domain_signed_distance(disc, 3.0, 0.0, &mut s) }, AmStatus::Ok);
    assert!((s - 1.0).abs() < 1e-12);
    unsafe { am_domain_free(disc) };

    // Freeing null is a no-op.
    unsafe { am_domain_free(ptr::null_mut()) };
}

#[test]
fn oracle_matches_the_library() {
    let mut r = AmEntryResult { value: 0.0, regime: -1, tau: 0.0, theta_star: 0.0 };
    assert_eq!(unsafe { am_oracle_entry(-1.0, 1.0, 0.0, 3.0, 4.0, &mut r) }, AmStatus::Ok);
    let expect = oracle1d::entry_energy(&EntryProblem::new(-1.0, 1.0, 0.0, 3.0, 4.0).unwrap()).unwrap();
    assert_eq!(r.value, expect);
    assert!((0..=2).contains(&r.regime));
    assert_eq!(r.tau.is_nan(), r.regime != 2);
    assert!(r.theta_star > 0.0 && r.theta_star <= 4.0);

    assert_eq!(unsafe { am_oracle_entry(1.0, 1.0, 0.0, 3.0, 4.0, &mut r) }, AmStatus::InvalidArgument);
}

#[test]
fn solve_at_rest_and_trajectory_access() {
    let d = interval(-1.0, 1.0);
    let opts = AmSolveOptions { knots: 33, ..am_solve_options_default() };
    let mut value = f64::NAN;
    let mut traj = ptr::null_mut();
    assert_eq!(unsafe { am_solve(d, &st(0.3, 0.0), &opts, &mut value, &mut traj) }, AmStatus::Ok);
    assert!(value.abs() < 1e-10);

    let mut n = 0;
    assert_eq!(unsafe { am_trajectory_len(traj, &mut n) }, AmStatus::Ok);
    assert!(n >= 2);

    let mut times = vec![0.0; n];
    let mut states = vec![AmState::default(); n];
    let mut len = 0;
    let short = unsafe { am_trajectory_knots(traj, times.as_mut_ptr(), states.as_mut_ptr(), n - 1, &mut len) };
    assert_eq!(short, AmStatus::BufferTooSmall);
    assert_eq!(len, n);
    assert_eq!(unsafe { am_trajectory_knots(traj, times.as_mut_ptr(), states.as_mut_ptr(), n, &mut len) }, AmStatus::Ok);
    assert_eq!(times[0], 0.0);
    assert!((times[n - 1] - 1.0).abs() < 1e-12);
    for s in &states {
        assert!((s.x[0] - 0.3).abs() < 1e-9 && s.v[0].abs() < 1e-9);
    }

    let mut s = AmState::default();
    assert_eq!(unsafe { am_trajectory_eval(traj, 2.0, &mut s) }, AmStatus::InvalidArgument);

    unsafe { am_trajectory_free(traj) };
    unsafe { am_domain_free(d) };
}

#[test]
fn solve_without_trajectory_output() {
    // Moving toward the wall at speed 1 with one unit of time left needs braking.
    let d = interval(-1.0, 1.0);
    let opts = AmSolveOptions { knots: 65, ..am_solve_options_default() };
    let mut value = f64::NAN;
    assert_eq!(unsafe { am_solve(d, &st(0.5, 1.0), &opts, &mut value, ptr::null_mut()) }, AmStatus::Ok);
    assert!(value > 0.0);
    unsafe { am_domain_free(d) };
}

#[test]
fn w1_on_translated_clouds() {
    let a = [st(0.0, 0.0), st(1.0, 0.0), st(2.0, 1.0)];
    let b: Vec<_> = a.iter().map(|s| st(s.x[0] + 0.5, s.v[0])).collect();
    let mut d = f64::NAN;
    assert_eq!(unsafe { am_w1_exact(a.as_ptr(), 3, b.as_ptr(), 3, &mut d) }, AmStatus::Ok);
    assert!((d - 0.5).abs() < 1e-12);
    assert_eq!(unsafe { am_w1_exact(a.as_ptr(), 3, b.as_ptr(), 2, &mut d) }, AmStatus::InvalidArgument);
}

#[test]
fn uncoupled_equilibrium_and_pushforward() {
    let d = interval(-1.0, 1.0);
    let m0 = [st(-0.5, 0.0), st(0.0, 0.0), st(0.5, 0.0)];
    let opts = AmEquilibriumOptions { knots: 33, ..am_equilibrium_options_default() };
    let mut m = ptr::null_mut();
    let (mut e, mut conv) = (f64::NAN, -1);
    let s = unsafe { am_equilibrium(d, m0.as_ptr(), 3, &opts, &mut m, &mut e, &mut conv) };
    assert_eq!(s, AmStatus::Ok, "{}", last_error());
    assert_eq!(conv, 1);
    assert!(e.abs() < 1e-9);

    let mut atoms = 0;
    assert_eq!(unsafe { am_measure_atoms(m, &mut atoms) }, AmStatus::Ok);
    let mut states = vec![AmState::default(); atoms];
    let mut w = vec![0.0; atoms];
    let mut len = 0;
    let s = unsafe { am_measure_pushforward(m, 0.5, states.as_mut_ptr(), w.as_mut_ptr(), atoms, &mut len) };
    assert_eq!(s, AmStatus::Ok);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut xs: Vec<f64> = states.iter().map(|s| s.x[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    assert_eq!(xs.len(), 3);
    for (x, x0) in xs.iter().zip([-0.5, 0.0, 0.5]) {
        assert!((x - x0).abs() < 1e-9);
    }

    unsafe { am_measure_free(m) };
    unsafe { am_domain_free(d) };
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(am_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn static_lib() -> PathBuf {
    // Integration test binaries live next to the library artifacts in deps/.
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    deps.join("libaccel_mfg_ffi.a")
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib();
    assert!(lib.exists(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
