use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use aamatrix_ffi::*;

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    aam_string_free(s);
    out
}

fn last_error() -> String {
    let p = aam_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn combination_names_and_errors() {
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(aam_combination_name(0, 0, &mut out), AamStatus::Ok);
        assert_eq!(take(out), "Rule-Driven Automation");
        assert_eq!(aam_combination_name(3, 0, &mut out), AamStatus::InvalidInput);
        assert!(last_error().contains("out of range"));
        assert_eq!(aam_combination_name(0, 0, ptr::null_mut()), AamStatus::NullArgument);
    }
}

#[test]
fn counts_cross_the_boundary() {
    let counts = [3i64, 3, 4, 2];
    let mut c = AamConfigCounts::default();
    let mut combined = ptr::null_mut();
    unsafe {
        assert_eq!(aam_configuration_counts(counts.as_ptr(), 4, 3, &mut c, &mut combined), AamStatus::Ok);
        assert_eq!(take(combined), "282429536481");
        let bad = [-1i64];
        assert_eq!(aam_configuration_counts(bad.as_ptr(), 1, 3, &mut c, &mut combined), AamStatus::InvalidInput);
    }
    assert_eq!((c.total_aspects, c.single_options_per_aspect, c.total_single_options), (12, 9, 108));
}

#[test]
fn profile_handles() {
    let name = CString::new("Auto-GPT").unwrap();
    let other = CString::new("BabyAGI").unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(aam_profile_builtin(name.as_ptr(), &mut a), AamStatus::Ok);
        assert_eq!(aam_profile_builtin(other.as_ptr(), &mut b), AamStatus::Ok);
        let mut d = 99;
        assert_eq!(aam_profile_distance(a, b, &mut d), AamStatus::Ok);
        assert_eq!(d, 0);
        assert_eq!(aam_profile_radar_svg(a, &mut s), AamStatus::Ok);
        assert!(take(s).starts_with("<svg"));
        assert_eq!(aam_profile_conflicts_json(a, &mut s), AamStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert!(v.as_array().is_some_and(|c| !c.is_empty()));
        assert_eq!(aam_profile_name(b, &mut s), AamStatus::Ok);
        assert_eq!(take(s), "BabyAGI");
        assert_eq!(aam_profile_levels(a, 12, &mut 0, &mut 0), AamStatus::InvalidInput);
        aam_profile_free(a);
        aam_profile_free(b);
        aam_profile_free(ptr::null_mut());

        let bad = CString::new("{").unwrap();
        assert_eq!(aam_profile_parse(bad.as_ptr(), &mut a), AamStatus::InvalidInput);
        assert_eq!(aam_profile_name(ptr::null(), &mut s), AamStatus::NullArgument);
    }
    assert_eq!(aam_builtin_count(), 8);
}

#[test]
fn runs_a_scenario_file() {
    let path = CString::new(crate_dir().join("../core/scenarios/dead-end.json").to_str().unwrap()).unwrap();
    let mut run = ptr::null_mut();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(aam_run_scenario_file(path.as_ptr(), &mut run), AamStatus::Ok);
        assert_eq!(aam_run_outcome_json(run, &mut s), AamStatus::Ok);
        let outcome: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(outcome["status"], "DeadEnd");
        let mut n = 0;
        assert_eq!(aam_run_action_count(run, &mut n), AamStatus::Ok);
        assert!(n > 0);
        assert_eq!(aam_run_events_ndjson(run, &mut s), AamStatus::Ok);
        assert!(take(s).lines().last().unwrap().contains("\"outcome\""));
        aam_run_free(run);

        let bad = CString::new("{}").unwrap();
        assert_eq!(aam_run_scenario_json(bad.as_ptr(), &mut run), AamStatus::InvalidInput);
        assert!(last_error().contains("invalid scenario"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/aamatrix.h")).unwrap();
    for f in [
        "aam_last_error",
        "aam_string_free",
        "aam_combination_name",
        "aam_configuration_counts",
        "aam_profile_builtin",
        "aam_profile_parse",
        "aam_profile_free",
        "aam_profile_radar_svg",
        "aam_run_scenario_file",
        "aam_run_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f}");
    }
    assert!(header.contains("typedef struct AamProfile AamProfile;"));
}

/// Compiles and runs a C program against the static library when a C compiler is present.
#[test]
fn c_program_links_against_static_library() {
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libaamatrix_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
