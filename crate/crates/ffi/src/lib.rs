//! C ABI over `aamatrix-core`.
//!
//! Every fallible function returns an [`AamStatus`]; on failure the message is
//! available from [`aam_last_error`] on the same thread. Strings handed out
//! through `out` parameters are owned by the caller and released with
//! [`aam_string_free`]. Profiles and runs are opaque handles with their own
//! free functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aamatrix_core::dependency::{compare, detect_conflicts};
use aamatrix_core::engine::scenario::Scenario;
use aamatrix_core::engine::{run, RunReport};
use aamatrix_core::profile::{builtin, builtin_profiles, parse_profile, SystemProfile};
use aamatrix_core::report::{render_radar, render_table};
use aamatrix_core::taxonomy::{combination_name, configuration_counts, AlignmentLevel, AspectId, AutonomyLevel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AamStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    NotFound = 3,
    InvalidInput = 4,
    RunFailed = 5,
    Panic = 6,
}

/// Opaque system profile.
pub struct AamProfile {
    inner: SystemProfile,
}

/// Opaque finished run.
pub struct AamRun {
    report: RunReport,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AamConfigCounts {
    pub total_aspects: u64,
    pub single_options_per_aspect: u64,
    pub total_single_options: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (AamStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn call(f: impl FnOnce() -> Result<(), Failure>) -> AamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AamStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AamStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((AamStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (AamStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err((AamStatus::NullArgument, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| (AamStatus::InvalidInput, "output contains a nul byte".to_string()))?;
    if out.is_null() {
        return Err((AamStatus::NullArgument, "output pointer is null".to_string()));
    }
    out.write(c.into_raw());
    Ok(())
}

unsafe fn profile_ref<'a>(p: *const AamProfile) -> Result<&'a SystemProfile, Failure> {
    p.as_ref().map(|p| &p.inner).ok_or((AamStatus::NullArgument, "profile handle is null".to_string()))
}

unsafe fn run_ref<'a>(r: *const AamRun) -> Result<&'a RunReport, Failure> {
    r.as_ref().map(|r| &r.report).ok_or((AamStatus::NullArgument, "run handle is null".to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn aam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aam_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Display name of the matrix cell for the given level ordinals.
///
/// # Safety
/// `out_name` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_combination_name(autonomy: u8, alignment: u8, out_name: *mut *mut c_char) -> AamStatus {
    call(|| {
        let au = AutonomyLevel::from_ordinal(autonomy)
            .ok_or((AamStatus::InvalidInput, format!("autonomy level {autonomy} out of range")))?;
        let al = AlignmentLevel::from_ordinal(alignment)
            .ok_or((AamStatus::InvalidInput, format!("alignment level {alignment} out of range")))?;
        write_string(out_name, combination_name(au, al).display_name().to_string())
    })
}

/// Configuration counts. The combined total is returned as a decimal string.
///
/// # Safety
/// `counts` must point to `len` integers; `out` and `out_combined` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn aam_configuration_counts(
    counts: *const i64,
    len: usize,
    level_count: i64,
    out: *mut AamConfigCounts,
    out_combined: *mut *mut c_char,
) -> AamStatus {
    call(|| {
        if counts.is_null() && len > 0 {
            return Err((AamStatus::NullArgument, "counts is null".to_string()));
        }
        let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(counts, len) };
        let c = configuration_counts(slice, level_count).map_err(|e| (AamStatus::InvalidInput, e.to_string()))?;
        write_out(
            out,
            AamConfigCounts {
                total_aspects: c.total_aspects,
                single_options_per_aspect: c.single_options_per_aspect,
                total_single_options: c.total_single_options,
            },
            "out",
        )?;
        write_string(out_combined, c.total_combined.to_string())
    })
}

/// Number of builtin profiles.
#[no_mangle]
pub extern "C" fn aam_builtin_count() -> usize {
    builtin_profiles().len()
}

/// # Safety
/// `name` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_builtin(name: *const c_char, out: *mut *mut AamProfile) -> AamStatus {
    call(|| {
        let name = read_str(name, "name")?;
        let p = builtin(name).ok_or((AamStatus::NotFound, format!("no builtin profile `{name}`")))?;
        write_out(out, Box::into_raw(Box::new(AamProfile { inner: p })), "out")
    })
}

/// Parses a JSON profile document.
///
/// # Safety
/// `document` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_parse(document: *const c_char, out: *mut *mut AamProfile) -> AamStatus {
    call(|| {
        let doc = read_str(document, "document")?;
        let parsed = parse_profile(doc).map_err(|e| (AamStatus::InvalidInput, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(AamProfile { inner: parsed.profile })), "out")
    })
}

/// # Safety
/// `profile` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_free(profile: *mut AamProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// # Safety
/// `profile` must be a live handle; `out_name` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_name(profile: *const AamProfile, out_name: *mut *mut c_char) -> AamStatus {
    call(|| write_string(out_name, profile_ref(profile)?.name.clone()))
}

/// Levels of the aspect at `aspect_index` in column order (0 = Decom .. 11 = Util).
///
/// # Safety
/// `profile` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_levels(
    profile: *const AamProfile,
    aspect_index: u32,
    out_autonomy: *mut u8,
    out_alignment: *mut u8,
) -> AamStatus {
    call(|| {
        let p = profile_ref(profile)?;
        let a = *AspectId::ALL
            .get(aspect_index as usize)
            .ok_or((AamStatus::InvalidInput, format!("aspect index {aspect_index} out of range")))?;
        write_out(out_autonomy, p.autonomy(a).ordinal(), "out_autonomy")?;
        write_out(out_alignment, p.alignment(a).ordinal(), "out_alignment")
    })
}

/// Conflicts of the profile as a JSON array.
///
/// # Safety
/// `profile` must be a live handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_conflicts_json(profile: *const AamProfile, out_json: *mut *mut c_char) -> AamStatus {
    call(|| {
        let conflicts = detect_conflicts(profile_ref(profile)?);
        write_string(out_json, serde_json::to_string(&conflicts).expect("conflicts serialize"))
    })
}

/// # Safety
/// `profile` must be a live handle; `out_svg` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_radar_svg(profile: *const AamProfile, out_svg: *mut *mut c_char) -> AamStatus {
    call(|| write_string(out_svg, render_radar(profile_ref(profile)?)))
}

/// L1 level distance between two profiles.
///
/// # Safety
/// Both handles must be live; `out_distance` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_profile_distance(
    a: *const AamProfile,
    b: *const AamProfile,
    out_distance: *mut u32,
) -> AamStatus {
    call(|| {
        let d = compare(profile_ref(a)?, profile_ref(b)?);
        write_out(out_distance, d.total, "out_distance")
    })
}

/// Markdown table over all builtin profiles.
///
/// # Safety
/// `out_markdown` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_builtin_table_markdown(out_markdown: *mut *mut c_char) -> AamStatus {
    call(|| write_string(out_markdown, render_table(&builtin_profiles())))
}

fn finish_run(scenario: Result<Scenario, aamatrix_core::error::EngineError>) -> Result<Box<AamRun>, Failure> {
    let scenario = scenario.map_err(|e| (AamStatus::InvalidInput, e.to_string()))?;
    let report = run(&scenario).map_err(|e| (AamStatus::RunFailed, e.to_string()))?;
    Ok(Box::new(AamRun { report }))
}

/// Loads and runs a scenario file to completion.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_run_scenario_file(path: *const c_char, out: *mut *mut AamRun) -> AamStatus {
    call(|| {
        let path = read_str(path, "path")?;
        let r = finish_run(Scenario::load(Path::new(path)))?;
        write_out(out, Box::into_raw(r), "out")
    })
}

/// Runs a scenario given as a JSON document. Its registry must be inline.
///
/// # Safety
/// `document` must be a nul-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_run_scenario_json(document: *const c_char, out: *mut *mut AamRun) -> AamStatus {
    call(|| {
        let doc = read_str(document, "document")?;
        let r = finish_run(Scenario::parse(doc))?;
        write_out(out, Box::into_raw(r), "out")
    })
}

/// The outcome as a JSON object.
///
/// # Safety
/// `run` must be a live handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_run_outcome_json(run: *const AamRun, out_json: *mut *mut c_char) -> AamStatus {
    call(|| {
        let r = run_ref(run)?;
        write_string(out_json, serde_json::to_string(&r.outcome).expect("outcome serializes"))
    })
}

/// Number of actions in the run's log.
///
/// # Safety
/// `run` must be a live handle; `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_run_action_count(run: *const AamRun, out_count: *mut u64) -> AamStatus {
    call(|| write_out(out_count, run_ref(run)?.activity.action_log.len() as u64, "out_count"))
}

/// The event stream as NDJSON.
///
/// # Safety
/// `run` must be a live handle; `out_ndjson` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aam_run_events_ndjson(run: *const AamRun, out_ndjson: *mut *mut c_char) -> AamStatus {
    call(|| write_string(out_ndjson, run_ref(run)?.ndjson()))
}

/// # Safety
/// `run` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aam_run_free(run: *mut AamRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
