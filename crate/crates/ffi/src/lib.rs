//! C ABI over `stbpu-core`.
//!
//! Configurations, traces and reports cross the boundary as opaque handles
//! created by `stbpu_*_new`/`parse`/`load` and released by the matching
//! `stbpu_*_free`. Every fallible call returns a `StbpuStatus`; on failure
//! `stbpu_last_error` describes what went wrong on the calling thread.
//! Panics never unwind into C: they come back as `STBPU_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stbpu_core::analysis::{collision_prob, gem_eviction_cost, injection_cost, reuse_cost, StructGeom};
use stbpu_core::attack::{run_scenario, AttackScenario};
use stbpu_core::predictors::{ModelKind, PredictorConfig};
use stbpu_core::sim::{report_csv, simulate, thresholds_for, SimReport};
use stbpu_core::st::ThresholdConfig;
use stbpu_core::trace::{parse_trace, synth_trace, Scenario, SynthParams, TraceStream};
use stbpu_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StbpuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Out-of-range number or unknown name.
    InvalidArgument = 3,
    /// Malformed trace, netlist or config text.
    Parse = 4,
    Io = 5,
    /// Simulation or attack failed.
    Failed = 6,
    Panic = 7,
}

/// Opaque predictor configuration.
pub struct StbpuConfig(PredictorConfig);

/// Opaque branch trace.
pub struct StbpuTrace(TraceStream);

/// Opaque simulation report.
pub struct StbpuReport(SimReport);

/// Headline numbers of a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StbpuSummary {
    pub branches: u64,
    pub direction_accuracy: f64,
    pub target_accuracy: f64,
    pub oae: f64,
    pub direction_misp: u64,
    pub target_misp: u64,
    pub btb_evictions: u64,
    pub rerandomizations: u64,
    /// 0 when the counter is disabled.
    pub misp_threshold: u64,
    pub evict_threshold: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StbpuAttackResult {
    pub success: bool,
    pub score: f64,
    pub misp_triggered: u64,
    pub evict_triggered: u64,
    pub rerandomizations: u64,
    pub wall_trials: u64,
    pub victim_misp: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> StbpuStatus {
    match e {
        Error::TraceParse { .. } | Error::Netlist(_) | Error::NetlistLayer { .. } => StbpuStatus::Parse,
        Error::Io(_) => StbpuStatus::Io,
        Error::Config(_)
        | Error::UnknownScenario(_)
        | Error::InvalidParams(_)
        | Error::InvalidScenario(_)
        | Error::Probability(_)
        | Error::DifficultyFactor(_) => StbpuStatus::InvalidArgument,
        _ => StbpuStatus::Failed,
    }
}

struct Fail(StbpuStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any failure and turns panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StbpuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            StbpuStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            StbpuStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(StbpuStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(StbpuStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(StbpuStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(StbpuStatus::NullPointer, format!("{what} is NULL")))
}

fn geom(sets: u64, ways: u32, tag_bits: u32, offset_bits: u32) -> Result<StructGeom, Fail> {
    if sets == 0 || ways == 0 {
        return Err(Fail(StbpuStatus::InvalidArgument, "sets and ways must be positive".into()));
    }
    Ok(StructGeom::new(sets, ways, tag_bits, offset_bits, 32))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stbpu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `stbpu_*` call on the same thread.
#[no_mangle]
pub extern "C" fn stbpu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// New configuration for `model` (e.g. "stbpu"), full size or the
/// desk-scale preset.
///
/// # Safety
/// `model` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_config_new(model: *const c_char, scaled: bool, out_cfg: *mut *mut StbpuConfig) -> StbpuStatus {
    guard(|| {
        let slot = out(out_cfg, "out")?;
        let m: ModelKind = str_arg(model, "model")?.parse()?;
        let c = if scaled { PredictorConfig::scaled(m) } else { PredictorConfig::for_model(m) };
        *slot = Box::into_raw(Box::new(StbpuConfig(c)));
        Ok(())
    })
}

/// Sets one field, e.g. `btb_ways` = "4". The result must still validate.
///
/// # Safety
/// `cfg` must come from `stbpu_config_new`; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stbpu_config_set(cfg: *mut StbpuConfig, key: *const c_char, value: *const c_char) -> StbpuStatus {
    guard(|| {
        let c = out(cfg, "cfg")?;
        let mut next = c.0;
        next.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        next.validate()?;
        c.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from `stbpu_config_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn stbpu_config_free(cfg: *mut StbpuConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Parses trace text in the line format written by `stbpu synth`.
///
/// # Safety
/// `text` must be NUL-terminated; `out_trace` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_trace_parse(text: *const c_char, out_trace: *mut *mut StbpuTrace) -> StbpuStatus {
    guard(|| {
        let slot = out(out_trace, "out")?;
        let t = parse_trace(str_arg(text, "text")?)?;
        *slot = Box::into_raw(Box::new(StbpuTrace(t)));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out_trace` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_trace_load(path: *const c_char, out_trace: *mut *mut StbpuTrace) -> StbpuStatus {
    guard(|| {
        let slot = out(out_trace, "out")?;
        let p = str_arg(path, "path")?;
        let text = std::fs::read_to_string(p).map_err(|e| Fail(StbpuStatus::Io, format!("{p}: {e}")))?;
        *slot = Box::into_raw(Box::new(StbpuTrace(parse_trace(&text)?)));
        Ok(())
    })
}

/// Synthetic trace: `scenario` is one of loop, alternating,
/// context_switch_heavy, gadget_victim, smt_pair.
///
/// # Safety
/// `scenario` must be NUL-terminated; `out_trace` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_trace_synth(
    scenario: *const c_char,
    total: usize,
    seed: u64,
    out_trace: *mut *mut StbpuTrace,
) -> StbpuStatus {
    guard(|| {
        let slot = out(out_trace, "out")?;
        let sc: Scenario = str_arg(scenario, "scenario")?.parse()?;
        let t = synth_trace(sc, &SynthParams { total, ..SynthParams::default() }, seed)?;
        *slot = Box::into_raw(Box::new(StbpuTrace(t)));
        Ok(())
    })
}

/// Number of records, 0 for NULL.
///
/// # Safety
/// `trace` must come from a `stbpu_trace_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn stbpu_trace_len(trace: *const StbpuTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `trace` must come from a `stbpu_trace_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn stbpu_trace_free(trace: *mut StbpuTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Re-randomization thresholds Γ = ceil(r·C) for `cfg`.
///
/// # Safety
/// `cfg` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_thresholds(
    cfg: *const StbpuConfig,
    r: f64,
    misp_threshold: *mut u64,
    evict_threshold: *mut u64,
) -> StbpuStatus {
    guard(|| {
        let c = handle(cfg, "cfg")?;
        let (m, e) = (out(misp_threshold, "misp_threshold")?, out(evict_threshold, "evict_threshold")?);
        let t = thresholds_for(&c.0, r)?;
        *m = t.misp_threshold.unwrap_or(0);
        *e = t.evict_threshold.unwrap_or(0);
        Ok(())
    })
}

/// Simulates `trace` on `cfg`. Token models derive thresholds from `r`;
/// `r <= 0` disables re-randomization. Other models ignore `r`.
///
/// # Safety
/// Handles must be live; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_simulate(
    cfg: *const StbpuConfig,
    trace: *const StbpuTrace,
    r: f64,
    seed: u64,
    out_report: *mut *mut StbpuReport,
) -> StbpuStatus {
    guard(|| {
        let c = handle(cfg, "cfg")?;
        let t = handle(trace, "trace")?;
        let slot = out(out_report, "out")?;
        let th = if c.0.model.uses_tokens() && r > 0.0 { thresholds_for(&c.0, r)? } else { ThresholdConfig::disabled() };
        *slot = Box::into_raw(Box::new(StbpuReport(simulate(&t.0, c.0, th, seed)?)));
        Ok(())
    })
}

/// # Safety
/// `report` must be live; `out_summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_report_summary(report: *const StbpuReport, out_summary: *mut StbpuSummary) -> StbpuStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_summary, "out")? = StbpuSummary {
            branches: r.tally.branches,
            direction_accuracy: r.direction_accuracy,
            target_accuracy: r.target_accuracy,
            oae: r.oae,
            direction_misp: r.events.direction_misp,
            target_misp: r.events.target_misp,
            btb_evictions: r.events.btb_eviction,
            rerandomizations: r.rerandomizations,
            misp_threshold: r.thresholds.misp_threshold.unwrap_or(0),
            evict_threshold: r.thresholds.evict_threshold.unwrap_or(0),
        };
        Ok(())
    })
}

/// CSV (header plus one row). Release with `stbpu_string_free`; NULL on
/// a NULL report.
///
/// # Safety
/// `report` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn stbpu_report_csv(report: *const StbpuReport) -> *mut c_char {
    match report.as_ref() {
        Some(r) => CString::new(report_csv(&r.0)).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `report` must come from `stbpu_simulate` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn stbpu_report_free(report: *mut StbpuReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must come from a string-returning `stbpu_*` call or be NULL.
#[no_mangle]
pub unsafe extern "C" fn stbpu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// P(A ⇒ V) = 1 / (I · 2^(T+O)).
#[no_mangle]
pub extern "C" fn stbpu_collision_prob(sets: u64, tag_bits: u32, offset_bits: u32) -> f64 {
    collision_prob(&StructGeom::new(sets.max(1), 1, tag_bits, offset_bits, 32))
}

/// Trials for an even chance of guessing an Ω-bit target.
#[no_mangle]
pub extern "C" fn stbpu_injection_cost(target_bits: u32) -> f64 {
    injection_cost(target_bits)
}

/// Expected mispredictions and evictions for a full reuse set.
///
/// # Safety
/// Outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_reuse_cost(
    sets: u64,
    ways: u32,
    tag_bits: u32,
    offset_bits: u32,
    out_misp: *mut f64,
    out_evict: *mut f64,
) -> StbpuStatus {
    guard(|| {
        let (m, e) = (out(out_misp, "out_misp")?, out(out_evict, "out_evict")?);
        (*m, *e) = reuse_cost(&geom(sets, ways, tag_bits, offset_bits)?);
        Ok(())
    })
}

/// Evictions to cover a fraction `p` of the sets with group elimination.
///
/// # Safety
/// `out_evict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_gem_eviction_cost(p: f64, sets: u64, ways: u32, out_evict: *mut f64) -> StbpuStatus {
    guard(|| {
        let e = out(out_evict, "out_evict")?;
        *e = gem_eviction_cost(p, &geom(sets, ways, 0, 0)?)?;
        Ok(())
    })
}

/// Runs one attack-surface cell (e.g. "btb-rb-he") on the desk-scale rig
/// with thresholds at r = 0.05.
///
/// # Safety
/// Strings must be NUL-terminated; `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stbpu_attack(
    scenario: *const c_char,
    model: *const c_char,
    seed: u64,
    out_result: *mut StbpuAttackResult,
) -> StbpuStatus {
    guard(|| {
        let slot = out(out_result, "out")?;
        let mut s: AttackScenario = str_arg(scenario, "scenario")?.parse()?;
        s.seed = seed;
        let m: ModelKind = str_arg(model, "model")?.parse()?;
        let o = run_scenario(&s, m)?;
        *slot = StbpuAttackResult {
            success: o.success,
            score: o.score,
            misp_triggered: o.misp_triggered,
            evict_triggered: o.evict_triggered,
            rerandomizations: o.rerandomizations_observed,
            wall_trials: o.wall_trials,
            victim_misp: o.victim_misp,
        };
        Ok(())
    })
}
