//! C interface to the fogline core.
//!
//! Every call returns a [`FoglineStatus`]; on failure the message is kept
//! per thread and read with [`fogline_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`fogline_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::ptr;

use fogline::apps::AppTag;
use fogline::bench::{self, ExperimentPlan, LayoutKind};
use fogline::cluster;
use fogline::framework::FrameworkError;
use fogline::runtime::{Mode, Pattern, RuntimeError, SimConfig, SimRuntime, TopologySpec};
use fogline::simnet::LatencyMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoglineStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    BootFailure = 5,
    Timeout = 6,
    Unreachable = 7,
    Panic = 99,
}

/// A simulated deployment.
pub struct FoglineSim {
    rt: SimRuntime,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FoglineSummary {
    pub n: usize,
    pub failures: usize,
    pub mean_ms: f64,
    pub ci95_low_ms: f64,
    pub ci95_high_ms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FoglineStatus, String);

fn fail(status: FoglineStatus, msg: impl ToString) -> Failure {
    Failure(status, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FoglineStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FoglineStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FoglineStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid nul-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(FoglineStatus::NullPointer, format!("{what} is null")));
    }
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| fail(FoglineStatus::InvalidUtf8, format!("{what} is not utf-8")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, Failure> {
    s.parse().map_err(|_| fail(FoglineStatus::InvalidArgument, format!("unknown {what} `{s}`")))
}

fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| fail(FoglineStatus::InvalidArgument, e))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn runtime_failure(e: RuntimeError) -> Failure {
    let status = match &e {
        RuntimeError::Framework(FrameworkError::Timeout(_)) => FoglineStatus::Timeout,
        RuntimeError::Framework(FrameworkError::MasterUnreachable) => FoglineStatus::Unreachable,
        RuntimeError::BootFailure(_) => FoglineStatus::BootFailure,
        _ => FoglineStatus::InvalidArgument,
    };
    fail(status, e)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next fogline call on the same thread.
#[no_mangle]
pub extern "C" fn fogline_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fogline_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Boots a simulated deployment under the default latency matrix.
/// `mode` is "orchestrated" or "native", `pattern` one of "host-network",
/// "proxy-server", "env-variable", `layout` "hybrid" or "cloud".
///
/// # Safety
/// String arguments are valid nul-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fogline_sim_boot(
    mode: *const c_char,
    pattern: *const c_char,
    layout: *const c_char,
    seed: u64,
    out: *mut *mut FoglineSim,
) -> FoglineStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FoglineStatus::NullPointer, "out is null"));
        }
        let mode: Mode = parse(unsafe { text(mode, "mode") }?, "mode")?;
        let pattern: Pattern = parse(unsafe { text(pattern, "pattern") }?, "pattern")?;
        let layout: LayoutKind = parse(unsafe { text(layout, "layout") }?, "layout")?;
        let mut spec = TopologySpec::new(mode, layout.layout()).with_pattern(pattern);
        if pattern == Pattern::EnvVariable {
            spec = spec.reconciled();
        }
        let rt = SimRuntime::boot(spec, SimConfig::new(seed, LatencyMatrix::default())).map_err(runtime_failure)?;
        unsafe { *out = Box::into_raw(Box::new(FoglineSim { rt })) };
        Ok(())
    })
}

/// Runs one request of `app` with a JSON `input`. On success the response
/// time is stored in `response_ms` and the JSON result (or `{"error": ..}`
/// when the application failed) in `result_json`.
///
/// # Safety
/// `sim` comes from [`fogline_sim_boot`]; strings are nul-terminated; out
/// pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn fogline_sim_submit(
    sim: *mut FoglineSim,
    app: *const c_char,
    input_json: *const c_char,
    deadline_ms: f64,
    response_ms: *mut f64,
    result_json: *mut *mut c_char,
) -> FoglineStatus {
    guard(|| {
        if sim.is_null() || response_ms.is_null() || result_json.is_null() {
            return Err(fail(FoglineStatus::NullPointer, "null handle or out pointer"));
        }
        let sim = unsafe { &mut *sim };
        let app: AppTag = parse(unsafe { text(app, "app") }?, "app")?;
        let input = serde_json::from_str(unsafe { text(input_json, "input") }?).map_err(|e| fail(FoglineStatus::ParseError, e))?;
        let done = sim.rt.submit(app.as_str(), input, deadline_ms).map_err(runtime_failure)?;
        let body = match done.output {
            Ok(v) => v,
            Err(e) => serde_json::json!({ "error": e }),
        };
        unsafe { *response_ms = done.response_ms };
        give_string(body.to_string(), result_json)
    })
}

/// Simulated time of the deployment, in milliseconds.
///
/// # Safety
/// `sim` is null or comes from [`fogline_sim_boot`].
#[no_mangle]
pub unsafe extern "C" fn fogline_sim_now_ms(sim: *const FoglineSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    unsafe { &*sim }.rt.now_ms()
}

/// # Safety
/// `sim` is null or comes from [`fogline_sim_boot`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn fogline_sim_free(sim: *mut FoglineSim) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Runs a benchmark under the default matrix and fills `out`.
///
/// # Safety
/// Strings are nul-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fogline_bench_run(
    app: *const c_char,
    mode: *const c_char,
    layout: *const c_char,
    samples: usize,
    seed: u64,
    out: *mut FoglineSummary,
) -> FoglineStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FoglineStatus::NullPointer, "out is null"));
        }
        let app: AppTag = parse(unsafe { text(app, "app") }?, "app")?;
        let mode: Mode = parse(unsafe { text(mode, "mode") }?, "mode")?;
        let layout: LayoutKind = parse(unsafe { text(layout, "layout") }?, "layout")?;
        let plan = ExperimentPlan::new(app, mode, layout, seed).with_samples(samples);
        let s = bench::run_experiment(&plan)
            .map_err(|e| {
                let status = match e {
                    bench::BenchError::BootFailure(_) => FoglineStatus::BootFailure,
                    _ => FoglineStatus::InvalidArgument,
                };
                fail(status, e)
            })?
            .summary;
        unsafe {
            *out = FoglineSummary { n: s.n, failures: s.failures, mean_ms: s.mean_ms, ci95_low_ms: s.ci95_low_ms, ci95_high_ms: s.ci95_high_ms }
        };
        Ok(())
    })
}

/// Parses a Deployment document and returns the normalized spec as JSON.
///
/// # Safety
/// `yaml` is nul-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn fogline_parse_deployment(yaml: *const c_char, out_json: *mut *mut c_char) -> FoglineStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(fail(FoglineStatus::NullPointer, "out is null"));
        }
        let spec = cluster::parse_deployment(unsafe { text(yaml, "document") }?).map_err(|e| fail(FoglineStatus::ParseError, e))?;
        let json = serde_json::to_string(&spec).map_err(|e| fail(FoglineStatus::ParseError, e))?;
        give_string(json, out_json)
    })
}
