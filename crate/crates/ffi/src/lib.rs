//! C ABI over `tradenet`.
//!
//! Markets are opaque `TnMarket` handles created from scenario JSON and
//! released with `tn_market_free`. Every call returns a `TnStatus`; on failure
//! `tn_last_error` gives a message for the calling thread. Strings returned
//! through out-pointers are owned by the caller and freed with `tn_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tradenet::rational::format_rational;
use tradenet::report::{self, exit, ReportError};
use tradenet::runner::{execute, plan, RunError, RunRequest};
use tradenet::scenario::Scenario;
use tradenet::welfare::market_value;

/// Result codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TnStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Scenario or argument failed validation.
    Invalid = 2,
    /// The offer dynamics hit its round cap; outputs are still written.
    CapHit = 3,
    /// A result failed its verifier.
    VerificationFailed = 4,
    /// A documented impossibility, e.g. no CE or no extension at the bound.
    Impossible = 5,
    /// A string argument was not UTF-8.
    InvalidUtf8 = 6,
    /// Unknown analysis name.
    UnknownAnalysis = 7,
    /// Internal panic caught at the boundary.
    Panic = 8,
}

/// Opaque market handle.
pub struct TnMarket {
    scenario: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(code: i32) -> TnStatus {
    match code {
        exit::OK => TnStatus::Ok,
        exit::CAP_HIT => TnStatus::CapHit,
        exit::VERIFICATION => TnStatus::VerificationFailed,
        exit::IMPOSSIBLE => TnStatus::Impossible,
        _ => TnStatus::Invalid,
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure(status_of(e.exit_code()), e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure(status_of(e.code), e.message)
    }
}

struct Failure(TnStatus, String);

/// Runs `f`, mapping failures and panics to a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<TnStatus, Failure>) -> TnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(TnStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TnStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn market<'a>(m: *const TnMarket) -> Result<&'a TnMarket, Failure> {
    m.as_ref()
        .ok_or_else(|| Failure(TnStatus::NullArgument, "market is null".into()))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            TnStatus::NullArgument,
            "output pointer is null".into(),
        ));
    }
    let c =
        CString::new(s).map_err(|_| Failure(TnStatus::Invalid, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses scenario JSON into a new market handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tn_market_from_json(
    json: *const c_char,
    out: *mut *mut TnMarket,
) -> TnStatus {
    guard(|| {
        let source = text(json, "json")?;
        if out.is_null() {
            return Err(Failure(
                TnStatus::NullArgument,
                "output pointer is null".into(),
            ));
        }
        let scenario =
            Scenario::parse(source).map_err(|e| Failure(TnStatus::Invalid, e.to_string()))?;
        *out = Box::into_raw(Box::new(TnMarket { scenario }));
        Ok(TnStatus::Ok)
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `m` must come from `tn_market_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tn_market_free(m: *mut TnMarket) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of agents and trades.
///
/// # Safety
/// `m` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tn_market_size(
    m: *const TnMarket,
    agents: *mut usize,
    trades: *mut usize,
) -> TnStatus {
    guard(|| {
        let mk = &market(m)?.scenario.market;
        if let Some(a) = agents.as_mut() {
            *a = mk.n();
        }
        if let Some(t) = trades.as_mut() {
            *t = mk.m();
        }
        Ok(TnStatus::Ok)
    })
}

/// Market value w(I) as an exact decimal or `num/den` string.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tn_market_value(m: *const TnMarket, out: *mut *mut c_char) -> TnStatus {
    guard(|| {
        let w = market_value(&market(m)?.scenario.market);
        put_string(out, format_rational(&w))?;
        Ok(TnStatus::Ok)
    })
}

/// Runs an analysis and writes its verified JSON to `out`.
///
/// `what` is one of `validate`, `ce`, `core`, `fairness`, `essential`,
/// `reduce`, `ne-check`, `extend-ce`. The last two take a named offer
/// `profile` and `epsilon`; the others ignore them (pass null). On a
/// documented impossibility the status is `Impossible` and `out` holds the
/// structured error JSON.
///
/// # Safety
/// `m` must be a live handle, strings NUL-terminated or null, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tn_analyze(
    m: *const TnMarket,
    what: *const c_char,
    profile: *const c_char,
    epsilon: *const c_char,
    out: *mut *mut c_char,
) -> TnStatus {
    guard(|| {
        let sc = &market(m)?.scenario;
        let mk = &sc.market;
        let what = text(what, "analysis")?;
        let profile = optional_text(profile, "profile")?;
        let epsilon = optional_text(epsilon, "epsilon")?;
        let offers_and_eps = || -> Result<_, Failure> {
            let p =
                profile.ok_or_else(|| Failure(TnStatus::Invalid, "profile is required".into()))?;
            let e =
                epsilon.ok_or_else(|| Failure(TnStatus::Invalid, "epsilon is required".into()))?;
            let offers = sc.profile(p).map_err(|e| Failure(TnStatus::Invalid, e))?;
            let eps = tradenet::rational::parse_rational(e)
                .map_err(|e| Failure(TnStatus::Invalid, e.0))?;
            Ok((offers, eps))
        };
        let result = match what {
            "validate" => {
                put_string(out, report::validate_report(mk).to_string())?;
                return Ok(TnStatus::Ok);
            }
            "ce" => report::ce_report(mk),
            "core" => report::core_report(mk, None),
            "fairness" => report::fairness_report(mk),
            "essential" => report::essential_report(mk),
            "reduce" => report::reduce_report(mk),
            "ne-check" => {
                let (o, e) = offers_and_eps()?;
                report::ne_check_report(mk, &o, &e)
            }
            "extend-ce" => {
                let (o, e) = offers_and_eps()?;
                report::extend_report(mk, &o, &e)
            }
            other => {
                return Err(Failure(
                    TnStatus::UnknownAnalysis,
                    format!("unknown analysis `{other}`"),
                ))
            }
        };
        match result {
            Ok(v) => {
                put_string(out, v.json().to_string())?;
                Ok(TnStatus::Ok)
            }
            Err(e) => {
                let status = status_of(e.exit_code());
                put_string(out, e.to_json().to_string())?;
                set_error(e.to_string());
                Ok(status)
            }
        }
    })
}

/// Runs a named run of the scenario with the given seed (ignored for
/// scripted schedules). Writes the verified terminal JSON to `terminal` and,
/// when `trace` is non-null, the JSONL trace to `trace`.
///
/// # Safety
/// `m` must be a live handle, `run` NUL-terminated, `terminal` valid;
/// `trace` may be null.
#[no_mangle]
pub unsafe extern "C" fn tn_run(
    m: *const TnMarket,
    run: *const c_char,
    seed: u64,
    terminal: *mut *mut c_char,
    trace: *mut *mut c_char,
) -> TnStatus {
    guard(|| {
        let sc = &market(m)?.scenario;
        let name = text(run, "run")?;
        let p = plan(
            sc,
            &RunRequest {
                run: Some(name.to_string()),
                seed: Some(seed),
                ..Default::default()
            },
        )?;
        let output = execute(sc, &p, seed, !trace.is_null())?;
        put_string(terminal, output.terminal.to_string())?;
        if !trace.is_null() {
            put_string(trace, output.trace)?;
        }
        Ok(status_of(output.code))
    })
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
