//! C interface to the wind-clearing engine.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns a
//! [`WcStatus`]; on failure [`wc_last_error`] describes the cause on the
//! calling thread. Matrices are copied out row-major, `[slot][column]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use wind_clearing::bundle;
use wind_clearing::clearing::{clear, ClearingConfig, ClearingError, DispatchSolution, Mode, SolveStatus};
use wind_clearing::grid::{validate_case, NetworkCase};
use wind_clearing::io::{self, IoError};
use wind_clearing::risk::{PriceSchedule, RiskConfig};
use wind_clearing::scenarios::{default_sigma, generate_scenarios, DEFAULT_SIGMA_FLOOR, DEFAULT_SIGMA_FRACTION};
use wind_clearing::SlotMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Invalid = 5,
    Solver = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcMode {
    Central = 0,
    Admm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcSolveStatus {
    Optimal = 0,
    MaxIter = 1,
    Inaccurate = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcClearOptions {
    pub mode: WcMode,
    pub n_samples: usize,
    pub seed: u64,
    pub beta: f64,
    pub mu: f64,
    pub rho: f64,
    pub eps_pri: f64,
    pub max_iter: usize,
}

/// Which matrix of a solution to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcField {
    /// `[slot][generator]`, MW.
    Generation = 0,
    /// `[slot][farm]`, MW.
    Wind = 1,
    /// `[slot][aggregator]`, MW.
    Aggregator = 2,
    /// `[slot][bus]`, $/MWh.
    Lmp = 3,
    /// `[slot][aggregator]`, $/MWh.
    Lambda = 4,
}

/// Case, prices and forecast needed to clear.
pub struct WcMarket {
    case: NetworkCase,
    prices: PriceSchedule,
    forecast: SlotMatrix,
    sigma: SlotMatrix,
}

pub struct WcSolution {
    solution: DispatchSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: WcStatus, msg: impl Into<String>) -> WcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> WcStatus) -> WcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(WcStatus::Panic, "internal panic"),
    }
}

fn io_status(e: IoError) -> WcStatus {
    let status = match e {
        IoError::Io { .. } => WcStatus::Io,
        IoError::Parse { .. } => WcStatus::Parse,
        IoError::DigestMismatch { .. } => WcStatus::Invalid,
    };
    fail(status, e.to_string())
}

fn clearing_status(e: ClearingError) -> WcStatus {
    let status = match e {
        ClearingError::Solver { .. } | ClearingError::Subproblem { .. } | ClearingError::Qp(_) => WcStatus::Solver,
        _ => WcStatus::Invalid,
    };
    fail(status, e.to_string())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, WcStatus> {
    if p.is_null() {
        return Err(fail(WcStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(WcStatus::InvalidUtf8, "path is not UTF-8"))
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn wc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn wc_clear_options_default() -> WcClearOptions {
    let d = ClearingConfig::default();
    WcClearOptions {
        mode: WcMode::Central,
        n_samples: 200,
        seed: bundle::DEFAULT_SEED,
        beta: d.risk.beta,
        mu: d.risk.mu,
        rho: d.rho,
        eps_pri: d.eps_pri,
        max_iter: d.max_admm_iter,
    }
}

fn market_out(out: *mut *mut WcMarket, m: WcMarket) -> WcStatus {
    unsafe { *out = Box::into_raw(Box::new(m)) };
    WcStatus::Ok
}

/// The bundled six-bus analog with PHEV users drawn from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn wc_market_bundle(seed: u64, out: *mut *mut WcMarket) -> WcStatus {
    guard(|| {
        if out.is_null() {
            return fail(WcStatus::NullPointer, "out is null");
        }
        let forecast = bundle::wecc6_forecast();
        market_out(
            out,
            WcMarket {
                case: bundle::wecc6_case(seed),
                prices: bundle::wecc6_prices(),
                sigma: default_sigma(&forecast, DEFAULT_SIGMA_FRACTION, DEFAULT_SIGMA_FLOOR),
                forecast,
            },
        )
    })
}

/// Loads case, price and forecast JSON files.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wc_market_load(
    case_path: *const c_char,
    prices_path: *const c_char,
    forecast_path: *const c_char,
    out: *mut *mut WcMarket,
) -> WcStatus {
    guard(|| {
        if out.is_null() {
            return fail(WcStatus::NullPointer, "out is null");
        }
        let paths = (path_arg(case_path), path_arg(prices_path), path_arg(forecast_path));
        let (case_p, prices_p, forecast_p) = match paths {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let case = match io::load_case(case_p) {
            Ok(c) => c,
            Err(e) => return io_status(e),
        };
        let prices = match io::load_prices(prices_p) {
            Ok(p) => p,
            Err(e) => return io_status(e),
        };
        let f = match io::load_forecast(forecast_p) {
            Ok(f) => f,
            Err(e) => return io_status(e),
        };
        let sigma = f
            .sigma
            .unwrap_or_else(|| default_sigma(&f.forecast, DEFAULT_SIGMA_FRACTION, DEFAULT_SIGMA_FLOOR));
        market_out(
            out,
            WcMarket {
                case,
                prices,
                forecast: f.forecast,
                sigma,
            },
        )
    })
}

/// # Safety
/// `market` must come from a `wc_market_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn wc_market_free(market: *mut WcMarket) {
    if !market.is_null() {
        drop(Box::from_raw(market));
    }
}

/// Writes the number of case violations to `count`; `WC_STATUS_INVALID` when
/// non-zero, with the first violation as the error message.
///
/// # Safety
/// `market` must be a live handle; `count` may be null.
#[no_mangle]
pub unsafe extern "C" fn wc_market_validate(market: *const WcMarket, count: *mut usize) -> WcStatus {
    guard(|| {
        let Some(m) = market.as_ref() else {
            return fail(WcStatus::NullPointer, "market is null");
        };
        let v = validate_case(&m.case);
        if !count.is_null() {
            *count = v.len();
        }
        match v.first() {
            None => WcStatus::Ok,
            Some(first) => fail(WcStatus::Invalid, format!("{} violation(s); first: {first}", v.len())),
        }
    })
}

/// Draws `n_samples` scenarios from the market's forecast and clears.
///
/// # Safety
/// `market` must be a live handle, `options` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wc_clear(
    market: *const WcMarket,
    options: *const WcClearOptions,
    out: *mut *mut WcSolution,
) -> WcStatus {
    guard(|| {
        let Some(m) = market.as_ref() else {
            return fail(WcStatus::NullPointer, "market is null");
        };
        if out.is_null() {
            return fail(WcStatus::NullPointer, "out is null");
        }
        let o = options.as_ref().copied().unwrap_or_else(|| wc_clear_options_default());
        let config = ClearingConfig {
            risk: RiskConfig { beta: o.beta, mu: o.mu },
            rho: o.rho,
            eps_pri: o.eps_pri,
            max_admm_iter: o.max_iter,
            mode: match o.mode {
                WcMode::Central => Mode::Central,
                WcMode::Admm => Mode::Admm,
            },
            ..ClearingConfig::default()
        };
        let scen = match generate_scenarios(&m.forecast, &m.sigma, o.n_samples, o.seed) {
            Ok(s) => s,
            Err(e) => return fail(WcStatus::Invalid, e.to_string()),
        };
        match clear(&m.case, &m.prices, &scen, &config) {
            Ok(solution) => {
                *out = Box::into_raw(Box::new(WcSolution { solution }));
                WcStatus::Ok
            }
            Err(e) => clearing_status(e),
        }
    })
}

/// # Safety
/// `solution` must come from `wc_clear` or be null.
#[no_mangle]
pub unsafe extern "C" fn wc_solution_free(solution: *mut WcSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Objective, generation cost and CVaR term; any output pointer may be null.
///
/// # Safety
/// `solution` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wc_solution_summary(
    solution: *const WcSolution,
    objective: *mut f64,
    generation_cost: *mut f64,
    cvar_term: *mut f64,
    status: *mut WcSolveStatus,
    iterations: *mut usize,
) -> WcStatus {
    guard(|| {
        let Some(s) = solution.as_ref() else {
            return fail(WcStatus::NullPointer, "solution is null");
        };
        let s = &s.solution;
        if let Some(p) = objective.as_mut() {
            *p = s.objective;
        }
        if let Some(p) = generation_cost.as_mut() {
            *p = s.generation_cost;
        }
        if let Some(p) = cvar_term.as_mut() {
            *p = s.cvar_term;
        }
        if let Some(p) = status.as_mut() {
            *p = match s.status {
                SolveStatus::Optimal => WcSolveStatus::Optimal,
                SolveStatus::MaxIter => WcSolveStatus::MaxIter,
                SolveStatus::Inaccurate => WcSolveStatus::Inaccurate,
            };
        }
        if let Some(p) = iterations.as_mut() {
            *p = s.iterations;
        }
        WcStatus::Ok
    })
}

fn field(s: &DispatchSolution, f: WcField) -> &SlotMatrix {
    match f {
        WcField::Generation => &s.p_g,
        WcField::Wind => &s.p_w,
        WcField::Aggregator => &s.p_dra,
        WcField::Lmp => &s.tau,
        WcField::Lambda => &s.lambda,
    }
}

/// Copies a matrix into `buf` (capacity `len` doubles). `rows` and `cols`
/// receive the shape even when the buffer is too small.
///
/// # Safety
/// `solution` must be a live handle; `buf` must hold `len` doubles or be
/// null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn wc_solution_copy(
    solution: *const WcSolution,
    which: WcField,
    buf: *mut f64,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> WcStatus {
    guard(|| {
        let Some(s) = solution.as_ref() else {
            return fail(WcStatus::NullPointer, "solution is null");
        };
        let m = field(&s.solution, which);
        let (r, c) = (m.len(), m.first().map_or(0, Vec::len));
        if let Some(p) = rows.as_mut() {
            *p = r;
        }
        if let Some(p) = cols.as_mut() {
            *p = c;
        }
        if len < r * c {
            return fail(WcStatus::BufferTooSmall, format!("need {} doubles, got {len}", r * c));
        }
        if r * c > 0 && buf.is_null() {
            return fail(WcStatus::NullPointer, "buf is null");
        }
        for (k, v) in m.iter().flatten().enumerate() {
            *buf.add(k) = *v;
        }
        WcStatus::Ok
    })
}

/// The full solution as JSON; free with `wc_string_free`.
///
/// # Safety
/// `solution` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wc_solution_json(solution: *const WcSolution, out: *mut *mut c_char) -> WcStatus {
    guard(|| {
        let Some(s) = solution.as_ref() else {
            return fail(WcStatus::NullPointer, "solution is null");
        };
        if out.is_null() {
            return fail(WcStatus::NullPointer, "out is null");
        }
        let text = serde_json::to_string(&s.solution).expect("serializable solution");
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        WcStatus::Ok
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn wc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
