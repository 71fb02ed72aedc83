//! C ABI for the hypercrowd simulator.
//!
//! Every function returns an [`HcStatus`]; on failure a message is kept per
//! thread and can be read with [`hc_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hypercrowd::assignment::{solve_max_weight_assignment, WeightMatrix};
use hypercrowd::metrics::MetricRow;
use hypercrowd::scenario::ScenarioConfig;
use hypercrowd::sim::{Simulation, StrategyKind};
use hypercrowd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Protocol = 4,
    Infeasible = 5,
    OutOfRange = 6,
    Runtime = 7,
    Panic = 8,
}

/// Opaque simulation handle.
pub struct HcSimulation {
    sim: Simulation,
    mcsps: usize,
    last_mcsp_utility: Vec<f64>,
}

/// Metrics of one step. `perception_error` is NaN when the strategy keeps no perceptions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcStepMetrics {
    pub t: u64,
    pub social_welfare: f64,
    pub mu_utility_mean: f64,
    pub completion_ratio: f64,
    pub collisions: u64,
    pub energy: f64,
    pub perception_error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> HcStatus {
    match e {
        Error::Config { .. } | Error::InvalidProfile(_) | Error::Json(_) => HcStatus::Config,
        Error::Protocol { .. } | Error::ContractViolation(_) => HcStatus::Protocol,
        Error::Infeasible(_) => HcStatus::Infeasible,
        Error::MalformedAssignment(_) => HcStatus::OutOfRange,
        _ => HcStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HcStatus>) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside hypercrowd");
            HcStatus::Panic
        }
    }
}

fn fail(e: Error) -> HcStatus {
    set_error(e.to_string());
    status_of(&e)
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, HcStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(HcStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        HcStatus::InvalidUtf8
    })
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), HcStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        Err(HcStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a simulation. `config_json` is layered over the named profile
/// (`"desk"` or `"paper"`, null means desk) and may itself be null.
/// `strategy` is one of copt, mgs, prism, pacmab, cmab, random.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_new(
    profile: *const c_char,
    config_json: *const c_char,
    strategy: *const c_char,
    seed: u64,
    out: *mut *mut HcSimulation,
) -> HcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let profile = if profile.is_null() { "desk" } else { text(profile, "profile")? };
        let mut cfg = ScenarioConfig::profile(profile).map_err(fail)?;
        if !config_json.is_null() {
            cfg = cfg.layered(text(config_json, "config_json")?).map_err(fail)?;
        }
        let kind: StrategyKind = text(strategy, "strategy")?.parse().map_err(fail)?;
        let sim = Simulation::new(&cfg, kind, seed).map_err(fail)?;
        let handle = HcSimulation {
            sim,
            mcsps: cfg.mcsps,
            last_mcsp_utility: vec![0.0; cfg.mcsps],
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`hc_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_free(sim: *mut HcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

fn metrics_of(row: &MetricRow, collisions: usize) -> HcStepMetrics {
    HcStepMetrics {
        t: row.t as u64,
        social_welfare: row.social_welfare,
        mu_utility_mean: row.mu_utility_mean,
        completion_ratio: row.completion_ratio,
        collisions: collisions as u64,
        energy: row.energy,
        perception_error: row.perception_error.unwrap_or(f64::NAN),
    }
}

/// Advance `steps` steps, writing one record per step into `out` (which
/// may be null when the caller only wants to advance).
///
/// # Safety
/// `sim` must be a live handle; `out` must be null or hold `steps` records.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_run(sim: *mut HcSimulation, steps: usize, out: *mut HcStepMetrics) -> HcStatus {
    guard(|| {
        non_null(sim, "sim")?;
        let h = &mut *sim;
        let mus = h.sim.scenario.config.mus;
        for n in 0..steps {
            let rec = h.sim.step().map_err(fail)?;
            let row = MetricRow::from_record(&rec, mus);
            h.last_mcsp_utility.clone_from(&row.mcsp_utility);
            if !out.is_null() {
                *out.add(n) = metrics_of(&row, rec.collisions);
            }
        }
        Ok(())
    })
}

/// Advance one step.
///
/// # Safety
/// Same as [`hc_simulation_run`] with `steps = 1`.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_step(sim: *mut HcSimulation, out: *mut HcStepMetrics) -> HcStatus {
    hc_simulation_run(sim, 1, out)
}

/// Steps taken so far, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_time(sim: *const HcSimulation) -> u64 {
    if sim.is_null() {
        0
    } else {
        (*sim).sim.t() as u64
    }
}

/// Number of MCSPs in the simulated market.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_mcsps(sim: *const HcSimulation) -> usize {
    if sim.is_null() {
        0
    } else {
        (*sim).mcsps
    }
}

/// Realized utility of MCSP `mcsp` in the last step.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hc_simulation_mcsp_utility(sim: *const HcSimulation, mcsp: usize, out: *mut f64) -> HcStatus {
    guard(|| {
        non_null(sim, "sim")?;
        non_null(out, "out")?;
        let h = &*sim;
        match h.last_mcsp_utility.get(mcsp) {
            Some(&u) => {
                *out = u;
                Ok(())
            }
            None => {
                set_error(format!("MCSP {mcsp} out of range ({} MCSPs)", h.mcsps));
                Err(HcStatus::OutOfRange)
            }
        }
    })
}

/// Maximum-weight assignment on a row-major `rows x cols` matrix. NaN or
/// negative-infinite cells are forbidden. `out_cols[r]` receives the column
/// of row `r`, or -1 when the row is left out (more rows than columns).
///
/// # Safety
/// `weights` must hold `rows * cols` values and `out_cols` `rows` slots;
/// `out_total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_solve_assignment(
    weights: *const f64,
    rows: usize,
    cols: usize,
    out_cols: *mut isize,
    out_total: *mut f64,
) -> HcStatus {
    guard(|| {
        non_null(out_total, "out_total")?;
        if rows > 0 {
            non_null(out_cols, "out_cols")?;
        }
        if rows > 0 && cols > 0 {
            non_null(weights, "weights")?;
        }
        let mut w = WeightMatrix::new(rows, cols, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let v = *weights.add(r * cols + c);
                if v.is_nan() || v == f64::NEG_INFINITY {
                    w.forbid(r, c);
                } else if v.is_finite() {
                    w.set(r, c, v);
                } else {
                    set_error(format!("weight ({r}, {c}) is +inf"));
                    return Err(HcStatus::OutOfRange);
                }
            }
        }
        let solved = solve_max_weight_assignment(&w).map_err(fail)?;
        for r in 0..rows {
            *out_cols.add(r) = solved.col_of(r).map_or(-1, |c| c as isize);
        }
        *out_total = solved.total_value;
        Ok(())
    })
}
