//! C ABI over `regmdp`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / `run`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`RegmdpStatus`]; on failure a message is available from
//! [`regmdp_last_error_message`] on the same thread. Panics never unwind
//! into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use regmdp::bounding::BoundingFn;
use regmdp::mdp::{build_gridworld, build_random_mdp, GridWorldConfig};
use regmdp::runner::{run_experiment, ExperimentConfig};
use regmdp::soft_ops::{log_sum_exp, soft_optimal_value, RegParams};
use regmdp::solvers::{run_scheme, PsiInit, Scheme, SolverConfig};
use regmdp::{Error, RunTrace, TabularMdp};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegmdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidMdp = 3,
    Diverged = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegmdpScheme {
    MdviExplicit = 0,
    Mvi = 1,
    Bal = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegmdpBoundingKind {
    Identity = 0,
    Zero = 1,
    /// `clamp(x / p0, p1, p2)`
    Clip = 2,
    /// `tanh(x / p0)`
    Tanh = 3,
    Sign = 4,
    /// Time-dependent clip with `T1 = p0`, `T2 = p1`.
    TdClip = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RegmdpBounding {
    pub kind: RegmdpBoundingKind,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Parameters of [`regmdp_run`]. `init_range` is the half-width of the
/// uniform initial table; negative selects `V^τ_max`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RegmdpRunParams {
    pub scheme: RegmdpScheme,
    pub alpha: f64,
    pub kappa: f64,
    pub f: RegmdpBounding,
    pub g: RegmdpBounding,
    pub iterations: usize,
    pub seed: u64,
    pub init_range: f64,
    pub allow_invalid_bounding: bool,
}

/// Opaque MDP handle.
pub struct RegmdpMdp(TabularMdp);

/// Opaque run trace handle.
pub struct RegmdpTrace(RunTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> RegmdpStatus {
    match err {
        Error::InvalidMdp(_)
        | Error::NotStochastic { .. }
        | Error::NegativeProbability { .. }
        | Error::RewardOutOfRange { .. }
        | Error::DiscountRange(_) => RegmdpStatus::InvalidMdp,
        Error::Diverged { .. } | Error::InfiniteKl(_) | Error::NonFinite(_) => RegmdpStatus::Diverged,
        Error::Config(_) => RegmdpStatus::Config,
        Error::Io(_) => RegmdpStatus::Io,
        _ => RegmdpStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (RegmdpStatus, String)>) -> RegmdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RegmdpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RegmdpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RegmdpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RegmdpStatus, String) {
    (RegmdpStatus::NullPointer, format!("{} is null", what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RegmdpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RegmdpStatus::InvalidArgument, format!("{} is not UTF-8", what)))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), (RegmdpStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), (RegmdpStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err((
            RegmdpStatus::InvalidArgument,
            format!("buffer holds {} values, {} needed", len, values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn regmdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds the grid world from a JSON config; null selects the defaults.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_gridworld_new(config_json: *const c_char, out: *mut *mut RegmdpMdp) -> RegmdpStatus {
    guard(|| {
        let cfg = if config_json.is_null() {
            GridWorldConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?)
                .map_err(|e| (RegmdpStatus::Config, e.to_string()))?
        };
        write_out(out, RegmdpMdp(build_gridworld(&cfg).map_err(lib_err)?))
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_random_mdp_new(
    num_states: usize,
    num_actions: usize,
    seed: u64,
    reward_scale: f64,
    discount: f64,
    out: *mut *mut RegmdpMdp,
) -> RegmdpStatus {
    guard(|| {
        let mdp = build_random_mdp(num_states, num_actions, seed, reward_scale, discount).map_err(lib_err)?;
        write_out(out, RegmdpMdp(mdp))
    })
}

/// Parses the shape-tagged JSON layout.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_mdp_from_json(json: *const c_char, out: *mut *mut RegmdpMdp) -> RegmdpStatus {
    guard(|| {
        let mdp = TabularMdp::from_json(read_str(json, "json")?).map_err(lib_err)?;
        write_out(out, RegmdpMdp(mdp))
    })
}

/// # Safety
/// `mdp` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn regmdp_mdp_free(mdp: *mut RegmdpMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Zero for a null handle.
///
/// # Safety
/// `mdp` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn regmdp_mdp_num_states(mdp: *const RegmdpMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.num_states())
}

/// Zero for a null handle.
///
/// # Safety
/// `mdp` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn regmdp_mdp_num_actions(mdp: *const RegmdpMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.num_actions())
}

/// Writes `V*_temperature` into `out[0..num_states]`.
///
/// # Safety
/// `mdp` is a live handle; `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn regmdp_soft_optimal_value(
    mdp: *const RegmdpMdp,
    temperature: f64,
    tol: f64,
    out: *mut f64,
    len: usize,
) -> RegmdpStatus {
    guard(|| {
        let mdp = mdp.as_ref().ok_or_else(|| null("mdp"))?;
        let v = soft_optimal_value(&mdp.0, temperature, tol).map_err(lib_err)?;
        fill(out, len, v.as_slice())
    })
}

/// `α log Σ exp(row/α)`; `α = 0` gives the maximum.
///
/// # Safety
/// `row` points to `len` readable doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_log_sum_exp(row: *const f64, len: usize, alpha: f64, out: *mut f64) -> RegmdpStatus {
    guard(|| {
        if row.is_null() {
            return Err(null("row"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let slice = std::slice::from_raw_parts(row, len);
        *out = log_sum_exp(slice, alpha).map_err(lib_err)?;
        Ok(())
    })
}

fn bounding(b: &RegmdpBounding) -> BoundingFn {
    match b.kind {
        RegmdpBoundingKind::Identity => BoundingFn::Identity,
        RegmdpBoundingKind::Zero => BoundingFn::Zero,
        RegmdpBoundingKind::Clip => BoundingFn::Clip {
            scale: b.p0,
            lo: b.p1,
            hi: b.p2,
        },
        RegmdpBoundingKind::Tanh => BoundingFn::Tanh { scale: b.p0 },
        RegmdpBoundingKind::Sign => BoundingFn::Sign,
        RegmdpBoundingKind::TdClip => BoundingFn::TimeDependentClip { t1: b.p0, t2: b.p1 },
    }
}

/// Runs one scheme. A divergent run still yields a trace; check
/// [`regmdp_trace_diverged`].
///
/// # Safety
/// `mdp` is a live handle; `params` is readable; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_run(
    mdp: *const RegmdpMdp,
    params: *const RegmdpRunParams,
    out: *mut *mut RegmdpTrace,
) -> RegmdpStatus {
    guard(|| {
        let mdp = mdp.as_ref().ok_or_else(|| null("mdp"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let reg = RegParams::new(p.alpha, p.kappa).map_err(lib_err)?;
        let scheme = match p.scheme {
            RegmdpScheme::MdviExplicit => Scheme::MdviExplicit,
            RegmdpScheme::Mvi => Scheme::Mvi,
            RegmdpScheme::Bal => Scheme::Bal,
        };
        let init = if p.init_range < 0.0 {
            PsiInit::UniformVmax
        } else {
            PsiInit::UniformIn { m: p.init_range }
        };
        let mut cfg = SolverConfig::bal(reg, bounding(&p.f), bounding(&p.g))
            .with_iterations(p.iterations)
            .with_seed(p.seed)
            .with_init(init);
        cfg.scheme = scheme;
        cfg.allow_invalid_bounding = p.allow_invalid_bounding;
        cfg.keep_tables = false;
        let trace = run_scheme(&mdp.0, &cfg).map_err(lib_err)?;
        write_out(out, RegmdpTrace(trace))
    })
}

/// # Safety
/// `trace` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn regmdp_trace_free(trace: *mut RegmdpTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of records (iterations run plus one); zero for a null handle.
///
/// # Safety
/// `trace` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn regmdp_trace_len(trace: *const RegmdpTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// True if the run diverged; the divergent iteration goes to `iteration`
/// when it is non-null.
///
/// # Safety
/// `trace` is null or a live handle; `iteration` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_trace_diverged(trace: *const RegmdpTrace, iteration: *mut usize) -> bool {
    match trace.as_ref().and_then(|t| t.0.diverged.as_ref()) {
        Some(d) => {
            if !iteration.is_null() {
                *iteration = d.iteration;
            }
            true
        }
        None => false,
    }
}

/// Writes `V_k` of record `record` into `out[0..num_states]`.
///
/// # Safety
/// `trace` is a live handle; `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn regmdp_trace_values(
    trace: *const RegmdpTrace,
    record: usize,
    out: *mut f64,
    len: usize,
) -> RegmdpStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let r = t.0.records.get(record).ok_or_else(|| {
            (
                RegmdpStatus::InvalidArgument,
                format!("record {} out of range (len {})", record, t.0.len()),
            )
        })?;
        fill(out, len, r.v.as_slice())
    })
}

/// Writes the final `Ψ` row-major (`num_states × num_actions`).
///
/// # Safety
/// `trace` is a live handle; `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn regmdp_trace_final_psi(trace: *const RegmdpTrace, out: *mut f64, len: usize) -> RegmdpStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        let psi = t.0.final_psi().ok_or_else(|| (RegmdpStatus::InvalidArgument, "no final table".to_string()))?;
        fill(out, len, psi.as_slice())
    })
}

/// Runs an experiment config (JSON text) into `out_dir`. `jobs = 0` uses
/// every core. `exit_code` receives 0, or 2 if any run diverged.
///
/// # Safety
/// Both strings are NUL-terminated; `exit_code` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn regmdp_run_experiment_json(
    config_json: *const c_char,
    out_dir: *const c_char,
    jobs: usize,
    exit_code: *mut i32,
) -> RegmdpStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(read_str(config_json, "config_json")?).map_err(lib_err)?;
        let dir = read_str(out_dir, "out_dir")?;
        let outcome = run_experiment(&cfg, Path::new(dir), (jobs > 0).then_some(jobs)).map_err(lib_err)?;
        if !exit_code.is_null() {
            *exit_code = outcome.exit_code();
        }
        Ok(())
    })
}
