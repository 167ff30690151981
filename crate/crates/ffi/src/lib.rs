//! C interface to the simulator.
//!
//! Configurations and reports are opaque handles created and released
//! through this API. Every entry point returns a [`GpStatus`]; on failure
//! [`gp_last_error`] describes what went wrong on the calling thread.
//! Strings handed out by the library are released with [`gp_string_free`].
//! Panics never cross the boundary and are reported as
//! [`GpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use greenpow::analysis::fork::{fork_probability, UnawareModel};
use greenpow::config::SimConfig;
use greenpow::energy::closed_form_pow;
use greenpow::protocol::SelectionMode;
use greenpow::simnet::{run_simulation, SimReport, Summary};
use greenpow::stochastic::{inverse_cdf, MiningRate};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    SimulationFailed = 4,
    Panic = 5,
}

/// Shape of the fraction of miners still unaware of a new block.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpUnawareModel {
    Exponential = 0,
    Linear = 1,
    Step = 2,
}

/// A simulation configuration.
pub struct GpConfig {
    inner: SimConfig,
}

/// The outcome of one simulated replication.
pub struct GpReport {
    inner: SimReport,
    summary: Summary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GpStatus, String);

fn fail<T>(status: GpStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records its error message and turns panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller passes either null or a live handle from this API.
    match unsafe { p.as_ref() } {
        Some(r) => Ok(r),
        None => fail(GpStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: as for `borrow`, and the handle is not shared across threads.
    match unsafe { p.as_mut() } {
        Some(r) => Ok(r),
        None => fail(GpStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    unsafe { borrow_mut(p, "output pointer") }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(GpStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .or_else(|e| fail(GpStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn give_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|e| fail(GpStatus::InvalidArgument, e.to_string()))
}

fn validated(cfg: &SimConfig) -> Result<(), Failure> {
    cfg.validate()
        .or_else(|e| fail(GpStatus::InvalidArgument, e.to_string()))
}

/// Library version, a static string that must not be freed.
#[no_mangle]
pub extern "C" fn gp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The caller
/// owns the result and frees it with [`gp_string_free`].
#[no_mangle]
pub extern "C" fn gp_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` is null or a string returned by this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn gp_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: per the contract above it came from `CString::into_raw`.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Default configuration: 100 miners, uniform power, COUNT(5).
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn gp_config_new(out: *mut *mut GpConfig) -> GpStatus {
    guard(|| {
        let out = unsafe { out_ptr(out)? };
        *out = Box::into_raw(Box::new(GpConfig {
            inner: SimConfig::default(),
        }));
        Ok(())
    })
}

/// Parses a JSON configuration, the same format the command line reads.
///
/// # Safety
/// `json` is a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_config_from_json(json: *const c_char, out: *mut *mut GpConfig) -> GpStatus {
    guard(|| {
        let text = unsafe { read_str(json, "json")? };
        let out = unsafe { out_ptr(out)? };
        let inner = SimConfig::from_json_str(text)
            .or_else(|e| fail(GpStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(GpConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` is a live configuration and `out` a valid pointer. The string
/// written to `out` is freed with [`gp_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gp_config_to_json(cfg: *const GpConfig, out: *mut *mut c_char) -> GpStatus {
    guard(|| {
        let cfg = unsafe { borrow(cfg, "config")? };
        let out = unsafe { out_ptr(out)? };
        *out = give_string(cfg.inner.to_json_pretty())?;
        Ok(())
    })
}

/// # Safety
/// `cfg` is null or a configuration not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gp_config_free(cfg: *mut GpConfig) {
    if !cfg.is_null() {
        // SAFETY: created by `Box::into_raw` in this module.
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Sets one field and rolls it back if the result does not validate.
unsafe fn edit(cfg: *mut GpConfig, f: impl FnOnce(&mut SimConfig)) -> GpStatus {
    guard(|| {
        let cfg = unsafe { borrow_mut(cfg, "config")? };
        let mut next = cfg.inner.clone();
        f(&mut next);
        validated(&next)?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` is a live configuration.
#[no_mangle]
pub unsafe extern "C" fn gp_config_set_miners(cfg: *mut GpConfig, miners: usize) -> GpStatus {
    unsafe { edit(cfg, |c| c.miners = miners) }
}

/// Selects the first `k` runners-up.
///
/// # Safety
/// `cfg` is a live configuration.
#[no_mangle]
pub unsafe extern "C" fn gp_config_set_k(cfg: *mut GpConfig, k: usize) -> GpStatus {
    unsafe { edit(cfg, |c| c.selection = SelectionMode::Count { k }) }
}

/// Selects every miner that solves within `eta` seconds of the winner.
///
/// # Safety
/// `cfg` is a live configuration.
#[no_mangle]
pub unsafe extern "C" fn gp_config_set_eta(cfg: *mut GpConfig, eta: f64) -> GpStatus {
    unsafe { edit(cfg, |c| c.selection = SelectionMode::TimeWindow { eta }) }
}

/// # Safety
/// `cfg` is a live configuration.
#[no_mangle]
pub unsafe extern "C" fn gp_config_set_blocks(cfg: *mut GpConfig, blocks: u64) -> GpStatus {
    unsafe { edit(cfg, |c| c.block_budget = blocks) }
}

/// # Safety
/// `cfg` is a live configuration.
#[no_mangle]
pub unsafe extern "C" fn gp_config_set_seed(cfg: *mut GpConfig, seed: u64) -> GpStatus {
    unsafe { edit(cfg, |c| c.seed = seed) }
}

/// Second-round timeout in seconds; zero or a negative value disables it.
///
/// # Safety
/// `cfg` is a live configuration.
#[no_mangle]
pub unsafe extern "C" fn gp_config_set_timeout(cfg: *mut GpConfig, seconds: f64) -> GpStatus {
    unsafe { edit(cfg, |c| c.timeout = (seconds > 0.0).then_some(seconds)) }
}

/// Runs the first replication of `cfg`.
///
/// # Safety
/// `cfg` is a live configuration and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_simulate(cfg: *const GpConfig, out: *mut *mut GpReport) -> GpStatus {
    guard(|| {
        let cfg = unsafe { borrow(cfg, "config")? };
        let out = unsafe { out_ptr(out)? };
        let inner = run_simulation(&cfg.inner)
            .or_else(|e| fail(GpStatus::SimulationFailed, e.to_string()))?;
        let summary = inner.summary();
        *out = Box::into_raw(Box::new(GpReport { inner, summary }));
        Ok(())
    })
}

/// # Safety
/// `report` is null or a report not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gp_report_free(report: *mut GpReport) {
    if !report.is_null() {
        // SAFETY: created by `Box::into_raw` in `gp_simulate`.
        drop(unsafe { Box::from_raw(report) });
    }
}

unsafe fn read_report<T>(report: *const GpReport, out: *mut T, f: impl FnOnce(&GpReport) -> T) -> GpStatus {
    guard(|| {
        let r = unsafe { borrow(report, "report")? };
        *unsafe { out_ptr(out)? } = f(r);
        Ok(())
    })
}

/// Energy saved against plain mining, in percent.
///
/// # Safety
/// `report` is a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_report_saving_pct(report: *const GpReport, out: *mut f64) -> GpStatus {
    unsafe { read_report(report, out, |r| r.summary.saving_pct) }
}

/// Canonical chain length.
///
/// # Safety
/// `report` is a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_report_blocks(report: *const GpReport, out: *mut u64) -> GpStatus {
    unsafe { read_report(report, out, |r| r.summary.blocks) }
}

/// Epochs whose second block came after the timeout.
///
/// # Safety
/// `report` is a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_report_timeout_epochs(report: *const GpReport, out: *mut u64) -> GpStatus {
    unsafe { read_report(report, out, |r| r.summary.timeout_epochs) }
}

/// Fork rates at first-round and second-round heights.
///
/// # Safety
/// `report` is a live report; `first` and `second` are valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gp_report_fork_rates(
    report: *const GpReport,
    first: *mut f64,
    second: *mut f64,
) -> GpStatus {
    guard(|| {
        let r = unsafe { borrow(report, "report")? };
        *unsafe { out_ptr(first)? } = r.summary.fork_rate_first;
        *unsafe { out_ptr(second)? } = r.summary.fork_rate_second;
        Ok(())
    })
}

/// Summary statistics as JSON, freed with [`gp_string_free`].
///
/// # Safety
/// `report` is a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_report_summary_json(report: *const GpReport, out: *mut *mut c_char) -> GpStatus {
    guard(|| {
        let r = unsafe { borrow(report, "report")? };
        let out = unsafe { out_ptr(out)? };
        let text = serde_json::to_string(&r.summary)
            .or_else(|e| fail(GpStatus::SimulationFailed, e.to_string()))?;
        *out = give_string(text)?;
        Ok(())
    })
}

/// Number of epochs the run completed.
///
/// # Safety
/// `report` is a live report and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_report_epochs(report: *const GpReport, out: *mut u64) -> GpStatus {
    unsafe { read_report(report, out, |r| r.inner.epochs.len() as u64) }
}

fn rate(lambda: f64) -> Result<MiningRate, Failure> {
    MiningRate::new(lambda).or_else(|e| fail(GpStatus::InvalidArgument, e.to_string()))
}

/// Wait after which a block has been found with probability `p`.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_timeout_wait(lambda: f64, p: f64, out: *mut f64) -> GpStatus {
    guard(|| {
        let out = unsafe { out_ptr(out)? };
        *out = inverse_cdf(rate(lambda)?, p)
            .or_else(|e| fail(GpStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Probability that a block is forked, given the per-unit block
/// probability `p_b` and the time constant of the unaware fraction.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_fork_probability(
    model: GpUnawareModel,
    param: f64,
    p_b: f64,
    out: *mut f64,
) -> GpStatus {
    guard(|| {
        let out = unsafe { out_ptr(out)? };
        let m = match model {
            GpUnawareModel::Exponential => UnawareModel::Exponential { tau: param },
            GpUnawareModel::Linear => UnawareModel::Linear { t: param },
            GpUnawareModel::Step => UnawareModel::Step { t: param },
        };
        *out = fork_probability(m, p_b).or_else(|e| fail(GpStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Energy per plain proof-of-work block, `power / lambda`.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_pow_block_energy(total_power: f64, lambda: f64, out: *mut f64) -> GpStatus {
    guard(|| {
        let out = unsafe { out_ptr(out)? };
        if !(total_power.is_finite() && total_power >= 0.0) {
            return fail(GpStatus::InvalidArgument, format!("total power {total_power}"));
        }
        *out = closed_form_pow(total_power, rate(lambda)?);
        Ok(())
    })
}
