//! C ABI for the orcs particle engine.
//!
//! A simulation lives behind an opaque `OrcsSimulation` handle created by
//! `orcs_simulation_new` and released with `orcs_simulation_free`. Every
//! fallible call returns an `OrcsStatus`; on failure the message is available
//! from `orcs_last_error_message` on the same thread until the next failing
//! call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use orcs_core::bench::{drive, RunStatus, Simulation, StepRecord};
use orcs_core::policy::{k_u_opt, total_cost, CostModelParams};
use orcs_core::{Error, SimConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Capacity = 4,
    NeighborListOverflow = 5,
    ModeUnsupported = 6,
    Structure = 7,
    NonFiniteForce = 8,
    OracleLimit = 9,
    Io = 10,
    Panic = 11,
}

impl From<&Error> for OrcsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } => OrcsStatus::Config,
            Error::Capacity { .. } => OrcsStatus::Capacity,
            Error::NeighborListOverflow { .. } => OrcsStatus::NeighborListOverflow,
            Error::ModeUnsupported { .. } => OrcsStatus::ModeUnsupported,
            Error::Structure(_) => OrcsStatus::Structure,
            Error::NonFiniteForce { .. } => OrcsStatus::NonFiniteForce,
            Error::OracleLimit { .. } => OrcsStatus::OracleLimit,
            Error::Io(_) => OrcsStatus::Io,
        }
    }
}

/// Opaque simulation handle.
pub struct OrcsSimulation {
    sim: Simulation,
}

/// Timings and counters of one step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OrcsStepRecord {
    pub step: u64,
    pub maintain_ms: f64,
    pub query_ms: f64,
    pub integrate_ms: f64,
    /// 1 when the BVH was rebuilt, 0 when refitted or not used.
    pub rebuilt: u8,
    pub k_u: u64,
    pub interactions: u64,
    pub mean_nodes_visited: f64,
    pub avg_neighbors: f64,
}

impl From<&StepRecord> for OrcsStepRecord {
    fn from(r: &StepRecord) -> Self {
        OrcsStepRecord {
            step: r.step,
            maintain_ms: r.maintain_ms,
            query_ms: r.query_ms,
            integrate_ms: r.integrate_ms,
            rebuilt: u8::from(r.rebuilt),
            k_u: r.k_u,
            interactions: r.interactions,
            mean_nodes_visited: r.mean_nodes_visited,
            avg_neighbors: r.avg_neighbors,
        }
    }
}

/// Aggregates over a run of steps.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OrcsRunSummary {
    pub steps_run: u64,
    pub mean_step_ms: f64,
    pub total_ms: f64,
    pub maintain_ms: f64,
    pub query_ms: f64,
    pub integrate_ms: f64,
    pub rebuilds: u64,
    pub peak_memory_bytes: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: OrcsStatus, msg: impl Into<String>) -> OrcsStatus {
    set_last_error(msg);
    status
}

fn fail_with(e: &Error) -> OrcsStatus {
    fail(e.into(), e.to_string())
}

/// Runs `f`, turning a panic into `OrcsStatus::Panic`.
fn guard<F: FnOnce() -> OrcsStatus>(f: F) -> OrcsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(OrcsStatus::Panic, "internal panic"))
}

unsafe fn sim_mut<'a>(handle: *mut OrcsSimulation) -> Option<&'a mut OrcsSimulation> {
    unsafe { handle.as_mut() }
}

/// Message of the last failing call on this thread, or null if none failed.
///
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn orcs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn orcs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulation from `key = value` config text (the CLI's config
/// file format). A null `config` means all defaults. On success `*out`
/// receives a handle the caller must free with `orcs_simulation_free`.
///
/// # Safety
/// `config` is null or a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_new(
    config: *const c_char,
    out: *mut *mut OrcsSimulation,
) -> OrcsStatus {
    guard(|| {
        if out.is_null() {
            return fail(OrcsStatus::NullPointer, "out is null");
        }
        unsafe { *out = ptr::null_mut() };
        let text = if config.is_null() {
            ""
        } else {
            match unsafe { CStr::from_ptr(config) }.to_str() {
                Ok(s) => s,
                Err(_) => return fail(OrcsStatus::InvalidArgument, "config is not valid UTF-8"),
            }
        };
        let cfg = match SimConfig::from_text(text) {
            Ok(c) => c,
            Err(e) => return fail_with(&e),
        };
        match Simulation::new(&cfg) {
            Ok(sim) => {
                unsafe { *out = Box::into_raw(Box::new(OrcsSimulation { sim })) };
                OrcsStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `handle` is null or came from `orcs_simulation_new` and was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_free(handle: *mut OrcsSimulation) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Advances one step. `record` may be null.
///
/// # Safety
/// `handle` is a live handle; `record` is null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_step(
    handle: *mut OrcsSimulation,
    record: *mut OrcsStepRecord,
) -> OrcsStatus {
    guard(|| {
        let Some(h) = (unsafe { sim_mut(handle) }) else {
            return fail(OrcsStatus::NullPointer, "handle is null");
        };
        match h.sim.step() {
            Ok(r) => {
                if !record.is_null() {
                    unsafe { *record = OrcsStepRecord::from(&r) };
                }
                OrcsStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Advances `steps` steps, stopping at the first failure. `summary` may be
/// null; when given it covers the steps that completed.
///
/// # Safety
/// `handle` is a live handle; `summary` is null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_run(
    handle: *mut OrcsSimulation,
    steps: u64,
    summary: *mut OrcsRunSummary,
) -> OrcsStatus {
    guard(|| {
        let Some(h) = (unsafe { sim_mut(handle) }) else {
            return fail(OrcsStatus::NullPointer, "handle is null");
        };
        let s = drive(&mut h.sim, steps, |_| {});
        if !summary.is_null() {
            unsafe {
                *summary = OrcsRunSummary {
                    steps_run: s.steps_run,
                    mean_step_ms: s.mean_step_ms,
                    total_ms: s.total_ms,
                    maintain_ms: s.maintain_ms,
                    query_ms: s.query_ms,
                    integrate_ms: s.integrate_ms,
                    rebuilds: s.rebuilds,
                    peak_memory_bytes: s.peak_memory_bytes as u64,
                }
            };
        }
        match s.status {
            RunStatus::Failed(e) => fail_with(&e),
            RunStatus::Skipped(why) => fail(OrcsStatus::Config, why),
            RunStatus::Ok => OrcsStatus::Ok,
        }
    })
}

/// Particle count, or 0 for a null handle.
///
/// # Safety
/// `handle` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_len(handle: *const OrcsSimulation) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |h| h.sim.system().len())
}

/// Steps completed so far, or 0 for a null handle.
///
/// # Safety
/// `handle` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_steps_done(handle: *const OrcsSimulation) -> u64 {
    unsafe { handle.as_ref() }.map_or(0, |h| h.sim.steps_done())
}

/// Copies positions as `x y z` triples into `out`, which holds `len` doubles
/// and must fit `3 * orcs_simulation_len(handle)`.
///
/// # Safety
/// `handle` is a live handle; `out` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_positions(
    handle: *const OrcsSimulation,
    out: *mut f64,
    len: usize,
) -> OrcsStatus {
    guard(|| {
        let Some(h) = (unsafe { handle.as_ref() }) else {
            return fail(OrcsStatus::NullPointer, "handle is null");
        };
        let ps = h.sim.system();
        if out.is_null() {
            return fail(OrcsStatus::NullPointer, "out is null");
        }
        if len < 3 * ps.len() {
            return fail(
                OrcsStatus::InvalidArgument,
                format!("buffer holds {len} doubles, need {}", 3 * ps.len()),
            );
        }
        let out = unsafe { std::slice::from_raw_parts_mut(out, 3 * ps.len()) };
        for (dst, p) in out.chunks_exact_mut(3).zip(&ps.positions) {
            dst.copy_from_slice(&[p.x, p.y, p.z]);
        }
        OrcsStatus::Ok
    })
}

/// Copies the per-particle search radii into `out`, which holds `len`
/// doubles and must fit `orcs_simulation_len(handle)`.
///
/// # Safety
/// `handle` is a live handle; `out` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn orcs_simulation_radii(
    handle: *const OrcsSimulation,
    out: *mut f64,
    len: usize,
) -> OrcsStatus {
    guard(|| {
        let Some(h) = (unsafe { handle.as_ref() }) else {
            return fail(OrcsStatus::NullPointer, "handle is null");
        };
        let radii = h.sim.system().radii();
        if out.is_null() {
            return fail(OrcsStatus::NullPointer, "out is null");
        }
        if len < radii.len() {
            return fail(
                OrcsStatus::InvalidArgument,
                format!("buffer holds {len} doubles, need {}", radii.len()),
            );
        }
        unsafe { std::slice::from_raw_parts_mut(out, radii.len()) }.copy_from_slice(radii);
        OrcsStatus::Ok
    })
}

/// Refits between rebuilds that minimise the modelled cost, clamped to
/// `[0, k_max]`; `k_max` when the slope is at or below `delta_min`.
#[no_mangle]
pub extern "C" fn orcs_k_u_opt(
    t_u: f64,
    t_r: f64,
    delta_q: f64,
    delta_min: f64,
    k_max: u64,
) -> u64 {
    k_u_opt(t_u, t_r, delta_q, delta_min, k_max)
}

/// Modelled query-plus-maintenance time of `n_steps` steps rebuilding every
/// `k_u + 1` steps.
#[no_mangle]
pub extern "C" fn orcs_total_cost(
    t_r: f64,
    t_u: f64,
    t_q: f64,
    delta_q: f64,
    n_steps: u64,
    k_u: u64,
) -> f64 {
    total_cost(
        &CostModelParams {
            t_r,
            t_u,
            t_q,
            delta_q,
            n_steps,
        },
        k_u,
    )
}
