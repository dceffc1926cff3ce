//! C ABI for the csgd simulator.
//!
//! Objects are opaque handles created by `*_new` functions and released with
//! the matching `*_free`. Every fallible call returns a [`CsgdStatus`]; on
//! failure a description is available from [`csgd_last_error_message`] on the
//! same thread. Panics are caught at the boundary and reported as
//! `CSGD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use csgd::engine::{EngineError, NetworkState, Simulation};
use csgd::graph::{Graph, Topology};
use csgd::oracle::OracleConfig;
use csgd::problems::quadratic_problem_with_samples;
use csgd::schedule::StepSchedule;
use csgd::{diagnostics, ValidationMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Topology could not be parsed or built, or the mixing bound failed.
    Graph = 3,
    /// Step-size conditions failed in the requested mode.
    Schedule = 4,
    Problem = 5,
    /// An iterate became non-finite.
    Diverged = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Communication graph.
pub struct CsgdGraph {
    inner: Arc<Graph>,
}

/// Step-size schedule.
pub struct CsgdSchedule {
    inner: StepSchedule,
}

/// Network of agents minimizing private quadratic objectives.
pub struct CsgdSimulation {
    sim: Simulation,
    state: NetworkState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: CsgdStatus, message: impl ToString) -> CsgdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.to_string());
    status
}

fn guard(f: impl FnOnce() -> CsgdStatus) -> CsgdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(CsgdStatus::Panic, msg)
        }
    }
}

fn mode(strict: bool) -> ValidationMode {
    if strict {
        ValidationMode::Strict
    } else {
        ValidationMode::Compat
    }
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn csgd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a graph from a topology string such as `ring:10` or `edges:n=4;0-1,1-2,2-3`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_graph_new(spec: *const c_char, out: *mut *mut CsgdGraph) -> CsgdStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(CsgdStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(spec).to_str() else {
            return fail(CsgdStatus::InvalidArgument, "topology is not UTF-8");
        };
        let graph = text
            .parse::<Topology>()
            .and_then(|t| Graph::build(&t));
        match graph {
            Ok(g) => {
                *out = Box::into_raw(Box::new(CsgdGraph { inner: Arc::new(g) }));
                CsgdStatus::Ok
            }
            Err(e) => fail(CsgdStatus::Graph, e),
        }
    })
}

/// # Safety
/// `graph` must be null or a handle from [`csgd_graph_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csgd_graph_free(graph: *mut CsgdGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csgd_graph_agents(graph: *const CsgdGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.agents())
}

/// Writes the algebraic connectivity and the largest Laplacian eigenvalue.
///
/// # Safety
/// `graph` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_graph_spectrum(
    graph: *const CsgdGraph,
    lambda2: *mut f64,
    sigma_max: *mut f64,
) -> CsgdStatus {
    guard(|| {
        let Some(g) = graph.as_ref() else {
            return fail(CsgdStatus::NullPointer, "null graph");
        };
        if lambda2.is_null() || sigma_max.is_null() {
            return fail(CsgdStatus::NullPointer, "null output");
        }
        *lambda2 = g.inner.lambda2();
        *sigma_max = g.inner.sigma_max();
        CsgdStatus::Ok
    })
}

/// Checks `b * sigma_max(L) < 1`. In compat mode a violation only sets
/// `*satisfied = false`; in strict mode it also returns `CSGD_STATUS_GRAPH`.
///
/// # Safety
/// `graph` must be a live handle; `satisfied` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_graph_check_mixing(
    graph: *const CsgdGraph,
    b: f64,
    strict: bool,
    satisfied: *mut bool,
) -> CsgdStatus {
    guard(|| {
        let Some(g) = graph.as_ref() else {
            return fail(CsgdStatus::NullPointer, "null graph");
        };
        if satisfied.is_null() {
            return fail(CsgdStatus::NullPointer, "null output");
        }
        let report = match g.inner.validate_mixing(b) {
            Ok(r) => r,
            Err(e) => return fail(CsgdStatus::InvalidArgument, e),
        };
        *satisfied = report.satisfied();
        match report.enforce(mode(strict)) {
            Ok(_) => CsgdStatus::Ok,
            Err(e) => fail(CsgdStatus::Graph, e),
        }
    })
}

/// Creates `alpha_k = a/(eps*k+1)^delta2`, `beta_k = b/(eps*k+1)^delta1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_schedule_new(
    a: f64,
    b: f64,
    delta1: f64,
    delta2: f64,
    epsilon: f64,
    out: *mut *mut CsgdSchedule,
) -> CsgdStatus {
    guard(|| {
        if out.is_null() {
            return fail(CsgdStatus::NullPointer, "null output");
        }
        let schedule = StepSchedule::new(a, b, delta1, delta2).with_epsilon(epsilon);
        if let Err(e) = schedule.validate() {
            return fail(CsgdStatus::InvalidArgument, e);
        }
        *out = Box::into_raw(Box::new(CsgdSchedule { inner: schedule }));
        CsgdStatus::Ok
    })
}

/// # Safety
/// `schedule` must be null or a handle from [`csgd_schedule_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csgd_schedule_free(schedule: *mut CsgdSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Gradient step size at iteration `k`; NaN for a null handle.
///
/// # Safety
/// `schedule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csgd_schedule_alpha(schedule: *const CsgdSchedule, k: u64) -> f64 {
    schedule.as_ref().map_or(f64::NAN, |s| s.inner.alpha(k))
}

/// Consensus step size at iteration `k`; NaN for a null handle.
///
/// # Safety
/// `schedule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csgd_schedule_beta(schedule: *const CsgdSchedule, k: u64) -> f64 {
    schedule.as_ref().map_or(f64::NAN, |s| s.inner.beta(k))
}

/// Checks the step-size conditions; boundary cases fail only in strict mode.
///
/// # Safety
/// `schedule` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csgd_schedule_validate(schedule: *const CsgdSchedule, strict: bool) -> CsgdStatus {
    guard(|| {
        let Some(s) = schedule.as_ref() else {
            return fail(CsgdStatus::NullPointer, "null schedule");
        };
        match s.inner.validate().and_then(|r| r.enforce(mode(strict))) {
            Ok(_) => CsgdStatus::Ok,
            Err(e) => fail(CsgdStatus::Schedule, e),
        }
    })
}

/// Creates a simulation where agent `i` minimizes the average of
/// `0.5 * ||w - p||^2` over its `samples` points. `points` holds
/// `agents * samples * dim` values, agent-major. All agents start at `w0`
/// (`dim` values), or at zero when `w0` is null. The graph and schedule are
/// copied; the handles may be freed afterwards.
///
/// # Safety
/// Handles must be live; `points` must hold the stated number of values and
/// `w0` must be null or hold `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_simulation_new_quadratic(
    graph: *const CsgdGraph,
    schedule: *const CsgdSchedule,
    points: *const f64,
    samples: usize,
    dim: usize,
    w0: *const f64,
    seed: u64,
    out: *mut *mut CsgdSimulation,
) -> CsgdStatus {
    guard(|| {
        let (Some(g), Some(s)) = (graph.as_ref(), schedule.as_ref()) else {
            return fail(CsgdStatus::NullPointer, "null handle");
        };
        if points.is_null() || out.is_null() {
            return fail(CsgdStatus::NullPointer, "null argument");
        }
        if samples == 0 || dim == 0 {
            return fail(CsgdStatus::InvalidArgument, "samples and dim must be positive");
        }
        let agents = g.inner.agents();
        let flat = std::slice::from_raw_parts(points, agents * samples * dim);
        let per_agent = flat
            .chunks_exact(samples * dim)
            .map(|a| a.chunks_exact(dim).map(<[f64]>::to_vec).collect())
            .collect();
        let problem = match quadratic_problem_with_samples(per_agent) {
            Ok(p) => Arc::new(p),
            Err(e) => return fail(CsgdStatus::Problem, e),
        };
        let oracle = OracleConfig {
            seed,
            ..OracleConfig::default()
        };
        let sim = match Simulation::new(Arc::clone(&g.inner), s.inner, problem, &oracle) {
            Ok(sim) => sim,
            Err(e) => return fail(CsgdStatus::Problem, e),
        };
        let start = if w0.is_null() {
            vec![0.0; dim]
        } else {
            std::slice::from_raw_parts(w0, dim).to_vec()
        };
        let state = NetworkState::consensual(agents, &start);
        *out = Box::into_raw(Box::new(CsgdSimulation { sim, state }));
        CsgdStatus::Ok
    })
}

/// # Safety
/// `sim` must be null or a handle from [`csgd_simulation_new_quadratic`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csgd_simulation_free(sim: *mut CsgdSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Runs `steps` synchronous rounds.
///
/// # Safety
/// `sim` must be a live handle not used concurrently from another thread.
#[no_mangle]
pub unsafe extern "C" fn csgd_simulation_step(sim: *mut CsgdSimulation, steps: u64) -> CsgdStatus {
    guard(|| {
        let Some(s) = sim.as_mut() else {
            return fail(CsgdStatus::NullPointer, "null simulation");
        };
        for _ in 0..steps {
            match s.sim.step(&mut s.state) {
                Ok(_) => {}
                Err(e @ EngineError::Diverged { .. }) => return fail(CsgdStatus::Diverged, e),
                Err(e) => return fail(CsgdStatus::Problem, e),
            }
        }
        CsgdStatus::Ok
    })
}

/// Current iteration counter, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csgd_simulation_iteration(sim: *const CsgdSimulation) -> u64 {
    sim.as_ref().map_or(0, |s| s.state.k())
}

/// Copies the stacked parameters (`agents * dim` values) into `buf`.
/// `*written` receives the required length even when `buf` is too small.
///
/// # Safety
/// `sim` must be a live handle; `buf` must be null or hold `len` values;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_simulation_parameters(
    sim: *const CsgdSimulation,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CsgdStatus {
    guard(|| {
        let Some(s) = sim.as_ref() else {
            return fail(CsgdStatus::NullPointer, "null simulation");
        };
        if written.is_null() {
            return fail(CsgdStatus::NullPointer, "null output");
        }
        let w = s.state.w();
        *written = w.len();
        if buf.is_null() || len < w.len() {
            return fail(CsgdStatus::BufferTooSmall, format!("need {} values", w.len()));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        CsgdStatus::Ok
    })
}

/// Writes `sum_i ||w_i - mean(w)||^2` for the current state.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn csgd_simulation_consensus_error(sim: *const CsgdSimulation, out: *mut f64) -> CsgdStatus {
    guard(|| {
        let Some(s) = sim.as_ref() else {
            return fail(CsgdStatus::NullPointer, "null simulation");
        };
        if out.is_null() {
            return fail(CsgdStatus::NullPointer, "null output");
        }
        *out = diagnostics::consensus_error(s.state.w(), s.state.agents(), s.state.dim());
        CsgdStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { csgd_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) };
        assert_eq!(s.to_bytes().len(), n.min(255));
        s.to_string_lossy().into_owned()
    }

    fn graph(spec: &str) -> *mut CsgdGraph {
        let spec = CString::new(spec).unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(unsafe { csgd_graph_new(spec.as_ptr(), &mut g) }, CsgdStatus::Ok);
        g
    }

    #[test]
    fn ring_spectrum_and_mixing() {
        let g = graph("ring:10");
        let (mut l2, mut smax) = (0.0, 0.0);
        unsafe {
            assert_eq!(csgd_graph_agents(g), 10);
            assert_eq!(csgd_graph_spectrum(g, &mut l2, &mut smax), CsgdStatus::Ok);
            let mut ok = true;
            assert_eq!(csgd_graph_check_mixing(g, 0.2525, false, &mut ok), CsgdStatus::Ok);
            assert!(!ok);
            assert_eq!(csgd_graph_check_mixing(g, 0.2525, true, &mut ok), CsgdStatus::Graph);
            assert_eq!(csgd_graph_check_mixing(g, 0.2, true, &mut ok), CsgdStatus::Ok);
            assert!(ok);
            csgd_graph_free(g);
        }
        assert!((l2 - (2.0 - 2.0 * (std::f64::consts::PI / 5.0).cos())).abs() < 1e-9);
        assert!((smax - 4.0).abs() < 1e-9);
    }

    #[test]
    fn errors_are_reported() {
        let bad = CString::new("ring:0").unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(unsafe { csgd_graph_new(bad.as_ptr(), &mut g) }, CsgdStatus::Graph);
        assert!(g.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(unsafe { csgd_graph_new(ptr::null(), &mut g) }, CsgdStatus::NullPointer);
        assert_eq!(unsafe { csgd_graph_agents(ptr::null()) }, 0);

        let mut s = ptr::null_mut();
        unsafe {
            assert_eq!(csgd_schedule_new(1.0, 0.2525, 1.0 / 3.0, 1.0, 1e-5, &mut s), CsgdStatus::Ok);
            assert_eq!(csgd_schedule_validate(s, false), CsgdStatus::Ok);
            assert_eq!(csgd_schedule_validate(s, true), CsgdStatus::Schedule);
            assert!(last_error().contains("3*delta1 < delta2"));
            assert_eq!(csgd_schedule_alpha(s, 0), 1.0);
            csgd_schedule_free(s);
            assert_eq!(csgd_schedule_new(-1.0, 0.2, 0.28, 0.9, 1.0, &mut s), CsgdStatus::InvalidArgument);
        }
    }

    #[test]
    fn quadratic_simulation_reaches_consensus() {
        let g = graph("ring:4");
        let mut s = ptr::null_mut();
        let mut sim = ptr::null_mut();
        let points = [1.0, -1.0, 3.0, 0.0, -2.0, 2.0, 0.0, 1.0];
        unsafe {
            assert_eq!(csgd_schedule_new(1.0, 0.2, 0.28, 0.9, 1.0, &mut s), CsgdStatus::Ok);
            assert_eq!(
                csgd_simulation_new_quadratic(g, s, points.as_ptr(), 1, 2, ptr::null(), 7, &mut sim),
                CsgdStatus::Ok
            );
            csgd_graph_free(g);
            csgd_schedule_free(s);
            assert_eq!(csgd_simulation_step(sim, 20000), CsgdStatus::Ok);
            assert_eq!(csgd_simulation_iteration(sim), 20000);

            let mut written = 0;
            assert_eq!(
                csgd_simulation_parameters(sim, ptr::null_mut(), 0, &mut written),
                CsgdStatus::BufferTooSmall
            );
            assert_eq!(written, 8);
            let mut w = [0.0; 8];
            assert_eq!(csgd_simulation_parameters(sim, w.as_mut_ptr(), 8, &mut written), CsgdStatus::Ok);
            for block in w.chunks(2) {
                assert!((block[0] - 0.5).abs() < 0.05 && (block[1] - 0.5).abs() < 0.05, "{block:?}");
            }
            let mut ce = 1.0;
            assert_eq!(csgd_simulation_consensus_error(sim, &mut ce), CsgdStatus::Ok);
            assert!(ce < 1e-2);
            csgd_simulation_free(sim);
        }
    }
}
