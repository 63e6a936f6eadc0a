//! C ABI over the accel-mfg library.
//!
//! Every function returns an `AmStatus`; on failure a description is kept
//! per thread and read with `am_last_error_message`. Objects cross the
//! boundary as opaque handles created by `am_*_new`/solver calls and
//! released with the matching `am_*_free`. Outputs are written through
//! caller-provided pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use accel_mfg::geometry::{Domain, State};
use accel_mfg::metrics;
use accel_mfg::mfg::{pushforward, Coupling, EmpiricalStateMeasure, EquilibriumConfig, Game, TrajectoryMeasure};
use accel_mfg::ocp::{self, BuiltinCost, CostSpec, OCPConfig};
use accel_mfg::oracle1d::{self, EntryProblem, Regime};
use accel_mfg::{Error, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    /// A solver or numerical routine failed.
    Numerical = 3,
    /// The output buffer is too small; the needed length was written.
    BufferTooSmall = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Position and velocity; the second components are ignored on intervals.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AmState {
    pub x: [f64; 2],
    pub v: [f64; 2],
}

impl From<AmState> for State {
    fn from(s: AmState) -> State {
        State { x: s.x, v: s.v }
    }
}

impl From<State> for AmState {
    fn from(s: State) -> AmState {
        AmState { x: s.x, v: s.v }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmEntryResult {
    pub value: f64,
    /// 0 linear, 1 full quadratic, 2 parabolic then flat.
    pub regime: i32,
    /// Switch time into the flat phase, NaN outside that regime.
    pub tau: f64,
    pub theta_star: f64,
}

/// Quadratic running cost `a|x − target|² + b|v|²` plus the terminal
/// counterpart; all zero gives the pure energy problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmSolveOptions {
    pub horizon: f64,
    pub knots: usize,
    pub running_a: f64,
    pub running_b: f64,
    pub terminal_a: f64,
    pub terminal_b: f64,
    pub target: [f64; 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmEquilibriumOptions {
    pub horizon: f64,
    pub knots: usize,
    pub max_iters: usize,
    pub exploitability_tol: f64,
    /// Positive for congestion, negative for aggregation, zero for none.
    pub coupling_strength: f64,
    pub bandwidth: f64,
}

pub struct AmDomain(Domain);
pub struct AmTrajectory(Trajectory);
pub struct AmMeasure(TrajectoryMeasure);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: AmStatus, msg: impl Into<String>) -> AmStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> AmStatus {
    let status = match e {
        Error::NoFeasibleStart | Error::ExitsDomain { .. } | Error::Agent { .. } => AmStatus::Numerical,
        _ => AmStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `AmStatus::Panic`.
fn guard(f: impl FnOnce() -> AmStatus) -> AmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(AmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(AmStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn am_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn am_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => panic!("version is NUL-terminated"),
    };
    VERSION.as_ptr()
}

fn put_domain(out: *mut *mut AmDomain, d: accel_mfg::Result<Domain>) -> AmStatus {
    match d {
        Ok(d) => {
            // SAFETY: `out` was checked non-null by the caller.
            unsafe { *out = Box::into_raw(Box::new(AmDomain(d))) };
            AmStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn am_domain_interval(a: f64, b: f64, out: *mut *mut AmDomain) -> AmStatus {
    guard(|| {
        non_null!(out);
        put_domain(out, Domain::interval(a, b))
    })
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn am_domain_disc(cx: f64, cy: f64, radius: f64, out: *mut *mut AmDomain) -> AmStatus {
    guard(|| {
        non_null!(out);
        put_domain(out, Domain::disc([cx, cy], radius))
    })
}

/// Convex polygon from `n` counter-clockwise vertices stored as `xy[2i], xy[2i+1]`.
///
/// # Safety
/// `xy` must point to `2n` doubles and `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn am_domain_polygon(xy: *const f64, n: usize, out: *mut *mut AmDomain) -> AmStatus {
    guard(|| {
        non_null!(xy, out);
        let flat = std::slice::from_raw_parts(xy, 2 * n);
        let vertices = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        put_domain(out, Domain::polygon(vertices))
    })
}

/// # Safety
/// `domain` must be null or a handle from `am_domain_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_domain_free(domain: *mut AmDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Signed distance to the boundary, negative inside.
///
/// # Safety
/// `domain` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn am_domain_signed_distance(domain: *const AmDomain, x0: f64, x1: f64, out: *mut f64) -> AmStatus {
    guard(|| {
        non_null!(domain, out);
        *out = (*domain).0.signed_distance(&[x0, x1]);
        AmStatus::Ok
    })
}

/// Closed-form entry problem from `(x, v)` with `x < 0`, target velocity `w`,
/// entry time `theta` and horizon `horizon`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn am_oracle_entry(
    x: f64,
    v: f64,
    w: f64,
    theta: f64,
    horizon: f64,
    out: *mut AmEntryResult,
) -> AmStatus {
    guard(|| {
        non_null!(out);
        let run = || -> accel_mfg::Result<AmEntryResult> {
            let sol = oracle1d::entry_trajectory(&EntryProblem::new(x, v, w, theta, horizon)?)?;
            let best = oracle1d::optimal_theta(x, v, w, horizon)?;
            let regime = match sol.regime {
                Regime::Linear => 0,
                Regime::FullQuadratic => 1,
                Regime::ParabolicThenFlat => 2,
            };
            Ok(AmEntryResult { value: sol.value, regime, tau: sol.tau.unwrap_or(f64::NAN), theta_star: best.theta_star })
        };
        match run() {
            Ok(r) => {
                *out = r;
                AmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Default options: `T = 1`, 512 knots, zero running and terminal costs.
#[no_mangle]
pub extern "C" fn am_solve_options_default() -> AmSolveOptions {
    AmSolveOptions {
        horizon: 1.0,
        knots: OCPConfig::default().knots,
        running_a: 0.0,
        running_b: 0.0,
        terminal_a: 0.0,
        terminal_b: 0.0,
        target: [0.0, 0.0],
    }
}

fn cost_of_options(o: &AmSolveOptions) -> accel_mfg::Result<CostSpec> {
    let part = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            BuiltinCost::Zero
        } else {
            BuiltinCost::Quadratic { a, b, target: o.target }
        }
    };
    CostSpec::new(part(o.running_a, o.running_b), part(o.terminal_a, o.terminal_b), 2.0)
}

/// Optimal control from `start`. Writes the value and, when `trajectory`
/// is non-null, a new trajectory handle.
///
/// # Safety
/// `domain` must be a live handle; `start`, `options` readable; `value`
/// writable; `trajectory` null or writable.
#[no_mangle]
pub unsafe extern "C" fn am_solve(
    domain: *const AmDomain,
    start: *const AmState,
    options: *const AmSolveOptions,
    value: *mut f64,
    trajectory: *mut *mut AmTrajectory,
) -> AmStatus {
    guard(|| {
        non_null!(domain, start, options, value);
        let o = *options;
        let run = || -> accel_mfg::Result<ocp::OptResult> {
            let cfg = OCPConfig { knots: o.knots, horizon: o.horizon, ..OCPConfig::default() };
            ocp::solve(&(*start).into(), &cost_of_options(&o)?, &(*domain).0, &cfg)
        };
        match run() {
            Ok(r) if r.converged => {
                *value = r.value;
                if !trajectory.is_null() {
                    *trajectory = Box::into_raw(Box::new(AmTrajectory(r.trajectory)));
                }
                AmStatus::Ok
            }
            Ok(r) => fail(AmStatus::Numerical, format!("solver did not converge (value {})", r.value)),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_free(trajectory: *mut AmTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of knots.
///
/// # Safety
/// `trajectory` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_len(trajectory: *const AmTrajectory, out: *mut usize) -> AmStatus {
    guard(|| {
        non_null!(trajectory, out);
        *out = (*trajectory).0.times().len();
        AmStatus::Ok
    })
}

/// State at time `t ∈ [0, T]`.
///
/// # Safety
/// `trajectory` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_eval(trajectory: *const AmTrajectory, t: f64, out: *mut AmState) -> AmStatus {
    guard(|| {
        non_null!(trajectory, out);
        match (*trajectory).0.eval(t) {
            Ok(s) => {
                *out = s.into();
                AmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Copies knot times and states into buffers of capacity `cap`. Writes the
/// knot count to `len` in every case and returns `BufferTooSmall` when it
/// exceeds `cap`.
///
/// # Safety
/// `times` and `states` must hold `cap` elements; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_trajectory_knots(
    trajectory: *const AmTrajectory,
    times: *mut f64,
    states: *mut AmState,
    cap: usize,
    len: *mut usize,
) -> AmStatus {
    guard(|| {
        non_null!(trajectory, times, states, len);
        let t = &(*trajectory).0;
        let n = t.times().len();
        *len = n;
        if n > cap {
            return fail(AmStatus::BufferTooSmall, format!("need {n} slots, got {cap}"));
        }
        for (i, (time, k)) in t.times().iter().zip(t.knots()).enumerate() {
            *times.add(i) = *time;
            *states.add(i) = (*k).into();
        }
        AmStatus::Ok
    })
}

unsafe fn uniform_cloud(states: *const AmState, n: usize) -> accel_mfg::Result<EmpiricalStateMeasure> {
    let pts = std::slice::from_raw_parts(states, n).iter().map(|s| State::from(*s)).collect();
    EmpiricalStateMeasure::uniform(pts)
}

/// Exact W1 between two equally weighted clouds of the same size, ground
/// metric `|Δx| + |Δv|`.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` states; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn am_w1_exact(a: *const AmState, na: usize, b: *const AmState, nb: usize, out: *mut f64) -> AmStatus {
    guard(|| {
        non_null!(a, b, out);
        let run = || metrics::w1_exact(&uniform_cloud(a, na)?, &uniform_cloud(b, nb)?);
        match run() {
            Ok(d) => {
                *out = d;
                AmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub extern "C" fn am_equilibrium_options_default() -> AmEquilibriumOptions {
    let d = EquilibriumConfig::default();
    AmEquilibriumOptions {
        horizon: 1.0,
        knots: d.ocp.knots,
        max_iters: d.max_iters,
        exploitability_tol: d.exploitability_tol,
        coupling_strength: 0.0,
        bandwidth: 0.2,
    }
}

/// Fictitious play from `n` equally weighted initial states with zero base
/// costs. Writes a measure handle, the final exploitability and whether it
/// fell below the tolerance (1) or not (0).
///
/// # Safety
/// `domain` must be live; `m0` must hold `n` states; `options` readable;
/// the three outputs writable.
#[no_mangle]
pub unsafe extern "C" fn am_equilibrium(
    domain: *const AmDomain,
    m0: *const AmState,
    n: usize,
    options: *const AmEquilibriumOptions,
    measure: *mut *mut AmMeasure,
    exploitability: *mut f64,
    converged: *mut i32,
) -> AmStatus {
    guard(|| {
        non_null!(domain, m0, options, measure, exploitability, converged);
        let o = *options;
        let run = || -> accel_mfg::Result<_> {
            let sample = uniform_cloud(m0, n)?.points;
            let coupling = if o.coupling_strength > 0.0 {
                Coupling::MollifiedCongestion { strength: o.coupling_strength, bandwidth: o.bandwidth }
            } else if o.coupling_strength < 0.0 {
                Coupling::MollifiedAggregation { strength: -o.coupling_strength, bandwidth: o.bandwidth }
            } else {
                Coupling::Zero
            };
            let game = Game::new((*domain).0.clone(), coupling, CostSpec::zero())?;
            let cfg = EquilibriumConfig {
                agents: n,
                max_iters: o.max_iters,
                exploitability_tol: o.exploitability_tol,
                ocp: OCPConfig { knots: o.knots, horizon: o.horizon, ..OCPConfig::default() },
                ..EquilibriumConfig::default()
            };
            game.fictitious_play(&sample, &cfg)
        };
        match run() {
            Ok(eq) => {
                let e = if eq.converged {
                    eq.history.last().map_or(0.0, |h| h.exploitability)
                } else {
                    eq.history.iter().map(|h| h.exploitability).fold(f64::INFINITY, f64::min)
                };
                *exploitability = e;
                *converged = i32::from(eq.converged);
                *measure = Box::into_raw(Box::new(AmMeasure(eq.measure)));
                AmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `measure` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_measure_free(measure: *mut AmMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

/// Number of atoms (trajectories) in the measure.
///
/// # Safety
/// `measure` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn am_measure_atoms(measure: *const AmMeasure, out: *mut usize) -> AmStatus {
    guard(|| {
        non_null!(measure, out);
        *out = (*measure).0.atoms().len();
        AmStatus::Ok
    })
}

/// `m(t)`: one state and weight per atom, into buffers of capacity `cap`.
/// Writes the atom count to `len` in every case.
///
/// # Safety
/// `states` and `weights` must hold `cap` elements; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn am_measure_pushforward(
    measure: *const AmMeasure,
    t: f64,
    states: *mut AmState,
    weights: *mut f64,
    cap: usize,
    len: *mut usize,
) -> AmStatus {
    guard(|| {
        non_null!(measure, states, weights, len);
        let m = match pushforward(&(*measure).0, t) {
            Ok(m) => m,
            Err(e) => return from_error(e),
        };
        *len = m.len();
        if m.len() > cap {
            return fail(AmStatus::BufferTooSmall, format!("need {} slots, got {cap}", m.len()));
        }
        for (i, (s, w)) in m.points.iter().enumerate() {
            *states.add(i) = (*s).into();
            *weights.add(i) = *w;
        }
        AmStatus::Ok
    })
}
