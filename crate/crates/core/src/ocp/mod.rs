//! The state-constrained control problem: minimize
//! `(1/p)∫|η′|^p + ∫ℓ(ξ, η, t) + g(ξ(T), η(T))` over admissible trajectories.
//!
//! Knot states are the unknowns (so `ξ′ = η` is exact), containment is an
//! augmented-Lagrangian penalty on exact per-segment maxima, and each start
//! from the constructive maneuvers is polished by damped Newton steps on the
//! banded Hessian.

mod banded;
mod cost;
mod newton;
mod transcription;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cost::{cost_of, cost_of_from, BuiltinCost, CostSpec, StageCost, StageEval};
pub use transcription::{Penalty, Problem, Sample, Transcription};

use crate::error::{Error, Result};
use crate::geometry::{Domain, State, ThetaMode, ThetaRSpec};
use crate::oracle1d;
use crate::trajectory::{brake_maneuver, feasibility_map_j, GammaCBound, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OCPConfig {
    /// Knot count.
    #[serde(rename = "N")]
    pub knots: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub inner_tol: f64,
    pub constraint_tol: f64,
    /// Number of starts polished by the solver.
    pub multistart: usize,
    pub seed: u64,
    pub dedup_tol: f64,
}

impl Default for OCPConfig {
    fn default() -> Self {
        OCPConfig {
            knots: 512,
            horizon: 1.0,
            penalty_init: 1.0,
            penalty_growth: 10.0,
            max_outer: 40,
            max_newton: 200,
            inner_tol: 1e-13,
            constraint_tol: 1e-9,
            multistart: 3,
            seed: 0,
            dedup_tol: 1e-4,
        }
    }
}

impl OCPConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.knots < 2 {
            return bad("N must be at least 2");
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("T must be positive");
        }
        if !(self.penalty_growth > 1.0) {
            return bad("penalty_growth must exceed 1");
        }
        if !(self.penalty_init > 0.0 && self.inner_tol > 0.0 && self.constraint_tol > 0.0 && self.dedup_tol > 0.0) {
            return bad("penalties and tolerances must be positive");
        }
        if self.multistart == 0 || self.max_outer == 0 || self.max_newton == 0 {
            return bad("multistart, max_outer and max_newton must be positive");
        }
        Ok(())
    }

    pub fn with_knots(&self, knots: usize) -> Self {
        OCPConfig { knots, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub trajectory: Trajectory,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub trajectory: Trajectory,
    pub value: f64,
    pub constraint_violation: f64,
    pub first_order_residual: f64,
    pub starts_used: usize,
    pub converged: bool,
    /// Distinct feasible local minimizers, best first.
    pub minimizers: Vec<Candidate>,
}

/// Uniform knot times on `[0, duration]`.
pub fn time_grid(duration: f64, knots: usize) -> Vec<f64> {
    let n = knots - 1;
    (0..=n).map(|k| if k == n { duration } else { duration * k as f64 / n as f64 }).collect()
}

/// Sup distance, relative to the domain size, below which two converged
/// coarse solutions count as the same minimizer.
const SAME_COARSE_SOLUTION: f64 = 1e-9;

/// Knot counts for mesh continuation: segments grow fourfold from 32 up to
/// the requested count.
fn mesh_ladder(knots: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut segs = 32;
    while segs < knots - 1 {
        out.push(segs + 1);
        segs *= 4;
    }
    out.push(knots);
    out
}

/// Minimal cost from `s` on `[0, T]` with `T` from the config.
pub fn solve(s: &State, spec: &CostSpec, domain: &Domain, cfg: &OCPConfig) -> Result<OptResult> {
    solve_problem(&Problem::new(*s, domain.clone(), spec.clone(), cfg.horizon), cfg)
}

pub fn value_u(s: &State, spec: &CostSpec, domain: &Domain, cfg: &OCPConfig) -> Result<f64> {
    Ok(solve(s, spec, domain, cfg)?.value)
}

/// Starts from the constructive maneuvers, in priority order.
fn initializers(problem: &Problem) -> Vec<Trajectory> {
    let s = problem.start;
    let dur = problem.duration();
    let dim = problem.domain.dim();
    let mut out: Vec<Trajectory> = problem
        .warm_starts
        .iter()
        .filter(|w| w.dim() == dim && (w.horizon() - dur).abs() <= 1e-12 * dur.max(1.0))
        .cloned()
        .collect();
    if let Some(w) = problem.terminal_velocity {
        // Velocity ramp from v to the pinned value.
        let end = State {
            x: [s.x[0] + 0.5 * dur * (s.v[0] + w[0]), s.x[1] + 0.5 * dur * (s.v[1] + w[1])],
            v: w,
        };
        if let Ok(t) = Trajectory::new(dim, vec![0.0, dur], vec![s, end]) {
            out.push(t);
        }
    }
    if let Domain::Interval { a, b } = problem.domain {
        // Stop on the boundary ahead after the optimal entry time.
        let v = s.v[0];
        let (edge, gap) = if v > 0.0 { (b, b - s.x[0]) } else { (a, s.x[0] - a) };
        if v != 0.0 && gap > 0.0 {
            if let Ok(opt) = oracle1d::optimal_theta(-gap, v.abs(), 0.0, f64::INFINITY) {
                if opt.theta_star < dur {
                    let rest = State::new_1d(edge, 0.0);
                    if let Ok(t) = Trajectory::new(1, vec![0.0, opt.theta_star, dur], vec![s, rest, rest]) {
                        out.push(t);
                    }
                }
            }
        }
        if let Ok(t) = feasibility_map_j(&problem.domain, &s, dur) {
            out.push(t);
        }
    }
    let mut tbar = 2.0 * dur / 3.0;
    for _ in 0..10 {
        if let Ok(t) = brake_maneuver(&s, tbar, dur, &problem.domain) {
            out.push(t);
            break;
        }
        tbar /= 3.0;
    }
    let end = State { x: [s.x[0] + dur * s.v[0], s.x[1] + dur * s.v[1]], v: s.v };
    if let Ok(t) = Trajectory::new(dim, vec![0.0, dur], vec![s, end]) {
        out.push(t);
    }
    out
}

fn lexicographic(a: &Trajectory, b: &Trajectory) -> std::cmp::Ordering {
    let flat = |t: &Trajectory| -> Vec<f64> {
        t.times().iter().copied().chain(t.knots().iter().flat_map(|k| [k.x[0], k.x[1], k.v[0], k.v[1]])).collect()
    };
    let (fa, fb) = (flat(a), flat(b));
    for (x, y) in fa.iter().zip(&fb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    fa.len().cmp(&fb.len())
}

struct Run {
    trajectory: Trajectory,
    value: f64,
    violation: f64,
    residual: f64,
    converged: bool,
    polished: bool,
}

pub fn solve_problem(problem: &Problem, cfg: &OCPConfig) -> Result<OptResult> {
    cfg.validate()?;
    problem.spec.validate()?;
    let dim = problem.domain.dim();
    if dim == 1 && (problem.start.x[1] != 0.0 || problem.start.v[1] != 0.0) {
        return Err(Error::DimensionMismatch);
    }
    if !problem.domain.is_admissible_state(&problem.start) {
        return Err(Error::StateNotAdmissible);
    }
    let dur = problem.duration();
    if !(dur > 0.0) {
        return Err(Error::NonpositiveDuration(dur));
    }
    let levels = mesh_ladder(cfg.knots)
        .into_iter()
        .map(|n| Transcription::new(problem, time_grid(dur, n)))
        .collect::<Result<Vec<_>>>()?;
    let t0 = problem.start_time;
    let starts = initializers(problem);
    let coarse = &levels[0];
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for t in &starts {
        let z = coarse.decision_of(t)?;
        if !seeds.iter().any(|s| s == &z) {
            seeds.push(z);
        }
    }
    if seeds.is_empty() {
        return Err(Error::NoFeasibleStart);
    }
    let scale = problem.domain.length_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    while seeds.len() < cfg.multistart {
        let mut z = seeds[0].clone();
        for (i, x) in z.iter_mut().enumerate() {
            if !coarse.is_fixed(i) {
                *x += 0.01 * scale * rng.gen_range(-1.0..1.0);
            }
        }
        seeds.push(z);
    }
    let mut runs: Vec<Run> = Vec::new();
    let mut coarse_solutions: Vec<Trajectory> = Vec::new();
    let mut starts_used = 0;
    for z0 in seeds.into_iter().take(cfg.multistart) {
        // Solve on a coarse grid first; refining a piecewise cubic is exact,
        // so each finer level starts from a nearly settled active set.
        let mut solved = newton::solve_grid(coarse, z0, cfg);
        starts_used += 1;
        if levels.len() > 1 {
            // A start that lands on an already refined coarse solution would
            // only repeat the fine solves.
            let t = coarse.trajectory_of(&solved.z);
            if solved.converged && coarse_solutions.iter().any(|c| c.sup_distance(&t, 2) <= SAME_COARSE_SOLUTION * scale) {
                continue;
            }
            if solved.converged {
                coarse_solutions.push(t);
            }
        }
        for pair in levels.windows(2) {
            let z = pair[1].decision_of(&pair[0].trajectory_of(&solved.z))?;
            solved = newton::solve_grid(&pair[1], z, cfg);
        }
        let trajectory = levels[levels.len() - 1].trajectory_of(&solved.z);
        runs.push(Run {
            value: cost_of_from(&trajectory, &problem.spec, t0),
            violation: problem.violation(&trajectory),
            residual: solved.residual,
            converged: solved.converged,
            trajectory,
            polished: true,
        });
    }
    // Optimization never returns something worse than a feasible start.
    for t in starts {
        let violation = problem.violation(&t);
        if violation <= cfg.constraint_tol {
            runs.push(Run {
                value: cost_of_from(&t, &problem.spec, t0),
                violation,
                residual: f64::NAN,
                converged: false,
                trajectory: t,
                polished: false,
            });
        }
    }
    let feasible = |r: &Run| r.violation <= cfg.constraint_tol;
    runs.sort_by(|a, b| {
        feasible(b)
            .cmp(&feasible(a))
            .then(a.value.total_cmp(&b.value))
            .then_with(|| lexicographic(&a.trajectory, &b.trajectory))
    });
    let mut minimizers: Vec<Candidate> = Vec::new();
    for r in runs.iter().filter(|r| r.polished && feasible(r)) {
        if minimizers.iter().all(|m| m.trajectory.sup_distance(&r.trajectory, 2) > cfg.dedup_tol) {
            minimizers.push(Candidate { trajectory: r.trajectory.clone(), value: r.value });
        }
    }
    let any_converged = runs.iter().any(|r| r.polished && r.converged && feasible(r));
    let best = runs.into_iter().next().expect("at least one run");
    let converged = feasible(&best) && if best.polished { best.converged } else { any_converged };
    let residual = if best.polished { best.residual } else { 0.0 };
    Ok(OptResult {
        value: best.value,
        constraint_violation: best.violation,
        first_order_residual: residual,
        starts_used,
        converged,
        trajectory: best.trajectory,
        minimizers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCReport {
    pub bound: GammaCBound,
    pub energy_cap: f64,
    pub velocity_cap: f64,
    pub max_competitor_cost: f64,
    pub samples: usize,
}

/// A `C` such that every optimal trajectory from a sampled state of `Θ_r`
/// lies in `Γ_C`. For each state a competitor (the map `j` on an interval,
/// otherwise the shortest admissible brake from a geometric ladder) bounds
/// `J(opt)`, hence `½‖η′‖² ≤ J + M(T + 1)` and
/// `sup|η| ≤ |v| + √T ‖η′‖`.
pub fn gamma_c_bound(theta: &ThetaRSpec, spec: &CostSpec, horizon: f64) -> Result<GammaCReport> {
    spec.validate()?;
    if spec.p != 2.0 {
        return Err(Error::UnsupportedExponent(spec.p));
    }
    let m_term = spec.lower_bound_m() * (horizon + 1.0);
    let mut energy_cap: f64 = 0.0;
    let mut velocity_cap: f64 = 0.0;
    let mut max_cost = f64::NEG_INFINITY;
    let mut samples = 0;
    for s in theta_samples(theta)? {
        let competitor = match theta.domain {
            Domain::Interval { .. } => feasibility_map_j(&theta.domain, &s, horizon).ok(),
            _ => {
                let mut tbar = 2.0 * horizon / 3.0;
                let mut found = None;
                for _ in 0..20 {
                    if let Ok(t) = brake_maneuver(&s, tbar, horizon, &theta.domain) {
                        found = Some(t);
                        break;
                    }
                    tbar /= 2.0;
                }
                found
            }
        };
        let Some(traj) = competitor else { continue };
        let cost = cost_of(&traj, spec);
        let e = (2.0 * (cost + m_term)).max(0.0).sqrt();
        let speed = (s.v[0] * s.v[0] + s.v[1] * s.v[1]).sqrt();
        energy_cap = energy_cap.max(e);
        velocity_cap = velocity_cap.max(speed + horizon.sqrt() * e);
        max_cost = max_cost.max(cost);
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::NoFeasibleStart);
    }
    let c = energy_cap.max(velocity_cap).max(f64::MIN_POSITIVE);
    Ok(GammaCReport { bound: GammaCBound::new(c)?, energy_cap, velocity_cap, max_competitor_cost: max_cost, samples })
}

/// Deterministic sample of `Θ_r`, including its extreme velocities.
pub fn theta_samples(theta: &ThetaRSpec) -> Result<Vec<State>> {
    let mut out = Vec::new();
    match (&theta.domain, theta.mode) {
        (Domain::Interval { a, b }, ThetaMode::Interval1D) => {
            let n = 100;
            for i in 0..=n {
                let x = a + (b - a) * i as f64 / n as f64;
                let hi = (theta.r * (b - x)).cbrt();
                let lo = -(theta.r * (x - a)).cbrt();
                for j in 0..=n {
                    let v = lo + (hi - lo) * j as f64 / n as f64;
                    let s = State::new_1d(x, v);
                    if theta.domain.is_admissible_state(&s) && theta.contains(&s)? {
                        out.push(s);
                    }
                }
            }
        }
        (domain, _) => {
            let (lo, hi) = domain.bounding_box();
            let (nx, nv) = (40, 12);
            let vmax = match theta.mode {
                ThetaMode::MarginSets { .. } => theta.r,
                ThetaMode::Interval1D => theta.r.cbrt() * domain.length_scale(),
            };
            for i in 0..=nx {
                for j in 0..=nx {
                    let x = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / nx as f64,
                    ];
                    if !domain.contains(&x) {
                        continue;
                    }
                    for p in 0..=nv {
                        for q in 0..=nv {
                            let v = [
                                -vmax + 2.0 * vmax * p as f64 / nv as f64,
                                if domain.dim() == 1 { 0.0 } else { -vmax + 2.0 * vmax * q as f64 / nv as f64 },
                            ];
                            let s = State { x, v };
                            if domain.dim() == 1 && q > 0 {
                                continue;
                            }
                            if theta.contains(&s)? {
                                out.push(s);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
