//! Knot-interpolated piecewise-cubic trajectories.
//!
//! A trajectory stores positions and velocities at knot times; between two
//! knots the path is the unique cubic matching both end states, so `ξ′ = η`
//! holds identically and the acceleration is piecewise linear.

mod io;
mod maneuvers;
mod poly;

use serde::{Deserialize, Serialize};

pub use io::{read_csv, trajectory_csv, write_csv, TrajectoryMeta};
pub use maneuvers::{
    brake_maneuver, feasibility_map_j, two_phase_correction, vertex_stop, vertex_stop_bound, TwoPhase,
    MANEUVER_TOL,
};
pub(crate) use poly::roots_in;

use crate::error::{Error, Result};
use crate::geometry::{add, dot, norm, scale, sub, Domain, Point, State};
use crate::quadrature;

/// The cubic `Q_{t,x,v,y,w}` with `Q(0)=x, Q′(0)=v, Q(t)=y, Q′(t)=w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSegment {
    pub duration: f64,
    pub x: Point,
    pub v: Point,
    pub y: Point,
    pub w: Point,
    c2: Point,
    c3: Point,
}

pub fn cubic_connect(t: f64, x: Point, v: Point, y: Point, w: Point) -> Result<CubicSegment> {
    CubicSegment::new(t, x, v, y, w)
}

/// `(1/p) ∫ |Q″|^p` over the segment.
pub fn segment_energy(seg: &CubicSegment, p: f64) -> f64 {
    seg.energy(p)
}

impl CubicSegment {
    pub fn new(t: f64, x: Point, v: Point, y: Point, w: Point) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonpositiveDuration(t));
        }
        let mut c2 = [0.0; 2];
        let mut c3 = [0.0; 2];
        for k in 0..2 {
            let gap = y[k] - x[k] - v[k] * t;
            let dv = w[k] - v[k];
            c2[k] = 3.0 * gap / (t * t) - dv / t;
            c3[k] = -2.0 * gap / (t * t * t) + dv / (t * t);
        }
        Ok(CubicSegment { duration: t, x, v, y, w, c2, c3 })
    }

    /// Polynomial coefficients `[x, v, c2, c3]` of component `k`.
    pub fn coefficients(&self, k: usize) -> [f64; 4] {
        [self.x[k], self.v[k], self.c2[k], self.c3[k]]
    }

    pub fn position(&self, s: f64) -> Point {
        let f = |k: usize| self.x[k] + s * (self.v[k] + s * (self.c2[k] + s * self.c3[k]));
        [f(0), f(1)]
    }

    pub fn velocity(&self, s: f64) -> Point {
        let f = |k: usize| self.v[k] + s * (2.0 * self.c2[k] + 3.0 * s * self.c3[k]);
        [f(0), f(1)]
    }

    pub fn acceleration(&self, s: f64) -> Point {
        let f = |k: usize| 2.0 * self.c2[k] + 6.0 * s * self.c3[k];
        [f(0), f(1)]
    }

    pub fn state(&self, s: f64) -> State {
        State { x: self.position(s), v: self.velocity(s) }
    }

    pub fn energy(&self, p: f64) -> f64 {
        let a0 = self.acceleration(0.0);
        let a1 = self.acceleration(self.duration);
        accel_energy(self.duration, &a0, &a1, p)
    }
}

/// `(1/p) ∫_0^h |a(s)|^p ds` for an acceleration that is linear from `a0` to `a1`.
pub fn accel_energy(h: f64, a0: &Point, a1: &Point, p: f64) -> f64 {
    if p == 2.0 {
        return h / 6.0 * (dot(a0, a0) + dot(a0, a1) + dot(a1, a1));
    }
    let da = sub(a1, a0);
    let f = |u: f64| norm(&add(a0, &scale(&da, u))).powf(p);
    // |a| is least at u*, the only point where |a|^p may fail to be smooth.
    let dd = dot(&da, &da);
    let ustar = if dd > 0.0 { (-dot(a0, &da) / dd).clamp(0.0, 1.0) } else { 0.0 };
    let peak = norm(a0).max(norm(a1)).powf(p).max(f64::MIN_POSITIVE);
    let tol = 1e-15 * peak;
    let integral = quadrature::integrate(f, 0.0, ustar, tol) + quadrature::integrate(f, ustar, 1.0, tol);
    h * integral / p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    knots: Vec<State>,
}

impl Trajectory {
    pub fn new(dim: usize, times: Vec<f64>, knots: Vec<State>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::DimensionMismatch);
        }
        if times.len() < 2 || times.len() != knots.len() {
            return Err(Error::InvalidArgument(
                "a trajectory needs at least two knots, one state per knot time".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument("knot times must start at 0".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::NonpositiveDuration(w[1] - w[0]));
        }
        if !times.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument("non-finite knot time".into()));
        }
        let mut knots = knots;
        if dim == 1 {
            for k in &mut knots {
                k.x[1] = 0.0;
                k.v[1] = 0.0;
            }
        }
        Ok(Trajectory { dim, times, knots })
    }

    /// Rest at `x` on `[0, horizon]`.
    pub fn constant(dim: usize, x: Point, horizon: f64) -> Result<Self> {
        Trajectory::new(dim, vec![0.0, horizon], vec![State::rest(x); 2])
    }

    /// Samples `f` (a smooth state path) at the given times.
    pub fn from_fn(dim: usize, times: Vec<f64>, f: impl Fn(f64) -> State) -> Result<Self> {
        let knots = times.iter().map(|&t| f(t)).collect();
        Trajectory::new(dim, times, knots)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn knots(&self) -> &[State] {
        &self.knots
    }

    pub fn num_segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial_state(&self) -> State {
        self.knots[0]
    }

    pub fn final_state(&self) -> State {
        *self.knots.last().unwrap()
    }

    pub fn segment(&self, k: usize) -> CubicSegment {
        let (a, b) = (&self.knots[k], &self.knots[k + 1]);
        CubicSegment::new(self.times[k + 1] - self.times[k], a.x, a.v, b.x, b.v)
            .expect("knot times are strictly increasing")
    }

    pub fn segments(&self) -> impl Iterator<Item = CubicSegment> + '_ {
        (0..self.num_segments()).map(|k| self.segment(k))
    }

    /// Index of the segment containing `s` (the right one at interior knots).
    fn locate(&self, s: f64) -> usize {
        let k = self.times.partition_point(|&t| t <= s);
        k.saturating_sub(1).min(self.num_segments() - 1)
    }

    pub fn eval(&self, s: f64) -> Result<State> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&s) {
            return Err(Error::TimeOutOfRange { t: s, horizon });
        }
        let k = self.locate(s);
        if s == self.times[k] {
            return Ok(self.knots[k]);
        }
        if s == self.times[k + 1] {
            return Ok(self.knots[k + 1]);
        }
        Ok(self.segment(k).state(s - self.times[k]))
    }

    /// Total `(1/p) ∫ |η′|^p`.
    pub fn energy(&self, p: f64) -> f64 {
        self.segments().map(|seg| seg.energy(p)).sum()
    }

    /// Energy restricted to segments inside `[t0, t1]` (which must be knot times).
    pub fn energy_between(&self, t0: f64, t1: f64, p: f64) -> f64 {
        (0..self.num_segments())
            .filter(|&k| self.times[k] >= t0 && self.times[k + 1] <= t1)
            .map(|k| self.segment(k).energy(p))
            .sum()
    }

    /// `‖η′‖_{L²(0,T)}`.
    pub fn accel_l2(&self) -> f64 {
        (2.0 * self.energy(2.0)).sqrt()
    }

    /// Hermite data of this trajectory at new knot times covering `[0, T]`.
    pub fn resample(&self, times: Vec<f64>) -> Result<Trajectory> {
        let knots = times.iter().map(|&t| self.eval(t)).collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.dim, times, knots)
    }

    /// Restriction to `[0, horizon]`, keeping the original knots before it.
    pub fn truncated(&self, horizon: f64) -> Result<Trajectory> {
        if !(horizon > 0.0) || horizon > self.horizon() {
            return Err(Error::TimeOutOfRange { t: horizon, horizon: self.horizon() });
        }
        let mut times: Vec<f64> = self.times.iter().copied().filter(|&t| t < horizon).collect();
        times.push(horizon);
        self.resample(times)
    }

    /// Restriction to `[start, T]` on local time `s − start`.
    pub fn tail(&self, start: f64) -> Result<Trajectory> {
        if !(start >= 0.0) || !(start < self.horizon()) {
            return Err(Error::TimeOutOfRange { t: start, horizon: self.horizon() });
        }
        let mut pairs = vec![(0.0, self.eval(start)?)];
        pairs.extend(self.times.iter().zip(&self.knots).filter(|(t, _)| **t > start).map(|(t, k)| (t - start, *k)));
        Trajectory::from_pairs(self.dim, pairs)
    }

    /// Knots of the path that waits until `start` and then follows `self`,
    /// restricted to `[start, end]`, i.e. `s ↦ self(s − start)`.
    pub(crate) fn delayed_knots(&self, start: f64, end: f64) -> Result<Vec<(f64, State)>> {
        let span = end - start;
        let mut out: Vec<(f64, State)> = self
            .times
            .iter()
            .zip(&self.knots)
            .filter(|(t, _)| **t < span)
            .map(|(t, k)| (start + t, *k))
            .collect();
        out.push((end, self.eval(span.min(self.horizon()))?));
        Ok(out)
    }

    pub(crate) fn from_pairs(dim: usize, pairs: Vec<(f64, State)>) -> Result<Trajectory> {
        let (times, knots) = pairs.into_iter().unzip();
        Trajectory::new(dim, times, knots)
    }

    /// Largest `d(ξ(s))` found from `oversample` equispaced points per
    /// segment, refined by the exact extrema of every cubic that can be
    /// maximized in closed form (interval ends, polygon edge offsets).
    pub fn max_violation(&self, domain: &Domain, oversample: usize) -> f64 {
        let oversample = oversample.max(2);
        let mut worst = f64::NEG_INFINITY;
        for seg in self.segments() {
            let h = seg.duration;
            let mut best_j = 0;
            let mut best = f64::NEG_INFINITY;
            for j in 0..=oversample {
                let d = domain.signed_distance(&seg.position(h * j as f64 / oversample as f64));
                if d > best {
                    best = d;
                    best_j = j;
                }
            }
            worst = worst.max(best);
            match domain {
                Domain::Interval { .. } => {
                    let c = seg.coefficients(0);
                    for s in roots_in(&[c[1], 2.0 * c[2], 3.0 * c[3]], 0.0, h) {
                        worst = worst.max(domain.signed_distance(&seg.position(s)));
                    }
                }
                Domain::Polygon(p) => {
                    for (q, n) in p.vertices().iter().zip(p.normals()) {
                        let [_, v0, c2, c3] = [0, 1, 2, 3].map(|i| {
                            n[0] * seg.coefficients(0)[i] + n[1] * seg.coefficients(1)[i]
                        });
                        for s in roots_in(&[v0, 2.0 * c2, 3.0 * c3], 0.0, h) {
                            worst = worst.max(dot(n, &sub(&seg.position(s), q)));
                        }
                    }
                }
                Domain::Disc { .. } => {
                    // Golden-section refinement around the best sample.
                    let step = h / oversample as f64;
                    let mut lo = (best_j as f64 - 1.0).max(0.0) * step;
                    let mut hi = ((best_j as f64 + 1.0) * step).min(h);
                    let g = |s: f64| domain.signed_distance(&seg.position(s));
                    let r = 0.5 * (5f64.sqrt() - 1.0);
                    for _ in 0..60 {
                        let m1 = hi - r * (hi - lo);
                        let m2 = lo + r * (hi - lo);
                        if g(m1) < g(m2) {
                            lo = m1;
                        } else {
                            hi = m2;
                        }
                    }
                    worst = worst.max(g(0.5 * (lo + hi)));
                }
            }
        }
        worst
    }

    pub fn is_admissible(&self, domain: &Domain, tol: f64, oversample: usize) -> bool {
        self.dim == domain.dim()
            && domain.is_admissible_state(&self.knots[0])
            && self.max_violation(domain, oversample) <= tol
    }

    /// `sup_t |η(t)|`, exact: knots plus the interior critical points of `|η|²`.
    pub fn velocity_sup(&self) -> f64 {
        let mut best = self.knots.iter().map(|k| norm(&k.v)).fold(0.0, f64::max);
        for seg in self.segments() {
            // d/ds |η|² = 2 η·η′, a cubic in s.
            let mut c = [0.0; 4];
            for k in 0..self.dim {
                let [_, v, c2, c3] = seg.coefficients(k);
                let eta = [v, 2.0 * c2, 3.0 * c3];
                let deta = [2.0 * c2, 6.0 * c3];
                for (i, e) in eta.iter().enumerate() {
                    for (j, d) in deta.iter().enumerate() {
                        c[i + j] += e * d;
                    }
                }
            }
            for s in roots_in(&c, 0.0, seg.duration) {
                best = best.max(norm(&seg.velocity(s)));
            }
        }
        best
    }

    pub fn in_gamma_c(&self, bound: &GammaCBound) -> bool {
        self.velocity_sup() <= bound.c && self.accel_l2() <= bound.c
    }

    /// Largest pointwise distance `|Δξ| + |Δη|` between two trajectories,
    /// evaluated on the union of both knot grids refined `refine` times.
    pub fn sup_distance(&self, other: &Trajectory, refine: usize) -> f64 {
        let mut grid: Vec<f64> = self.times.iter().chain(other.times.iter()).copied().collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let end = self.horizon().min(other.horizon());
        let mut best: f64 = 0.0;
        for w in grid.windows(2) {
            for j in 0..refine.max(1) {
                let t = w[0] + (w[1] - w[0]) * j as f64 / refine.max(1) as f64;
                if t > end {
                    continue;
                }
                let (a, b) = (self.eval(t).unwrap(), other.eval(t).unwrap());
                best = best.max(norm(&sub(&a.x, &b.x)) + norm(&sub(&a.v, &b.v)));
            }
        }
        let (a, b) = (self.eval(end).unwrap(), other.eval(end).unwrap());
        best.max(norm(&sub(&a.x, &b.x)) + norm(&sub(&a.v, &b.v)))
    }
}

/// The set `Γ_C`: velocity sup and acceleration `L²` norm both at most `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCBound {
    pub c: f64,
}

impl GammaCBound {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
        }
        Ok(GammaCBound { c })
    }
}
