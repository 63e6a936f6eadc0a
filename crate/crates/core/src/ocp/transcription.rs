//! Direct transcription: the decision vector holds the knot states
//! `(x_k, v_k)`, `k ≥ 1`, and every quantity is assembled segment by segment
//! from the Hermite basis, so gradients and Hessians are exact.
//!
//! Containment enters through sampled constraints: each boundary functional
//! evaluated at fixed points of each segment. Samples keep the merit smooth;
//! exact per-segment maxima then decide where extra samples are needed.

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, State};
use crate::quadrature::{gauss_legendre, GAUSS4};
use crate::trajectory::{roots_in, Trajectory};

use super::banded::Banded;
use super::cost::CostSpec;

/// A fully specified control problem on `[t0, T]`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub start: State,
    pub domain: Domain,
    pub spec: CostSpec,
    pub start_time: f64,
    pub horizon: f64,
    /// Pins `η(T)`.
    pub terminal_velocity: Option<Point>,
    /// Imposes `η_i(s) ≥ w` on every component.
    pub velocity_floor: Option<f64>,
    pub warm_starts: Vec<Trajectory>,
}

impl Problem {
    pub fn new(start: State, domain: Domain, spec: CostSpec, horizon: f64) -> Self {
        Problem {
            start,
            domain,
            spec,
            start_time: 0.0,
            horizon,
            terminal_velocity: None,
            velocity_floor: None,
            warm_starts: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.horizon - self.start_time
    }

    /// Largest violation of containment, the velocity floor and the
    /// terminal pin.
    pub fn violation(&self, traj: &Trajectory) -> f64 {
        let mut worst = traj.max_violation(&self.domain, 8).max(0.0);
        let d = self.domain.dim();
        if let Some(w) = self.velocity_floor {
            for seg in traj.segments() {
                for i in 0..d {
                    let [_, v, c2, c3] = seg.coefficients(i);
                    let mut cand = vec![0.0, seg.duration];
                    if c3 != 0.0 {
                        let s = -c2 / (3.0 * c3);
                        if s > 0.0 && s < seg.duration {
                            cand.push(s);
                        }
                    }
                    for s in cand {
                        worst = worst.max(w - (v + 2.0 * c2 * s + 3.0 * c3 * s * s));
                    }
                }
            }
        }
        if let Some(w) = self.terminal_velocity {
            let end = traj.final_state();
            for i in 0..d {
                worst = worst.max((end.v[i] - w[i]).abs());
            }
        }
        worst
    }
}

/// A sampled constraint: functional `func` at `u = s/h` of its segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub(crate) func: usize,
    pub(crate) u: f64,
    pub lambda: f64,
}

/// AL state: sampled constraints per segment with their multipliers, and
/// the penalty parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub samples: Vec<Vec<Sample>>,
    pub rho: f64,
    /// Samples are enforced as `c + margin ≤ 0`.
    pub margin: f64,
}

impl Penalty {
    pub fn multipliers_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.samples.iter_mut().flatten().map(|s| &mut s.lambda)
    }
}

/// Sample positions per segment; `u = 0` is the previous segment's `u = 1`.
const BASE_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy)]
enum Functional {
    /// `n·ξ − o`.
    Linear { n: Point, o: f64 },
    /// `(|ξ − c|² − R²) / (2R)`.
    Disc { c: Point, r: f64 },
    /// `w − η_i`.
    Floor { i: usize, w: f64 },
}

const MAXL: usize = 8;
type Local = [f64; MAXL];
type LocalHess = [[f64; MAXL]; MAXL];

/// Position and velocity weights of `(x₀, v₀, x₁, v₁)` at `u = s/h`.
#[inline]
fn hermite(u: f64, h: f64) -> ([f64; 4], [f64; 4]) {
    let u2 = u * u;
    let u3 = u2 * u;
    (
        [2.0 * u3 - 3.0 * u2 + 1.0, h * (u3 - 2.0 * u2 + u), -2.0 * u3 + 3.0 * u2, h * (u3 - u2)],
        [(6.0 * u2 - 6.0 * u) / h, 3.0 * u2 - 4.0 * u + 1.0, (-6.0 * u2 + 6.0 * u) / h, 3.0 * u2 - 2.0 * u],
    )
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Need {
    Value,
    Gradient,
    Hessian,
}

pub(crate) struct Assembled {
    pub f: f64,
    /// Sum of the magnitudes of the contributions to `f`, for a rounding estimate.
    pub fabs: f64,
    pub g: Vec<f64>,
    pub h: Option<Banded>,
}

pub struct Transcription<'a> {
    problem: &'a Problem,
    dim: usize,
    times: Vec<f64>,
    functionals: Vec<Functional>,
    fixed: Vec<bool>,
    rule: Vec<(f64, f64)>,
}

impl<'a> Transcription<'a> {
    /// `times` are local knot times from `0` to the problem duration.
    pub fn new(problem: &'a Problem, times: Vec<f64>) -> Result<Self> {
        let dim = problem.domain.dim();
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("knot times must increase from 0".into()));
        }
        if (times[times.len() - 1] - problem.duration()).abs() > 1e-12 * problem.duration().max(1.0) {
            return Err(Error::InvalidArgument("knot times must end at the problem duration".into()));
        }
        let mut functionals = Vec::new();
        match &problem.domain {
            Domain::Interval { a, b } => {
                functionals.push(Functional::Linear { n: [1.0, 0.0], o: *b });
                functionals.push(Functional::Linear { n: [-1.0, 0.0], o: -*a });
            }
            Domain::Polygon(p) => {
                for (n, v) in p.normals().iter().zip(p.vertices()) {
                    functionals.push(Functional::Linear { n: *n, o: n[0] * v[0] + n[1] * v[1] });
                }
            }
            Domain::Disc { center, radius } => functionals.push(Functional::Disc { c: *center, r: *radius }),
        }
        if let Some(w) = problem.velocity_floor {
            for i in 0..dim {
                functionals.push(Functional::Floor { i, w });
            }
        }
        let nvar = 2 * dim * (times.len() - 1);
        let mut fixed = vec![false; nvar];
        if problem.terminal_velocity.is_some() {
            for i in 0..dim {
                fixed[nvar - dim + i] = true;
            }
        }
        let rule = if problem.spec.p == 2.0 { Vec::new() } else { gauss_legendre(16) };
        Ok(Transcription { problem, dim, times, functionals, fixed, rule })
    }

    pub fn num_vars(&self) -> usize {
        self.fixed.len()
    }

    /// Base samples with zero multipliers.
    pub fn penalty(&self, rho: f64, margin: f64) -> Penalty {
        let base: Vec<Sample> = (0..self.functionals.len())
            .flat_map(|func| (1..=BASE_SAMPLES).map(move |j| Sample { func, u: j as f64 / BASE_SAMPLES as f64, lambda: 0.0 }))
            .collect();
        Penalty { samples: vec![base; self.times.len() - 1], rho, margin }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Knot states of `traj` (resampled onto the grid when needed), with
    /// the pinned terminal velocity imposed.
    pub fn decision_of(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        if traj.dim() != self.dim {
            return Err(Error::DimensionMismatch);
        }
        let same = traj.times().len() == self.times.len()
            && traj.times().iter().zip(&self.times).all(|(a, b)| a == b);
        let knots: Vec<State> = if same {
            traj.knots().to_vec()
        } else {
            traj.resample(self.times.clone())?.knots().to_vec()
        };
        let d = self.dim;
        let mut z = Vec::with_capacity(self.num_vars());
        for k in &knots[1..] {
            z.extend_from_slice(&k.x[..d]);
            z.extend_from_slice(&k.v[..d]);
        }
        self.pin(&mut z);
        Ok(z)
    }

    fn pin(&self, z: &mut [f64]) {
        if let Some(w) = self.problem.terminal_velocity {
            let n = z.len();
            for i in 0..self.dim {
                z[n - self.dim + i] = w[i];
            }
        }
    }

    pub fn trajectory_of(&self, z: &[f64]) -> Trajectory {
        let d = self.dim;
        let mut knots = vec![self.problem.start];
        for block in z.chunks(2 * d) {
            let mut s = State::rest([0.0; 2]);
            s.x[..d].copy_from_slice(&block[..d]);
            s.v[..d].copy_from_slice(&block[d..]);
            knots.push(s);
        }
        Trajectory::new(d, self.times.clone(), knots).expect("grid validated at construction")
    }

    fn local(&self, z: &[f64], k: usize) -> Local {
        let d = self.dim;
        let mut q = [0.0; MAXL];
        if k == 0 {
            let s = &self.problem.start;
            q[..d].copy_from_slice(&s.x[..d]);
            q[d..2 * d].copy_from_slice(&s.v[..d]);
            q[2 * d..4 * d].copy_from_slice(&z[..2 * d]);
        } else {
            q[..4 * d].copy_from_slice(&z[(k - 1) * 2 * d..(k + 1) * 2 * d]);
        }
        q
    }

    /// Scalar cubic `(X₀, V₀, c₂, c₃)` of `Σ_i n_i ξ_i` on segment data `q`.
    fn projected(&self, q: &Local, n: &Point, h: f64) -> [f64; 4] {
        let d = self.dim;
        let mut x0 = 0.0;
        let mut v0 = 0.0;
        let mut x1 = 0.0;
        let mut v1 = 0.0;
        for i in 0..d {
            x0 += n[i] * q[i];
            v0 += n[i] * q[d + i];
            x1 += n[i] * q[2 * d + i];
            v1 += n[i] * q[3 * d + i];
        }
        let gap = x1 - x0;
        [x0, v0, 3.0 * gap / (h * h) - (2.0 * v0 + v1) / h, -2.0 * gap / (h * h * h) + (v0 + v1) / (h * h)]
    }

    /// Slot value, its local gradient, the curvature factor `κ` and the
    /// position weights `α` at the maximizer; the local Hessian is
    /// `κ α αᵀ` on the position block of each component.
    /// Exact maximum of a functional over a segment and its location `s`.
    fn segment_max(&self, q: &Local, h: f64, f: &Functional) -> (f64, f64) {
        let d = self.dim;
        match *f {
            Functional::Linear { n, o } => {
                let [x0, v0, c2, c3] = self.projected(q, &n, h);
                let phi = |s: f64| x0 + s * (v0 + s * (c2 + s * c3));
                let mut best = (phi(0.0), 0.0);
                // φ′ = v0 + 2c2 s + 3c3 s²
                let crit = quadratic_roots(3.0 * c3, 2.0 * c2, v0);
                for s in std::iter::once(h).chain(crit.into_iter().filter(|s| *s > 0.0 && *s < h)) {
                    if phi(s) > best.0 {
                        best = (phi(s), s);
                    }
                }
                (best.0 - o, best.1)
            }
            Functional::Disc { c, r } => {
                let mut poly = [[0.0; 4]; 2];
                for i in 0..d {
                    let mut e = [0.0; 2];
                    e[i] = 1.0;
                    poly[i] = self.projected(q, &e, h);
                    poly[i][0] -= c[i];
                }
                let value = |s: f64| {
                    let mut sq = 0.0;
                    for p in poly.iter().take(d) {
                        let y = p[0] + s * (p[1] + s * (p[2] + s * p[3]));
                        sq += y * y;
                    }
                    (sq - r * r) / (2.0 * r)
                };
                // d/ds |ξ − c|² / 2 = Σ y y′, degree 5.
                let mut deriv = [0.0; 6];
                for p in poly.iter().take(d) {
                    let dp = [p[1], 2.0 * p[2], 3.0 * p[3]];
                    for (a, pa) in p.iter().enumerate() {
                        for (b, db) in dp.iter().enumerate() {
                            deriv[a + b] += pa * db;
                        }
                    }
                }
                let mut best = (value(0.0), 0.0);
                for s in std::iter::once(h).chain(roots_in(&deriv, 0.0, h)) {
                    if value(s) > best.0 {
                        best = (value(s), s);
                    }
                }
                best
            }
            Functional::Floor { i, w } => {
                let mut e = [0.0; 2];
                e[i] = 1.0;
                let [_, v0, c2, c3] = self.projected(q, &e, h);
                let gap = |s: f64| w - (v0 + s * (2.0 * c2 + 3.0 * c3 * s));
                let mut best = (gap(0.0), 0.0);
                let mut cand = vec![h];
                if c3 != 0.0 {
                    cand.push(-c2 / (3.0 * c3));
                }
                for s in cand.into_iter().filter(|s| *s > 0.0 && *s <= h) {
                    if gap(s) > best.0 {
                        best = (gap(s), s);
                    }
                }
                best
            }
        }
    }

    /// Value and gradient of a functional at `u = s/h`; the disc also
    /// reports its curvature `1/R` along the position weights.
    fn eval_at(&self, q: &Local, h: f64, f: &Functional, u: f64) -> (f64, Local, f64, [f64; 4]) {
        let d = self.dim;
        let (a, b) = hermite(u, h);
        let mut grad = [0.0; MAXL];
        let pos = |i: usize| (0..4).map(|m| a[m] * q[m * d + i]).sum::<f64>();
        match *f {
            Functional::Linear { n, o } => {
                let mut val = -o;
                for i in 0..d {
                    val += n[i] * pos(i);
                    for m in 0..4 {
                        grad[m * d + i] = a[m] * n[i];
                    }
                }
                (val, grad, 0.0, a)
            }
            Functional::Disc { c, r } => {
                let mut sq = 0.0;
                for i in 0..d {
                    let y = pos(i) - c[i];
                    sq += y * y;
                    for m in 0..4 {
                        grad[m * d + i] = a[m] * y / r;
                    }
                }
                ((sq - r * r) / (2.0 * r), grad, 1.0 / r, a)
            }
            Functional::Floor { i, w } => {
                let eta: f64 = (0..4).map(|m| b[m] * q[m * d + i]).sum();
                for m in 0..4 {
                    grad[m * d + i] = -b[m];
                }
                (w - eta, grad, 0.0, a)
            }
        }
    }

    /// Updates the multipliers from the samples at `z` and returns the
    /// largest tightened sample value `c + margin`.
    pub(crate) fn update_multipliers(&self, z: &[f64], pen: &mut Penalty) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let (rho, margin) = (pen.rho, pen.margin);
        for (k, samples) in pen.samples.iter_mut().enumerate() {
            let h = self.times[k + 1] - self.times[k];
            let q = self.local(z, k);
            for smp in samples.iter_mut() {
                let c = self.eval_at(&q, h, &self.functionals[smp.func], smp.u).0 + margin;
                worst = worst.max(c);
                smp.lambda = (smp.lambda + rho * c).max(0.0);
            }
        }
        worst
    }

    /// Adds a sample at the exact maximizer of every segment functional
    /// whose maximum exceeds `threshold`. Returns how many were added.
    pub(crate) fn refine(&self, z: &[f64], pen: &mut Penalty, threshold: f64) -> usize {
        let mut added = 0;
        for (k, samples) in pen.samples.iter_mut().enumerate() {
            let h = self.times[k + 1] - self.times[k];
            let q = self.local(z, k);
            for (func, f) in self.functionals.iter().enumerate() {
                let (val, s) = self.segment_max(&q, h, f);
                let u = s / h;
                if val > threshold && u > 0.0 && samples.iter().all(|p| p.func != func || (p.u - u).abs() > 1e-9) {
                    samples.push(Sample { func, u, lambda: 0.0 });
                    added += 1;
                }
            }
        }
        added
    }

    /// Exact per-segment maxima of every functional; containment holds
    /// when all are `≤ 0`.
    pub fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.functionals.len() * (self.times.len() - 1));
        for k in 0..self.times.len() - 1 {
            let h = self.times[k + 1] - self.times[k];
            let q = self.local(z, k);
            for f in &self.functionals {
                out.push(self.segment_max(&q, h, f).0);
            }
        }
        out
    }

    fn energy(&self, q: &Local, h: f64, need: Need, g: &mut Local, hs: &mut LocalHess) -> f64 {
        let d = self.dim;
        let (h2, p) = (h * h, self.problem.spec.p);
        let g0 = [-6.0 / h2, -4.0 / h, 6.0 / h2, -2.0 / h];
        let g1 = [6.0 / h2, 2.0 / h, -6.0 / h2, 4.0 / h];
        let mut a0 = [0.0; 2];
        let mut a1 = [0.0; 2];
        for i in 0..d {
            for m in 0..4 {
                a0[i] += g0[m] * q[m * d + i];
                a1[i] += g1[m] * q[m * d + i];
            }
        }
        if p == 2.0 {
            let c = h / 6.0;
            let mut e = 0.0;
            for i in 0..d {
                e += c * (a0[i] * a0[i] + a0[i] * a1[i] + a1[i] * a1[i]);
                if need >= Need::Gradient {
                    let (da0, da1) = (c * (2.0 * a0[i] + a1[i]), c * (a0[i] + 2.0 * a1[i]));
                    for m in 0..4 {
                        g[m * d + i] += da0 * g0[m] + da1 * g1[m];
                    }
                }
                if need == Need::Hessian {
                    for m in 0..4 {
                        for n in 0..4 {
                            hs[m * d + i][n * d + i] +=
                                c * (2.0 * g0[m] * g0[n] + g0[m] * g1[n] + g1[m] * g0[n] + 2.0 * g1[m] * g1[n]);
                        }
                    }
                }
            }
            return e;
        }
        // Fixed Gauss rule so the derivatives are those of the computed value.
        let mut e = 0.0;
        for &(u, w) in &self.rule {
            let mut a = [0.0; 2];
            let mut delta = [0.0; 4];
            for m in 0..4 {
                delta[m] = (1.0 - u) * g0[m] + u * g1[m];
            }
            for i in 0..d {
                a[i] = (1.0 - u) * a0[i] + u * a1[i];
            }
            let r2: f64 = a[..d].iter().map(|x| x * x).sum();
            let r = r2.sqrt();
            e += h * w * r.powf(p) / p;
            if need >= Need::Gradient && r > 0.0 {
                let s = h * w * r.powf(p - 2.0);
                for i in 0..d {
                    for m in 0..4 {
                        g[m * d + i] += s * a[i] * delta[m];
                    }
                }
            }
            if need == Need::Hessian {
                let rr = r.max(1e-12);
                let s = h * w * rr.powf(p - 2.0);
                let t = h * w * (p - 2.0) * rr.powf(p - 4.0);
                for i in 0..d {
                    for j in 0..d {
                        let coef = if i == j { s } else { 0.0 } + t * a[i] * a[j];
                        for m in 0..4 {
                            for n in 0..4 {
                                hs[m * d + i][n * d + j] += coef * delta[m] * delta[n];
                            }
                        }
                    }
                }
            }
        }
        e
    }

    fn running(&self, q: &Local, h: f64, t_start: f64, need: Need, g: &mut Local, hs: &mut LocalHess) -> f64 {
        let d = self.dim;
        let spec = &self.problem.spec;
        let mut total = 0.0;
        for &(u, w) in GAUSS4.iter() {
            let (a, b) = hermite(u, h);
            let mut s = State::rest([0.0; 2]);
            for i in 0..d {
                for m in 0..4 {
                    s.x[i] += a[m] * q[m * d + i];
                    s.v[i] += b[m] * q[m * d + i];
                }
            }
            let t = t_start + u * h;
            let hw = h * w;
            if need == Need::Value {
                total += hw * spec.running_value(&s, t);
                continue;
            }
            let e = spec.running_eval(&s, t);
            total += hw * e.value;
            for i in 0..d {
                for m in 0..4 {
                    g[m * d + i] += hw * (e.grad[i] * a[m] + e.grad[2 + i] * b[m]);
                }
            }
            if need == Need::Hessian {
                for i in 0..d {
                    for j in 0..d {
                        let (xx, xv, vx, vv) = (e.hess[i][j], e.hess[i][2 + j], e.hess[2 + i][j], e.hess[2 + i][2 + j]);
                        if xx == 0.0 && xv == 0.0 && vx == 0.0 && vv == 0.0 {
                            continue;
                        }
                        for m in 0..4 {
                            for n in 0..4 {
                                hs[m * d + i][n * d + j] +=
                                    hw * (a[m] * a[n] * xx + a[m] * b[n] * xv + b[m] * a[n] * vx + b[m] * b[n] * vv);
                            }
                        }
                    }
                }
            }
        }
        total
    }

    pub(crate) fn assemble(&self, z: &[f64], pen: Option<&Penalty>, need: Need) -> Assembled {
        let d = self.dim;
        let n = self.num_vars();
        let nseg = self.times.len() - 1;
        let mut f = 0.0;
        let mut fabs = 0.0;
        let mut g = if need >= Need::Gradient { vec![0.0; n] } else { Vec::new() };
        let mut hb = if need == Need::Hessian { Some(Banded::zeros(n, 4 * d - 1)) } else { None };
        let t0 = self.problem.start_time;
        for k in 0..nseg {
            let h = self.times[k + 1] - self.times[k];
            let q = self.local(z, k);
            let mut lg = [0.0; MAXL];
            let mut lh = [[0.0; MAXL]; MAXL];
            let e = self.energy(&q, h, need, &mut lg, &mut lh);
            f += e;
            fabs += e.abs();
            if self.problem.spec.has_running() {
                let r = self.running(&q, h, t0 + self.times[k], need, &mut lg, &mut lh);
                f += r;
                fabs += r.abs();
            }
            if let Some(pen) = pen {
                for smp in &pen.samples[k] {
                    let lam = smp.lambda;
                    let (c, cg, kappa, a) = self.eval_at(&q, h, &self.functionals[smp.func], smp.u);
                    let m = lam + pen.rho * (c + pen.margin);
                    if m <= 0.0 {
                        f -= lam * lam / (2.0 * pen.rho);
                        fabs += lam * lam / (2.0 * pen.rho);
                        continue;
                    }
                    f += (m * m - lam * lam) / (2.0 * pen.rho);
                    fabs += (m * m + lam * lam) / (2.0 * pen.rho);
                    if need >= Need::Gradient {
                        for l in 0..4 * d {
                            lg[l] += m * cg[l];
                        }
                    }
                    if need == Need::Hessian {
                        for l in 0..4 * d {
                            for r in 0..4 * d {
                                lh[l][r] += pen.rho * cg[l] * cg[r];
                            }
                        }
                        if kappa != 0.0 {
                            for i in 0..d {
                                for mm in 0..4 {
                                    for nn in 0..4 {
                                        lh[mm * d + i][nn * d + i] += m * kappa * a[mm] * a[nn];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if need >= Need::Gradient {
                let base = (k * 2 * d) as isize - 2 * d as isize;
                for l in 0..4 * d {
                    let gi = base + l as isize;
                    if gi < 0 {
                        continue;
                    }
                    g[gi as usize] += lg[l];
                    if let Some(hb) = hb.as_mut() {
                        for r in 0..=l {
                            let gj = base + r as isize;
                            if gj >= 0 && lh[l][r] != 0.0 {
                                hb.add(gi as usize, gj as usize, lh[l][r]);
                            }
                        }
                    }
                }
            }
        }
        if self.problem.spec.has_terminal() {
            let base = n - 2 * d;
            let mut s = State::rest([0.0; 2]);
            s.x[..d].copy_from_slice(&z[base..base + d]);
            s.v[..d].copy_from_slice(&z[base + d..]);
            let e = self.problem.spec.terminal_eval(&s, self.problem.horizon);
            f += e.value;
            fabs += e.value.abs();
            if need >= Need::Gradient {
                let map = |c: usize| if c < 2 { c } else { d + c - 2 };
                for c in (0..4).filter(|c| c % 2 < d) {
                    g[base + map(c)] += e.grad[c];
                    if let Some(hb) = hb.as_mut() {
                        for r in (0..4).filter(|r| r % 2 < d) {
                            if map(r) <= map(c) && e.hess[c][r] != 0.0 {
                                hb.add(base + map(c), base + map(r), e.hess[c][r]);
                            }
                        }
                    }
                }
            }
        }
        if need >= Need::Gradient {
            for (i, fx) in self.fixed.iter().enumerate() {
                if *fx {
                    g[i] = 0.0;
                    if let Some(hb) = hb.as_mut() {
                        hb.set_identity_row(i);
                    }
                }
            }
        }
        Assembled { f, fabs, g, h: hb }
    }

    pub fn value(&self, z: &[f64], pen: Option<&Penalty>) -> f64 {
        self.assemble(z, pen, Need::Value).f
    }

    pub fn gradient(&self, z: &[f64], pen: Option<&Penalty>) -> Vec<f64> {
        self.assemble(z, pen, Need::Gradient).g
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed[i]
    }
}

/// Real roots of `a s² + b s + c`.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Stable pair.
    let qq = -0.5 * (b + b.signum() * sq);
    let mut out = vec![qq / a];
    if qq != 0.0 {
        out.push(c / qq);
    }
    out
}
