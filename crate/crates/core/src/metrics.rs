//! Kantorovich–Rubinstein distances between empirical state measures and the
//! ½-Hölder diagnostic for `t ↦ m(t)`.
//!
//! The ground metric on states is `|Δx| + |Δv|`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{norm, sub, State};
use crate::mfg::{pushforward, EmpiricalStateMeasure, TrajectoryMeasure};
use crate::trajectory::GammaCBound;

/// Largest support handled by the assignment solver.
pub const MAX_EXACT_ATOMS: usize = 2000;

pub fn ground_distance(a: &State, b: &State) -> f64 {
    norm(&sub(&a.x, &b.x)) + norm(&sub(&a.v, &b.v))
}

fn is_uniform(m: &EmpiricalStateMeasure) -> bool {
    let w = 1.0 / m.len() as f64;
    m.points.iter().all(|p| (p.1 - w).abs() <= 1e-12)
}

/// Exact W1 between two uniform clouds of equal size, by optimal assignment.
pub fn w1_exact(a: &EmpiricalStateMeasure, b: &EmpiricalStateMeasure) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::UnequalSupportSize(n, b.len()));
    }
    if n > MAX_EXACT_ATOMS {
        return Err(Error::TooManyAtoms { n, limit: MAX_EXACT_ATOMS });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty measure".into()));
    }
    if !is_uniform(a) || !is_uniform(b) {
        return Err(Error::NonuniformWeights);
    }
    let cost: Vec<Vec<f64>> = a
        .points
        .par_iter()
        .map(|(p, _)| b.points.iter().map(|(q, _)| ground_distance(p, q)).collect())
        .collect();
    let matching = assignment(&cost);
    let total: f64 = matching.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / n as f64)
}

/// Minimum-cost perfect matching of a square matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
pub fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}

/// W1 between weighted point masses on the line, `∫|F_a − F_b|`.
pub fn w1_line(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = a.iter().copied().chain(b.iter().map(|&(x, w)| (x, -w))).collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut total = 0.0;
    let mut cdf = 0.0;
    for pair in pts.windows(2) {
        cdf += pair[0].1;
        total += cdf.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

fn coords(s: &State, dim: usize) -> [f64; 4] {
    if dim == 1 {
        [s.x[0], s.v[0], 0.0, 0.0]
    } else {
        [s.x[0], s.x[1], s.v[0], s.v[1]]
    }
}

/// Average over `n_projections` random unit directions in `(x, v)` of the
/// W1 of the projected measures. The state space is 2-dimensional when
/// every second coordinate vanishes, 4-dimensional otherwise.
/// Projections are Euclidean, so the estimate never exceeds `w1_exact`.
pub fn w1_sliced(a: &EmpiricalStateMeasure, b: &EmpiricalStateMeasure, n_projections: usize, seed: u64) -> Result<f64> {
    if n_projections == 0 {
        return Err(Error::InvalidArgument("need at least one projection".into()));
    }
    let planar = |m: &EmpiricalStateMeasure| m.points.iter().any(|(s, _)| s.x[1] != 0.0 || s.v[1] != 0.0);
    let dim = if planar(a) || planar(b) { 2 } else { 1 };
    let k = 2 * dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<[f64; 4]> = (0..n_projections)
        .map(|_| loop {
            let mut d = [0.0; 4];
            for c in d.iter_mut().take(k) {
                *c = StandardNormal.sample(&mut rng);
            }
            let len = d.iter().map(|c| c * c).sum::<f64>().sqrt();
            if len > 1e-12 {
                break d.map(|c| c / len);
            }
        })
        .collect();
    let project = |m: &EmpiricalStateMeasure, d: &[f64; 4]| -> Vec<(f64, f64)> {
        m.points
            .iter()
            .map(|(s, w)| (coords(s, dim).iter().zip(d).map(|(x, y)| x * y).sum(), *w))
            .collect()
    };
    let sum: f64 = dirs.par_iter().map(|d| w1_line(&project(a, d), &project(b, d))).collect::<Vec<_>>().iter().sum();
    Ok(sum / n_projections as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Exact,
    /// `Σ_k w_k |atom_k(t) − atom_k(s)|`, an upper bound on W1.
    AtomCoupling,
    Sliced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderPair {
    pub s: f64,
    pub t: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub pairs: Vec<HolderPair>,
    pub distance: DistanceKind,
    /// Least-squares slope of `log d` against `log |t − s|`; absent when
    /// fewer than two pairs have positive distance.
    pub fitted_exponent: Option<f64>,
    pub fitted_constant: Option<f64>,
    /// `C̃ = C(√T + 1)`.
    pub bound_constant: f64,
    /// Pairs with `d > C̃ |t − s|^{1/2}`.
    pub violations: usize,
}

impl HolderReport {
    pub fn violated(&self) -> bool {
        self.violations > 0
    }
}

/// Projections used when exact distances are not requested.
const HOLDER_PROJECTIONS: usize = 256;

/// Distances between `m(s)` and `m(t)` for all pairs of `times`, a log-log
/// fit, and the check against `C̃|t − s|^{1/2}`. With `use_exact`, uniform
/// marginals of equal size use exact W1 and any other shape uses the atom
/// coupling, which bounds W1 from above. Otherwise sliced W1 is used.
pub fn holder_check(mu: &TrajectoryMeasure, times: &[f64], use_exact: bool, bound: &GammaCBound) -> Result<HolderReport> {
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.len() < 2 {
        return Err(Error::InvalidArgument("need at least two distinct times".into()));
    }
    let marginals = times.iter().map(|&t| pushforward(mu, t)).collect::<Result<Vec<_>>>()?;
    let exact_ok = use_exact && marginals.iter().all(|m| is_uniform(m) && m.len() <= MAX_EXACT_ATOMS);
    let kind = match (use_exact, exact_ok) {
        (true, true) => DistanceKind::Exact,
        (true, false) => DistanceKind::AtomCoupling,
        (false, _) => DistanceKind::Sliced,
    };
    let mut index = Vec::new();
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            index.push((i, j));
        }
    }
    let distances = index
        .par_iter()
        .map(|&(i, j)| match kind {
            DistanceKind::Exact => w1_exact(&marginals[i], &marginals[j]),
            // Atom by atom: marginals merge atoms that share a start at t = 0.
            DistanceKind::AtomCoupling => mu
                .atoms()
                .iter()
                .map(|a| Ok(a.weight * ground_distance(&a.trajectory.eval(times[i])?, &a.trajectory.eval(times[j])?)))
                .sum(),
            DistanceKind::Sliced => w1_sliced(&marginals[i], &marginals[j], HOLDER_PROJECTIONS, 0),
        })
        .collect::<Result<Vec<f64>>>()?;
    let pairs: Vec<HolderPair> = index
        .iter()
        .zip(&distances)
        .map(|(&(i, j), &d)| HolderPair { s: times[i], t: times[j], distance: d })
        .collect();
    let horizon = mu.horizon();
    let bound_constant = bound.c * (horizon.sqrt() + 1.0);
    let violations =
        pairs.iter().filter(|p| p.distance > bound_constant * (p.t - p.s).sqrt() * (1.0 + 1e-9)).count();
    let logs: Vec<(f64, f64)> =
        pairs.iter().filter(|p| p.distance > 0.0).map(|p| ((p.t - p.s).ln(), p.distance.ln())).collect();
    let (fitted_exponent, fitted_constant) = match fit_line(&logs) {
        Some((slope, intercept)) => (Some(slope), Some(intercept.exp())),
        None => (None, None),
    };
    Ok(HolderReport { pairs, distance: kind, fitted_exponent, fitted_constant, bound_constant, violations })
}

/// Least-squares `(slope, intercept)`, `None` without two distinct abscissae.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;
    use rand::Rng;

    fn cloud(pts: &[(f64, f64)]) -> EmpiricalStateMeasure {
        EmpiricalStateMeasure::uniform(pts.iter().map(|&(x, v)| State::new_1d(x, v)).collect()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> EmpiricalStateMeasure {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(-1.0..1.0) + shift, rng.gen_range(-1.0..1.0))).collect();
        cloud(&pts)
    }

    /// Brute force over all permutations.
    fn brute_force(a: &EmpiricalStateMeasure, b: &EmpiricalStateMeasure) -> f64 {
        fn go(i: usize, a: &EmpiricalStateMeasure, b: &EmpiricalStateMeasure, used: &mut Vec<bool>) -> f64 {
            if i == a.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(ground_distance(&a.points[i].0, &b.points[j].0) + go(i + 1, a, b, used));
                    used[j] = false;
                }
            }
            best
        }
        go(0, a, b, &mut vec![false; b.len()]) / a.len() as f64
    }

    #[test]
    fn exact_examples() {
        let a = cloud(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(w1_exact(&a, &a).unwrap(), 0.0);
        let b = cloud(&[(0.5, 0.0), (1.5, 0.0)]);
        assert!((w1_exact(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(w1_exact(&a, &cloud(&[(0.0, 0.0)])).unwrap_err(), Error::UnequalSupportSize(2, 1));
        let lopsided = EmpiricalStateMeasure::new(vec![(State::new_1d(0.0, 0.0), 0.3), (State::new_1d(1.0, 0.0), 0.7)]).unwrap();
        assert_eq!(w1_exact(&a, &lopsided).unwrap_err(), Error::NonuniformWeights);
        let big = cloud(&vec![(0.0, 0.0); MAX_EXACT_ATOMS + 1]);
        assert!(matches!(w1_exact(&big, &big), Err(Error::TooManyAtoms { .. })));
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=7 {
            for _ in 0..5 {
                let (a, b) = (random_cloud(&mut rng, n, 0.0), random_cloud(&mut rng, n, 0.3));
                assert!((w1_exact(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn line_distance_matches_sorted_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.gen_range(1..40);
            let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..4.0)).collect();
            let w = 1.0 / n as f64;
            let d = w1_line(&a.iter().map(|&x| (x, w)).collect::<Vec<_>>(), &b.iter().map(|&x| (x, w)).collect::<Vec<_>>());
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let pairing: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() * w;
            assert!((d - pairing).abs() < 1e-12);
        }
    }

    #[test]
    fn sliced_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_cloud(&mut rng, 50, 0.0);
        assert_eq!(w1_sliced(&a, &a, 64, 1).unwrap(), 0.0);
        // A rigid shift by u: each projection moves by |u·θ|, averaging 2|u|/π.
        let u = (0.3, -0.4);
        let shifted = cloud(&a.points.iter().map(|(s, _)| (s.x[0] + u.0, s.v[0] + u.1)).collect::<Vec<_>>());
        let est = w1_sliced(&a, &shifted, 512, 7).unwrap();
        let len = 0.5;
        assert!(est >= 2.0 * len / std::f64::consts::PI * 0.95 && est <= len, "{est}");
        assert_eq!(est, w1_sliced(&a, &shifted, 512, 7).unwrap());
        let b = random_cloud(&mut rng, 50, 0.5);
        assert!(w1_sliced(&a, &b, 512, 3).unwrap() <= w1_exact(&a, &b).unwrap());
    }

    #[test]
    fn rest_measure_has_zero_distances() {
        let init = vec![(State::new_1d(-0.2, 0.0), 0.5), (State::new_1d(-0.7, 0.0), 0.5)];
        let trajs = init.iter().map(|(s, _)| Trajectory::constant(1, s.x, 1.0).unwrap()).collect();
        let mu = TrajectoryMeasure::from_agents(init, trajs).unwrap();
        let report = holder_check(&mu, &[0.0, 0.01, 0.1, 1.0], true, &GammaCBound::new(1.0).unwrap()).unwrap();
        assert_eq!(report.distance, DistanceKind::Exact);
        assert!(report.pairs.iter().all(|p| p.distance == 0.0));
        assert!(!report.violated());
        assert_eq!(report.fitted_exponent, None);
    }

    #[test]
    fn straight_line_atom_is_lipschitz() {
        let c = 0.8;
        let s = State::new_1d(-0.9, c);
        let line = Trajectory::new(1, vec![0.0, 1.0], vec![s, State::new_1d(-0.9 + c, c)]).unwrap();
        let mu = TrajectoryMeasure::from_agents(vec![(s, 1.0)], vec![line]).unwrap();
        let times = [0.0, 0.001, 0.01, 0.1, 0.5, 1.0];
        let report = holder_check(&mu, &times, true, &GammaCBound::new(c).unwrap()).unwrap();
        for p in &report.pairs {
            assert!((p.distance - c * (p.t - p.s)).abs() < 1e-12);
        }
        assert!(!report.violated());
        assert!((report.fitted_exponent.unwrap() - 1.0).abs() < 1e-9);
        assert!((report.bound_constant - 2.0 * c).abs() < 1e-15);
    }

    #[test]
    fn atom_coupling_follows_atoms_through_shared_starts() {
        // Agent 0 splits into a resting and a moving atom after mixing; at
        // t = 0 both sit on the same initial state.
        let s = State::new_1d(-0.9, 0.0);
        let rest = Trajectory::constant(1, s.x, 1.0).unwrap();
        let moving = Trajectory::new(1, vec![0.0, 1.0], vec![s, State::new_1d(-0.5, 0.0)]).unwrap();
        let other = Trajectory::constant(1, [-0.2, 0.0], 1.0).unwrap();
        let initial = vec![(s, 0.5), (State::new_1d(-0.2, 0.0), 0.5)];
        let a = TrajectoryMeasure::from_agents(initial.clone(), vec![rest, other.clone()]).unwrap();
        let b = TrajectoryMeasure::from_agents(initial, vec![moving, other]).unwrap();
        let mu = a.mix(&b, 0.25).unwrap();
        assert_eq!(mu.atoms().len(), 3);
        let report = holder_check(&mu, &[0.0, 0.3, 1.0], true, &GammaCBound::new(1.0).unwrap()).unwrap();
        assert_eq!(report.distance, DistanceKind::AtomCoupling);
        for p in &report.pairs {
            let want: f64 = mu
                .atoms()
                .iter()
                .map(|a| a.weight * ground_distance(&a.trajectory.eval(p.s).unwrap(), &a.trajectory.eval(p.t).unwrap()))
                .sum();
            assert!((p.distance - want).abs() < 1e-15, "{p:?} vs {want}");
        }
        // Only the moving atom, weight 0.125, travels.
        let full = report.pairs.iter().find(|p| p.s == 0.0 && p.t == 1.0).unwrap();
        assert!(full.distance > 0.0 && full.distance <= 0.125 * 0.4 * 2.0);
    }
}
