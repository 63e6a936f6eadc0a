//! Constructive admissible trajectories: braking, the two-phase correction
//! towards a target path, the vertex stop and the feasibility map `j` of the
//! interval.
//!
//! Every maneuver checks its output with [`Trajectory::is_admissible`] at
//! [`MANEUVER_TOL`] and reports `ExitsDomain` instead of returning a path that
//! leaves the domain.

use serde::Serialize;

use super::{CubicSegment, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{add, dot, norm, scale, sub, Domain, Point, State, BOUNDARY_EPS};
use crate::oracle1d::{self, EntryProblem};

pub const MANEUVER_TOL: f64 = 1e-9;
const OVERSAMPLE: usize = 8;
/// Largest polar angle step between knots of a chart-built path on the disc.
const MAX_ANGLE_STEP: f64 = 4e-3;

fn check_dim(domain: &Domain, s: &State) -> Result<()> {
    if domain.dim() == 1 && (s.x[1] != 0.0 || s.v[1] != 0.0) {
        return Err(Error::DimensionMismatch);
    }
    Ok(())
}

fn checked(traj: Trajectory, domain: &Domain) -> Result<Trajectory> {
    let violation = traj.max_violation(domain, OVERSAMPLE);
    if violation > MANEUVER_TOL {
        return Err(Error::ExitsDomain { violation });
    }
    Ok(traj)
}

fn uniform(t0: f64, t1: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 })
}

/// Knots at `times` (sorted, deduplicated) from a state path `f`.
fn sample(dim: usize, mut times: Vec<f64>, f: impl Fn(f64) -> State) -> Result<Trajectory> {
    times.sort_by(f64::total_cmp);
    times.dedup();
    Trajectory::from_fn(dim, times, f)
}

/// Polar chart of a disc: `(ρ, φ)` with velocities `(ρ′, φ′)`.
#[derive(Debug, Clone, Copy)]
struct Polar {
    rho: f64,
    phi: f64,
    drho: f64,
    dphi: f64,
}

impl Polar {
    fn of(center: &Point, s: &State) -> Polar {
        let r = sub(&s.x, center);
        let rho = norm(&r);
        let er = scale(&r, 1.0 / rho);
        let ephi = [-er[1], er[0]];
        Polar {
            rho,
            phi: r[1].atan2(r[0]),
            drho: dot(&s.v, &er),
            dphi: dot(&s.v, &ephi) / rho,
        }
    }

    fn state(&self, center: &Point) -> State {
        let (sin, cos) = self.phi.sin_cos();
        let er = [cos, sin];
        let ephi = [-sin, cos];
        State {
            x: add(center, &scale(&er, self.rho)),
            v: add(&scale(&er, self.drho), &scale(&ephi, self.rho * self.dphi)),
        }
    }
}

/// Rotation of `s` about `center` by `angle`, with the rotation itself
/// turning at rate `rate`.
fn rotate_about(center: &Point, s: &State, angle: f64, rate: f64) -> State {
    let (sin, cos) = angle.sin_cos();
    let rot = |p: &Point| [cos * p[0] - sin * p[1], sin * p[0] + cos * p[1]];
    let r = rot(&sub(&s.x, center));
    let spin = [-rate * r[1], rate * r[0]];
    State { x: add(center, &r), v: add(&rot(&s.v), &spin) }
}

/// Resamples a path that is only approximately cubic between knots, doubling
/// the knot density until the interpolant is admissible.
fn refine_until_admissible(
    dim: usize,
    domain: &Domain,
    base: usize,
    build: impl Fn(usize) -> Vec<f64>,
    f: impl Fn(f64) -> State,
) -> Result<Trajectory> {
    let mut n = base;
    let mut last = f64::INFINITY;
    for _ in 0..4 {
        let traj = sample(dim, build(n), &f)?;
        last = traj.max_violation(domain, OVERSAMPLE);
        if last <= MANEUVER_TOL {
            return Ok(traj);
        }
        n *= 2;
    }
    Err(Error::ExitsDomain { violation: last })
}

/// Decelerates linearly to rest over `tbar`: `η(t) = (1 − t/tbar) v`, rest
/// point `x + tbar v / 2`. On the disc, when the straight path would leave,
/// the same profile is applied in polar coordinates.
pub fn brake_maneuver(s: &State, tbar: f64, horizon: f64, domain: &Domain) -> Result<Trajectory> {
    check_dim(domain, s)?;
    if !domain.is_admissible_state(s) {
        return Err(Error::StateNotAdmissible);
    }
    if !(tbar > 0.0) {
        return Err(Error::NonpositiveDuration(tbar));
    }
    if tbar > horizon {
        return Err(Error::InvalidArgument(format!("tbar {tbar} exceeds the horizon {horizon}")));
    }
    let dim = domain.dim();
    if s.v == [0.0; 2] {
        return Trajectory::constant(dim, s.x, horizon);
    }
    let rest = add(&s.x, &scale(&s.v, 0.5 * tbar));
    let d_rest = domain.signed_distance(&rest);
    if d_rest <= 0.0 {
        let mut pairs = vec![(0.0, *s), (tbar, State::rest(rest))];
        if tbar < horizon {
            pairs.push((horizon, State::rest(rest)));
        }
        return checked(Trajectory::from_pairs(dim, pairs)?, domain);
    }
    let Domain::Disc { center, radius } = domain else {
        return Err(Error::ExitsDomain { violation: d_rest });
    };
    let p0 = Polar::of(center, s);
    let reach = p0.rho + 0.5 * tbar * p0.drho;
    if reach > *radius || reach <= 0.0 {
        return Err(Error::ExitsDomain { violation: reach - radius });
    }
    let path = move |t: f64| {
        let t = t.min(tbar);
        let travel = t - t * t / (2.0 * tbar);
        let slow = 1.0 - t / tbar;
        Polar {
            rho: p0.rho + travel * p0.drho,
            phi: p0.phi + travel * p0.dphi,
            drho: slow * p0.drho,
            dphi: slow * p0.dphi,
        }
        .state(center)
    };
    let sweep = 0.5 * tbar * p0.dphi.abs();
    let base = ((sweep / MAX_ANGLE_STEP).ceil() as usize).max(8);
    refine_until_admissible(
        dim,
        domain,
        base,
        |n| uniform(0.0, tbar, n).chain(std::iter::once(horizon)).collect(),
        path,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPhase {
    pub trajectory: Trajectory,
    pub phase1_energy: f64,
    pub phase2_energy: f64,
}

/// Steers from `s_new` onto `target`: the first phase (length `t1`) matches
/// the boundary-normal position and velocity of the target's start while the
/// tangential motion coasts; the second (up to `t2`) removes the tangential
/// offset; afterwards the path is the target delayed by `t1`.
pub fn two_phase_correction(
    target: &Trajectory,
    s_new: &State,
    t1: f64,
    t2: f64,
    domain: &Domain,
) -> Result<TwoPhase> {
    let horizon = target.horizon();
    if !(0.0 < t1 && t1 < t2 && t2 < horizon) {
        return Err(Error::PhaseOrderViolation);
    }
    check_dim(domain, s_new)?;
    if target.dim() != domain.dim() {
        return Err(Error::DimensionMismatch);
    }
    if !domain.is_admissible_state(s_new) {
        return Err(Error::StateNotAdmissible);
    }
    let dim = domain.dim();
    let hat = target.initial_state();
    let tail = |s: f64| target.eval((s - t1).min(horizon)).expect("within the target horizon");
    let mut times: Vec<f64> = vec![0.0, t1, t2, horizon];
    times.extend(target.times().iter().map(|t| t + t1).filter(|&t| t < horizon));

    let traj = match domain {
        Domain::Interval { .. } | Domain::Polygon(_) => {
            // Orthonormal chart (tangent, normal) of the boundary piece nearest to the target start.
            let (n, tang) = match domain {
                Domain::Polygon(p) => {
                    let (j, _) = p
                        .edge_offsets(&hat.x)
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |a, (j, o)| if o > a.1 { (j, o) } else { a });
                    let n = p.normals()[j];
                    (n, [-n[1], n[0]])
                }
                _ => ([1.0, 0.0], [0.0, 0.0]),
            };
            let split = |a: &Point, b: &Point| add(&scale(&n, dot(a, &n)), &scale(&tang, dot(b, &tang)));
            let y = split(&hat.x, &add(&s_new.x, &scale(&s_new.v, t1)));
            let w = split(&hat.v, &s_new.v);
            let first = CubicSegment::new(t1, s_new.x, s_new.v, y, w)?;
            let fix = CubicSegment::new(t2 - t1, sub(&y, &hat.x), sub(&w, &hat.v), [0.0; 2], [0.0; 2])?;
            sample(dim, times, |s| {
                if s <= t1 {
                    first.state(s)
                } else if s <= t2 {
                    let base = tail(s);
                    let c = fix.state(s - t1);
                    State { x: add(&base.x, &c.x), v: add(&base.v, &c.v) }
                } else {
                    tail(s)
                }
            })?
        }
        Domain::Disc { center, .. } => {
            let ph = Polar::of(center, &hat);
            let mut pn = Polar::of(center, s_new);
            // Unwrap the angle next to the target's.
            let turns = ((pn.phi - ph.phi) / std::f64::consts::TAU).round();
            pn.phi -= turns * std::f64::consts::TAU;
            let radial = CubicSegment::new(t1, [pn.rho, 0.0], [pn.drho, 0.0], [ph.rho, 0.0], [ph.drho, 0.0])?;
            let drift = pn.phi + pn.dphi * t1 - ph.phi;
            let fix = CubicSegment::new(t2 - t1, [drift, 0.0], [pn.dphi - ph.dphi, 0.0], [0.0; 2], [0.0; 2])?;
            let path = |s: f64| {
                if s <= t1 {
                    let r = radial.state(s);
                    Polar { rho: r.x[0], phi: pn.phi + pn.dphi * s, drho: r.v[0], dphi: pn.dphi }.state(center)
                } else if s <= t2 {
                    let c = fix.state(s - t1);
                    rotate_about(center, &tail(s), c.x[0], c.v[0])
                } else {
                    tail(s)
                }
            };
            let sweep = (pn.dphi.abs() * t1).max(drift.abs()) + ph.dphi.abs() * (t2 - t1);
            let base = ((sweep / MAX_ANGLE_STEP).ceil() as usize).max(16);
            let target_times: Vec<f64> = times.clone();
            refine_until_admissible(
                dim,
                domain,
                base,
                |n| {
                    let mut ts = target_times.clone();
                    ts.extend(uniform(0.0, t1, n));
                    ts.extend(uniform(t1, t2, n));
                    ts
                },
                path,
            )?
        }
    };
    let traj = checked(traj, domain)?;
    Ok(TwoPhase {
        phase1_energy: traj.energy_between(0.0, t1, 2.0),
        phase2_energy: traj.energy_between(t1, t2, 2.0),
        trajectory: traj,
    })
}

fn vertex_index(domain: &Domain, vertex: &Point) -> Result<usize> {
    let Domain::Polygon(p) = domain else {
        return Err(Error::InvalidArgument("vertex stop needs a polygon".into()));
    };
    p.vertices()
        .iter()
        .position(|q| norm(&sub(q, vertex)) <= BOUNDARY_EPS)
        .ok_or_else(|| Error::InvalidArgument("point is not a vertex of the polygon".into()))
}

/// `3 min_k (ν − x)·n_k / (v·n_k)_+` over the two edges at the vertex;
/// infinite when the velocity points away from both.
pub fn vertex_stop_bound(domain: &Domain, s: &State, vertex: &Point) -> Result<f64> {
    let j = vertex_index(domain, vertex)?;
    let Domain::Polygon(p) = domain else { unreachable!() };
    Ok(p.vertex_normals(j)
        .iter()
        .map(|n| oracle1d::max_phase1_time(dot(&sub(vertex, &s.x), n), dot(&s.v, n).max(0.0)))
        .fold(f64::INFINITY, f64::min))
}

/// Drives `s` onto the vertex at rest over `t_i`, then follows `tail`
/// (which starts at rest on the vertex) delayed by `t_i`.
pub fn vertex_stop(
    s: &State,
    vertex: &Point,
    t_i: f64,
    tail: &Trajectory,
    domain: &Domain,
) -> Result<Trajectory> {
    vertex_index(domain, vertex)?;
    let start = tail.initial_state();
    if norm(&sub(&start.x, vertex)) > BOUNDARY_EPS || norm(&start.v) > BOUNDARY_EPS {
        return Err(Error::InvalidArgument("tail must start at rest on the vertex".into()));
    }
    if !(t_i > 0.0) {
        return Err(Error::NonpositiveDuration(t_i));
    }
    let horizon = tail.horizon();
    if t_i >= horizon {
        return Err(Error::InvalidArgument(format!("t_i {t_i} must be below the horizon {horizon}")));
    }
    if !domain.is_admissible_state(s) {
        return Err(Error::StateNotAdmissible);
    }
    let mut pairs = vec![(0.0, *s)];
    pairs.extend(tail.delayed_knots(t_i, horizon)?);
    pairs[1].1 = State::rest(*vertex);
    checked(Trajectory::from_pairs(2, pairs)?, domain)
}

/// The competitor used to bound the cost on `Θ_r` for an interval: slow
/// states brake over `2T/3`; fast states follow the closed-form entry profile
/// with `θ = T` and exit velocity `0`, stopping exactly on the boundary;
/// negative velocities are the mirror image.
pub fn feasibility_map_j(domain: &Domain, s: &State, horizon: f64) -> Result<Trajectory> {
    let Domain::Interval { a, b } = *domain else {
        return Err(Error::ModeDomainMismatch);
    };
    check_dim(domain, s)?;
    if !domain.is_admissible_state(s) {
        return Err(Error::StateNotAdmissible);
    }
    if !(horizon > 0.0) {
        return Err(Error::NonpositiveDuration(horizon));
    }
    // Work on [−1, 0].
    let len = b - a;
    let x = ((s.x[0] - b) / len).clamp(-1.0, 0.0);
    let v = s.v[0] / len;
    let pairs = if v >= 0.0 {
        canonical_j(x, v, horizon)
    } else {
        canonical_j(-1.0 - x, -v, horizon)
            .into_iter()
            .map(|(t, y, w)| (t, -1.0 - y, -w))
            .collect()
    };
    let mut pairs: Vec<_> = pairs
        .into_iter()
        .map(|(t, y, w)| (t, State::new_1d(b + len * y, len * w)))
        .collect();
    // The rescaling round trip can move the start by an ulp.
    pairs[0].1 = *s;
    checked(Trajectory::from_pairs(1, pairs)?, domain)
}

/// Knots `(t, x, v)` of `j` on `[−1, 0]` for `v ≥ 0`.
fn canonical_j(x: f64, v: f64, horizon: f64) -> Vec<(f64, f64, f64)> {
    if v == 0.0 {
        return vec![(0.0, x, 0.0), (horizon, x, 0.0)];
    }
    if v <= -3.0 * x / horizon {
        let tbar = 2.0 * horizon / 3.0;
        let rest = x + v * horizon / 3.0;
        return vec![(0.0, x, v), (tbar, rest, 0.0), (horizon, rest, 0.0)];
    }
    let sol = oracle1d::solve_unchecked(EntryProblem { x, v, w: 0.0, theta: horizon, horizon });
    let tau = sol.switch;
    let mut out = vec![(0.0, x, v)];
    if tau < horizon {
        out.push((tau, 0.0, 0.0));
    }
    out.push((horizon, 0.0, 0.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> Domain {
        Domain::unit_interval()
    }

    #[test]
    fn brake_examples() {
        let traj = brake_maneuver(&State::new_1d(-0.5, 1.0), 0.4, 1.0, &interval()).unwrap();
        assert!((traj.final_state().x[0] + 0.3).abs() < 1e-15);
        assert!((traj.energy(2.0) - 1.25).abs() < 1e-12);
        assert!(traj.is_admissible(&interval(), 1e-9, 8));
        let still = brake_maneuver(&State::new_1d(-0.5, 0.0), 0.4, 1.0, &interval()).unwrap();
        assert_eq!(still.energy(2.0), 0.0);
        assert!(matches!(
            brake_maneuver(&State::new_1d(-0.1, 1.0), 0.4, 1.0, &interval()),
            Err(Error::ExitsDomain { .. })
        ));
        assert_eq!(
            brake_maneuver(&State::new_1d(0.0, 1.0), 0.4, 1.0, &interval()),
            Err(Error::StateNotAdmissible)
        );
    }

    #[test]
    fn brake_profile_is_exact_between_knots() {
        let s = State::new_2d([0.2, 0.3], [0.5, -0.25]);
        let traj = brake_maneuver(&s, 0.6, 1.0, &Domain::unit_square()).unwrap();
        for t in [0.05, 0.3, 0.59] {
            let e = traj.eval(t).unwrap();
            for k in 0..2 {
                assert!((e.v[k] - (1.0 - t / 0.6) * s.v[k]).abs() < 1e-14);
                assert!((e.x[k] - (s.x[k] + (t - t * t / 1.2) * s.v[k])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn disc_tangential_brake_uses_the_chart() {
        let disc = Domain::disc([0.0, 0.0], 1.0).unwrap();
        let s = State::new_2d([1.0, 0.0], [0.0, 2.0]);
        let traj = brake_maneuver(&s, 0.5, 1.0, &disc).unwrap();
        assert!(traj.is_admissible(&disc, 1e-9, 8));
        let end = traj.final_state();
        assert!((norm(&end.x) - 1.0).abs() < 1e-12 && norm(&end.v) == 0.0);
        assert!((end.x[1].atan2(end.x[0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_phase_interval_example() {
        let target = Trajectory::constant(1, [0.0, 0.0], 1.0).unwrap();
        let s_new = State::new_1d(-1e-3, 1e-2);
        let bound = oracle1d::max_phase1_time(1e-3, 1e-2);
        let out = two_phase_correction(&target, &s_new, 0.2, 0.45, &interval()).unwrap();
        assert!(out.trajectory.is_admissible(&interval(), 1e-9, 8));
        let t1: f64 = 0.2;
        let scale = 1e-6 / t1.powi(3) + 1e-4 / t1;
        assert!(out.phase1_energy <= 9.0 * scale);
        assert!(out.phase2_energy < 1e-30);
        assert!(matches!(
            two_phase_correction(&target, &s_new, 1.5 * bound, 0.5, &interval()),
            Err(Error::ExitsDomain { .. })
        ));
        assert_eq!(
            two_phase_correction(&target, &s_new, 0.5, 0.4, &interval()),
            Err(Error::PhaseOrderViolation)
        );
    }

    #[test]
    fn two_phase_degenerates_on_the_target_start() {
        let target = brake_maneuver(&State::new_1d(-0.5, 0.0), 0.5, 1.0, &interval()).unwrap();
        let target = Trajectory::new(
            1,
            vec![0.0, 0.5, 1.0],
            vec![State::new_1d(-0.5, 0.0), State::new_1d(-0.4, 0.3), State::new_1d(-0.2, 0.0)],
        )
        .unwrap_or(target);
        let out = two_phase_correction(&target, &target.initial_state(), 0.1, 0.3, &interval()).unwrap();
        for s in [0.0, 0.05, 0.1, 0.2, 0.6, 1.0] {
            let e = out.trajectory.eval(s).unwrap();
            let expected = if s <= 0.1 { target.initial_state() } else { target.eval(s - 0.1).unwrap() };
            assert!((e.x[0] - expected.x[0]).abs() < 1e-12 && (e.v[0] - expected.v[0]).abs() < 1e-12);
        }
        assert_eq!(out.phase1_energy, 0.0);
    }

    #[test]
    fn two_phase_polygon_edge() {
        let sq = Domain::unit_square();
        let target = Trajectory::new(
            2,
            vec![0.0, 0.5, 1.0],
            vec![
                State::new_2d([0.5, 0.0], [0.2, 0.0]),
                State::new_2d([0.6, 0.0], [0.0, 0.0]),
                State::new_2d([0.6, 0.0], [0.0, 0.0]),
            ],
        )
        .unwrap();
        let s_new = State::new_2d([0.49, 0.001], [0.25, -0.002]);
        let out = two_phase_correction(&target, &s_new, 0.3, 0.6, &sq).unwrap();
        let traj = &out.trajectory;
        assert!(traj.is_admissible(&sq, 1e-9, 8));
        for s in [0.6, 0.75, 1.0] {
            let (a, b) = (traj.eval(s).unwrap(), target.eval(s - 0.3).unwrap());
            assert!(norm(&sub(&a.x, &b.x)) < 1e-14);
        }
    }

    #[test]
    fn two_phase_disc() {
        let disc = Domain::disc([0.0, 0.0], 1.0).unwrap();
        let target = brake_maneuver(&State::new_2d([1.0, 0.0], [0.0, 0.5]), 0.5, 1.0, &disc).unwrap();
        let s_new = State::new_2d([0.999, 0.01], [0.001, 0.52]);
        let out = two_phase_correction(&target, &s_new, 0.2, 0.5, &disc).unwrap();
        assert!(out.trajectory.is_admissible(&disc, 1e-9, 8));
        let end = out.trajectory.final_state();
        let want = target.eval(0.8).unwrap();
        assert!(norm(&sub(&end.x, &want.x)) < 1e-12);
    }

    #[test]
    fn vertex_stop_example() {
        let sq = Domain::unit_square();
        let tail = Trajectory::constant(2, [0.0, 0.0], 1.0).unwrap();
        let s = State::new_2d([0.01, 0.01], [-0.05, -0.05]);
        let bound = vertex_stop_bound(&sq, &s, &[0.0, 0.0]).unwrap();
        assert!((bound - 0.6).abs() < 1e-12);
        let traj = vertex_stop(&s, &[0.0, 0.0], 0.5, &tail, &sq).unwrap();
        assert!(traj.is_admissible(&sq, 1e-9, 8));
        assert!(matches!(
            vertex_stop(&s, &[0.0, 0.0], 0.9, &tail, &sq),
            Err(Error::ExitsDomain { .. })
        ));
        let at = vertex_stop(&State::rest([0.0, 0.0]), &[0.0, 0.0], 0.3, &tail, &sq).unwrap();
        assert_eq!(at.energy(2.0), 0.0);
        assert!(at.knots().iter().all(|k| k.x == [0.0, 0.0]));
    }

    #[test]
    fn feasibility_map_cases() {
        let i = interval();
        let traj = feasibility_map_j(&i, &State::new_1d(-0.5, 0.1), 3.0).unwrap();
        assert!((traj.final_state().x[0] + 0.4).abs() < 1e-15);
        let still = feasibility_map_j(&i, &State::new_1d(-0.5, 0.0), 2.0).unwrap();
        assert_eq!(still.energy(2.0), 0.0);
        let fast = feasibility_map_j(&i, &State::new_1d(-0.1, 1.0), 1.0).unwrap();
        assert_eq!(fast.final_state(), State::new_1d(0.0, 0.0));
        assert!((fast.energy(2.0) - 2.0 / 9.0 * 10.0).abs() < 1e-12);
        let back = feasibility_map_j(&i, &State::new_1d(-0.9, -1.0), 1.0).unwrap();
        assert_eq!(back.final_state(), State::new_1d(-1.0, 0.0));
        assert_eq!(
            feasibility_map_j(&i, &State::new_1d(0.0, 0.1), 1.0),
            Err(Error::StateNotAdmissible)
        );
    }
}
