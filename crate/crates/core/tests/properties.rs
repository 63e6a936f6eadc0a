//! Randomized properties across modules.

use accel_mfg::geometry::{Domain, State};
use accel_mfg::metrics::{ground_distance, w1_exact, w1_line};
use accel_mfg::mfg::{pushforward, Coupling, EmpiricalStateMeasure, EquilibriumConfig, Game, TrajectoryMeasure};
use accel_mfg::ocp::{CostSpec, OCPConfig};
use accel_mfg::oracle1d::{entry_trajectory, regime_value, EntryProblem, Regime};
use accel_mfg::trajectory::{brake_maneuver, feasibility_map_j, read_csv, trajectory_csv, Trajectory};
use proptest::prelude::*;

fn cloud(n: usize) -> impl Strategy<Value = Vec<State>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), n)
        .prop_map(|v| v.into_iter().map(|(a, b, c, d)| State::new_2d([a, b], [c, d])).collect())
}

fn uniform(states: &[State]) -> EmpiricalStateMeasure {
    EmpiricalStateMeasure::uniform(states.to_vec()).unwrap()
}

/// Entry problems satisfying the validity conditions.
fn entry_problem() -> impl Strategy<Value = EntryProblem> {
    (0.1..3.0f64, 0.2..4.0f64, 1.1..3.0f64, 0.0..1.0f64, 0.02..0.98f64).prop_map(|(d, v, stretch, wf, tf)| {
        let horizon = stretch * 3.0 * d / v;
        let w = wf * d / horizon;
        EntryProblem::new(-d, v, w, tf * horizon, horizon).unwrap()
    })
}

/// Simpson's rule on `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_is_a_metric(a in cloud(6), b in cloud(6), c in cloud(6)) {
        let (ma, mb, mc) = (uniform(&a), uniform(&b), uniform(&c));
        let ab = w1_exact(&ma, &mb).unwrap();
        let ba = w1_exact(&mb, &ma).unwrap();
        let bc = w1_exact(&mb, &mc).unwrap();
        let ac = w1_exact(&ma, &mc).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(w1_exact(&ma, &ma).unwrap().abs() <= 1e-15);
        // Permuting the support leaves the measure unchanged.
        let mut rev = a.clone();
        rev.reverse();
        prop_assert!(w1_exact(&ma, &uniform(&rev)).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn w1_is_bounded_by_any_matching(a in cloud(5), b in cloud(5)) {
        let d = w1_exact(&uniform(&a), &uniform(&b)).unwrap();
        let identity: f64 = a.iter().zip(&b).map(|(p, q)| ground_distance(p, q)).sum::<f64>() / 5.0;
        prop_assert!(d <= identity + 1e-12);
    }

    #[test]
    fn w1_on_the_line_matches_the_assignment(xs in prop::collection::vec(-2.0..2.0f64, 7), ys in prop::collection::vec(-2.0..2.0f64, 7)) {
        let states = |p: &[f64]| p.iter().map(|&x| State::new_1d(x, 0.0)).collect::<Vec<_>>();
        let exact = w1_exact(&uniform(&states(&xs)), &uniform(&states(&ys))).unwrap();
        let w = 1.0 / 7.0;
        let line = w1_line(&xs.iter().map(|&x| (x, w)).collect::<Vec<_>>(), &ys.iter().map(|&y| (y, w)).collect::<Vec<_>>());
        prop_assert!((exact - line).abs() <= 1e-12, "{exact} vs {line}");
    }

    #[test]
    fn entry_value_is_the_energy_of_its_profile(p in entry_problem()) {
        let sol = entry_trajectory(&p).unwrap();
        prop_assert!((sol.position(0.0) - p.x).abs() <= 1e-12);
        prop_assert!((sol.velocity(0.0) - p.v).abs() <= 1e-12 * p.v.max(1.0));
        prop_assert!((sol.velocity(p.theta) - p.w).abs() <= 1e-9 * p.v.max(1.0));
        // Smooth on [0, switch), zero acceleration from `switch` on; the
        // last node is pulled just inside so the rule sees the left limit.
        let inside = sol.switch * (1.0 - 1e-13);
        let energy = simpson(|t| 0.5 * sol.acceleration(t.min(inside)).powi(2), 0.0, sol.switch, 2000);
        prop_assert!((energy - sol.value).abs() <= 1e-7 * sol.value.max(1e-3), "{energy} vs {}", sol.value);
        for i in 0..=50 {
            let t = p.theta * i as f64 / 50.0;
            prop_assert!(sol.position(t) <= 1e-12 * p.x.abs(), "crossed the boundary at t = {t}");
        }
    }

    #[test]
    fn entry_value_is_continuous_across_regimes(p in entry_problem()) {
        let (t1, t2) = p.regime_bounds();
        let at = |r, t| regime_value(r, p.x, p.v, p.w, t);
        let l = at(Regime::Linear, t1);
        let q = at(Regime::FullQuadratic, t1);
        prop_assert!((l - q).abs() <= 1e-9 * l.max(1e-9));
        let q = at(Regime::FullQuadratic, t2);
        let f = at(Regime::ParabolicThenFlat, t2);
        prop_assert!((q - f).abs() <= 1e-9 * q.max(1e-9));
    }

    #[test]
    fn brake_stays_inside_and_stops(x in -0.9..-0.1f64, v in -1.0..1.0f64, tbar in 0.05..0.15f64) {
        let domain = Domain::interval(-1.0, 0.0).unwrap();
        let s = State::new_1d(x, v);
        let traj = brake_maneuver(&s, tbar, 1.0, &domain).unwrap();
        prop_assert!(traj.is_admissible(&domain, 1e-9, 8));
        prop_assert_eq!(traj.initial_state(), s);
        let end = traj.final_state();
        prop_assert!((end.x[0] - (x + tbar * v / 2.0)).abs() <= 1e-12);
        prop_assert!(end.v[0].abs() <= 1e-12);
    }

    #[test]
    fn brake_in_the_disc_is_admissible(r in 0.0..0.8f64, phi in 0.0..6.28f64, s0 in -0.5..0.5f64, s1 in -0.5..0.5f64) {
        let domain = Domain::disc([0.0, 0.0], 1.0).unwrap();
        let s = State::new_2d([r * phi.cos(), r * phi.sin()], [s0, s1]);
        // Stopping distance 0.05 · |v| ≤ 0.036 < 0.2.
        let traj = brake_maneuver(&s, 0.1, 1.0, &domain).unwrap();
        prop_assert!(traj.is_admissible(&domain, 1e-9, 8));
    }

    #[test]
    fn feasibility_map_is_admissible(x in -0.99..-0.01f64, v in -3.0..3.0f64) {
        let domain = Domain::interval(-1.0, 0.0).unwrap();
        let s = State::new_1d(x, v);
        prop_assume!(domain.is_admissible_state(&s));
        let traj = feasibility_map_j(&domain, &s, 1.0).unwrap();
        prop_assert_eq!(traj.initial_state(), s);
        prop_assert!(traj.is_admissible(&domain, 1e-9, 8));
    }

    #[test]
    fn trajectories_interpolate_knots_and_survive_csv(xs in prop::collection::vec((-1.0..1.0f64, -2.0..2.0f64), 2..12)) {
        let n = xs.len();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let knots: Vec<State> = xs.iter().map(|&(x, v)| State::new_1d(x, v)).collect();
        let traj = Trajectory::new(1, times.clone(), knots.clone()).unwrap();
        for (t, k) in times.iter().zip(&knots) {
            let e = traj.eval(*t).unwrap();
            prop_assert!((e.x[0] - k.x[0]).abs() <= 1e-12 && (e.v[0] - k.v[0]).abs() <= 1e-12);
        }
        let back = read_csv(trajectory_csv(&traj).as_bytes()).unwrap();
        prop_assert_eq!(back.times(), traj.times());
        prop_assert_eq!(back.knots(), traj.knots());
    }
}

fn agents(xs: &[f64]) -> Vec<(State, f64)> {
    let w = 1.0 / xs.len() as f64;
    xs.iter().map(|&x| (State::new_1d(x, 0.0), w)).collect()
}

fn rest_measure(m0: &[(State, f64)]) -> TrajectoryMeasure {
    let trajs = m0.iter().map(|(s, _)| Trajectory::constant(1, s.x, 1.0).unwrap()).collect();
    TrajectoryMeasure::from_agents(m0.to_vec(), trajs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixing_preserves_each_agents_mass(
        xs in prop::collection::vec(-0.9..-0.1f64, 1..6),
        vs in prop::collection::vec(-1.0..1.0f64, 6),
        lambda in 0.01..1.0f64,
    ) {
        let m0 = agents(&xs);
        let a = rest_measure(&m0);
        let domain = Domain::interval(-1.0, 0.0).unwrap();
        // Moving competitors: brake from the agent's position with a new velocity,
        // then reattach the agent's own start.
        let moved: Vec<Trajectory> = m0.iter().zip(&vs).map(|((s, _), &v)| {
            let b = brake_maneuver(&State::new_1d(s.x[0], 0.1 * v), 0.5, 1.0, &domain).unwrap();
            let mut knots = b.knots().to_vec();
            knots[0] = *s;
            Trajectory::new(1, b.times().to_vec(), knots).unwrap()
        }).collect();
        let b = TrajectoryMeasure::from_agents(m0.clone(), moved).unwrap();
        let mixed = a.mix(&b, lambda).unwrap();
        for (agent, (_, w)) in m0.iter().enumerate() {
            let mass: f64 = mixed.atoms().iter().filter(|at| at.agent == agent).map(|at| at.weight).sum();
            prop_assert!((mass - w).abs() <= 1e-12, "agent {agent}: {mass} vs {w}");
        }
        let total: f64 = mixed.atoms().iter().map(|at| at.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert_eq!(pushforward(&mixed, 0.0).unwrap().points, m0);
        // Mixing a measure with itself changes nothing.
        let same = a.mix(&a, lambda).unwrap();
        prop_assert_eq!(same.atoms().len(), a.atoms().len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn exploitability_is_nonnegative(xs in prop::collection::vec(-0.9..-0.1f64, 2..5), strength in -1.0..1.0f64) {
        let domain = Domain::interval(-1.0, 0.0).unwrap();
        let coupling = if strength >= 0.0 {
            Coupling::MollifiedCongestion { strength, bandwidth: 0.5 }
        } else {
            Coupling::MollifiedAggregation { strength: -strength, bandwidth: 0.5 }
        };
        let game = Game::new(domain, coupling, CostSpec::zero()).unwrap();
        let cfg = EquilibriumConfig { ocp: OCPConfig { knots: 33, ..OCPConfig::default() }, ..EquilibriumConfig::default() };
        let m0 = agents(&xs);
        let e = game.exploitability(&rest_measure(&m0), &cfg).unwrap();
        prop_assert!(e >= 0.0 && e.is_finite(), "{e}");
    }
}
