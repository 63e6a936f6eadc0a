//! Lagrangian mean-field layer: measures on trajectories, their time
//! marginals `m(t) = e_t♯μ`, mollified couplings, best responses and
//! fictitious play.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, State, ThetaMode, ThetaRSpec};
use crate::ocp::{self, cost_of, CostSpec, OCPConfig, Problem, StageCost, StageEval};
use crate::trajectory::Trajectory;

/// Allowed drift of total mass.
pub const MASS_TOL: f64 = 1e-12;
/// Atoms lighter than this are dropped after mixing.
pub const PRUNE_BELOW: f64 = 1e-8;
/// Atoms of one agent whose knots agree to this are merged.
const MERGE_TOL: f64 = 1e-9;

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument(format!("weights must be finite and nonnegative, got {w}")));
        }
        total += w;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("measure has no atoms".into()));
    }
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Finitely supported measure on states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStateMeasure {
    pub points: Vec<(State, f64)>,
}

impl EmpiricalStateMeasure {
    pub fn new(points: Vec<(State, f64)>) -> Result<Self> {
        check_weights(points.iter().map(|p| p.1))?;
        Ok(EmpiricalStateMeasure { points })
    }

    pub fn uniform(states: Vec<State>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("measure has no atoms".into()));
        }
        let w = 1.0 / states.len() as f64;
        Ok(EmpiricalStateMeasure { points: states.into_iter().map(|s| (s, w)).collect() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&State) -> f64) -> f64 {
        self.points.iter().map(|(s, w)| w * f(s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    /// Index into the initial sample; the trajectory starts at that state.
    pub agent: usize,
    pub trajectory: Trajectory,
    pub weight: f64,
}

/// Measure on trajectories with `e₀♯μ` pinned to an initial sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeasure {
    atoms: Vec<Atom>,
    initial: Vec<(State, f64)>,
}

impl TrajectoryMeasure {
    /// One atom per agent; `trajectories[i]` must start at `initial[i]`.
    pub fn from_agents(initial: Vec<(State, f64)>, trajectories: Vec<Trajectory>) -> Result<Self> {
        if initial.len() != trajectories.len() {
            return Err(Error::InvalidArgument(format!(
                "{} initial states but {} trajectories",
                initial.len(),
                trajectories.len()
            )));
        }
        let atoms = trajectories
            .into_iter()
            .enumerate()
            .map(|(agent, trajectory)| Atom { agent, weight: initial[agent].1, trajectory })
            .collect();
        let mu = TrajectoryMeasure { atoms, initial };
        mu.validate()?;
        Ok(mu)
    }

    pub fn validate(&self) -> Result<()> {
        check_weights(self.initial.iter().map(|p| p.1))?;
        check_weights(self.atoms.iter().map(|a| a.weight))?;
        let horizon = self.horizon();
        for a in &self.atoms {
            let Some((s, _)) = self.initial.get(a.agent) else {
                return Err(Error::InvalidArgument(format!("atom refers to missing agent {}", a.agent)));
            };
            if a.trajectory.initial_state() != *s {
                return Err(Error::InvalidArgument(format!("atom of agent {} does not start at its state", a.agent)));
            }
            if a.trajectory.horizon() != horizon {
                return Err(Error::InvalidArgument("atoms must share the horizon".into()));
            }
        }
        Ok(())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn initial_states(&self) -> &[(State, f64)] {
        &self.initial
    }

    pub fn num_agents(&self) -> usize {
        self.initial.len()
    }

    pub fn horizon(&self) -> f64 {
        self.atoms[0].trajectory.horizon()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].trajectory.dim()
    }

    /// `(1 − λ) self + λ other`, with near-identical atoms of an agent merged
    /// and light atoms pruned. Each agent keeps exactly its initial weight
    /// up to rounding.
    pub fn mix(&self, other: &TrajectoryMeasure, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!("mixing weight must lie in (0, 1], got {lambda}")));
        }
        if self.initial != other.initial {
            return Err(Error::InvalidArgument("mixed measures need the same initial sample".into()));
        }
        let mut groups: Vec<Vec<Atom>> = vec![Vec::new(); self.initial.len()];
        let scaled = |a: &Atom, f: f64| Atom { weight: a.weight * f, ..a.clone() };
        for a in &self.atoms {
            groups[a.agent].push(scaled(a, 1.0 - lambda));
        }
        for a in &other.atoms {
            groups[a.agent].push(scaled(a, lambda));
        }
        let mut atoms = Vec::new();
        for (agent, group) in groups.into_iter().enumerate() {
            let mut kept: Vec<Atom> = Vec::new();
            for a in group {
                match kept.iter_mut().find(|k| same_path(&k.trajectory, &a.trajectory)) {
                    Some(k) => k.weight += a.weight,
                    None => kept.push(a),
                }
            }
            kept.retain(|a| a.weight >= PRUNE_BELOW);
            let total: f64 = kept.iter().map(|a| a.weight).sum();
            let target = self.initial[agent].1;
            for a in &mut kept {
                a.weight *= target / total;
            }
            atoms.extend(kept);
        }
        let mu = TrajectoryMeasure { atoms, initial: self.initial.clone() };
        mu.validate()?;
        Ok(mu)
    }

    /// Atoms of each agent, newest first.
    fn by_agent(&self) -> Vec<Vec<&Trajectory>> {
        let mut out: Vec<Vec<&Trajectory>> = vec![Vec::new(); self.initial.len()];
        for a in self.atoms.iter().rev() {
            out[a.agent].push(&a.trajectory);
        }
        out
    }
}

fn same_path(a: &Trajectory, b: &Trajectory) -> bool {
    a.times() == b.times()
        && a.knots().iter().zip(b.knots()).all(|(p, q)| {
            (0..2).all(|i| (p.x[i] - q.x[i]).abs() <= MERGE_TOL && (p.v[i] - q.v[i]).abs() <= MERGE_TOL)
        })
}

/// `m(t) = e_t♯μ`. At `t = 0` this is the stored initial sample itself.
pub fn pushforward(mu: &TrajectoryMeasure, t: f64) -> Result<EmpiricalStateMeasure> {
    let horizon = mu.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    if t == 0.0 {
        return Ok(EmpiricalStateMeasure { points: mu.initial.clone() });
    }
    let points = mu.atoms.iter().map(|a| Ok((a.trajectory.eval(t)?, a.weight))).collect::<Result<_>>()?;
    Ok(EmpiricalStateMeasure { points })
}

fn default_bandwidth() -> f64 {
    0.2
}

/// Mean-field coupling, applied as `F[m(t)]` in the running cost and as
/// `G[m(T)]` at the horizon. Both use the bump kernel
/// `κ(q) = exp(1 − 1/(1 − q))`, `q = (|Δx|² + |Δv|²)/σ²`, supported in `q < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    #[default]
    Zero,
    /// `F = c ∫κ dm`: crowded states cost more.
    MollifiedCongestion {
        strength: f64,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
    /// `F = −c ∫κ dm`.
    MollifiedAggregation {
        strength: f64,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
}

impl Coupling {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Coupling::Zero => Ok(()),
            Coupling::MollifiedCongestion { strength, bandwidth } | Coupling::MollifiedAggregation { strength, bandwidth } => {
                if !(strength >= 0.0 && strength.is_finite() && bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "coupling needs strength ≥ 0 and bandwidth > 0, got {strength} and {bandwidth}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Signed strength and bandwidth, `None` for the zero coupling.
    fn parts(&self) -> Option<(f64, f64)> {
        match *self {
            Coupling::Zero => None,
            Coupling::MollifiedCongestion { strength, bandwidth } => Some((strength, bandwidth)),
            Coupling::MollifiedAggregation { strength, bandwidth } => Some((-strength, bandwidth)),
        }
    }
}

/// `κ(q)` with its first two derivatives in `q`.
pub fn bump(q: f64) -> (f64, f64, f64) {
    if !(q < 1.0) {
        return (0.0, 0.0, 0.0);
    }
    let r = 1.0 / (1.0 - q);
    let k = (1.0 - r).exp();
    let (g1, g2) = (-r * r, -2.0 * r * r * r);
    (k, k * g1, k * (g1 * g1 + g2))
}

/// Lazily cached marginals of a frozen measure, each sorted by the first
/// coordinate so the kernel sum only scans a window of width `2σ`.
#[derive(Debug)]
struct Marginals {
    atoms: Vec<(Trajectory, f64)>,
    horizon: f64,
    cache: RwLock<HashMap<u64, Arc<Vec<([f64; 4], f64)>>>>,
}

impl Marginals {
    fn new(mu: &TrajectoryMeasure) -> Self {
        Marginals {
            atoms: mu.atoms.iter().map(|a| (a.trajectory.clone(), a.weight)).collect(),
            horizon: mu.horizon(),
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn at(&self, t: f64) -> Arc<Vec<([f64; 4], f64)>> {
        let t = t.clamp(0.0, self.horizon);
        let key = t.to_bits();
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let mut pts: Vec<([f64; 4], f64)> = self
            .atoms
            .iter()
            .map(|(traj, w)| {
                let s = traj.eval(t).expect("time clamped to the horizon");
                ([s.x[0], s.x[1], s.v[0], s.v[1]], *w)
            })
            .collect();
        pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        let pts = Arc::new(pts);
        self.cache.write().expect("cache lock").insert(key, pts.clone());
        pts
    }
}

#[derive(Debug)]
struct KernelCost {
    marginals: Arc<Marginals>,
    strength: f64,
    sigma: f64,
}

impl StageCost for KernelCost {
    fn eval(&self, s: &State, t: f64) -> StageEval {
        let pts = self.marginals.at(t);
        let y = [s.x[0], s.x[1], s.v[0], s.v[1]];
        let inv = 1.0 / (self.sigma * self.sigma);
        let lo = pts.partition_point(|p| p.0[0] < y[0] - self.sigma);
        let mut e = StageEval::default();
        for (p, w) in &pts[lo..] {
            if p[0] > y[0] + self.sigma {
                break;
            }
            let d = [y[0] - p[0], y[1] - p[1], y[2] - p[2], y[3] - p[3]];
            let q = inv * d.iter().map(|c| c * c).sum::<f64>();
            if q >= 1.0 {
                continue;
            }
            let (k, k1, k2) = bump(q);
            e.value += w * k;
            for i in 0..4 {
                e.grad[i] += w * k1 * 2.0 * inv * d[i];
                for j in 0..4 {
                    let diag = if i == j { k1 * 2.0 * inv } else { 0.0 };
                    e.hess[i][j] += w * (k2 * 4.0 * inv * inv * d[i] * d[j] + diag);
                }
            }
        }
        e.value *= self.strength;
        for i in 0..4 {
            e.grad[i] *= self.strength;
            for j in 0..4 {
                e.hess[i][j] *= self.strength;
            }
        }
        e
    }

    fn lower_bound(&self) -> f64 {
        self.strength.min(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    /// `λ_k = 1/(k + 1)`.
    #[default]
    Harmonic,
    Constant {
        lambda: f64,
    },
}

impl Mixing {
    pub fn lambda(&self, k: usize) -> f64 {
        match *self {
            Mixing::Harmonic => 1.0 / (k as f64 + 1.0),
            Mixing::Constant { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquilibriumConfig {
    /// Size of the sampled initial distribution.
    #[serde(rename = "N")]
    pub agents: usize,
    pub max_iters: usize,
    pub mixing: Mixing,
    pub exploitability_tol: f64,
    pub seed: u64,
    pub ocp: OCPConfig,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            agents: 100,
            max_iters: 200,
            mixing: Mixing::Harmonic,
            exploitability_tol: 1e-2,
            seed: 0,
            ocp: OCPConfig::default(),
        }
    }
}

impl EquilibriumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument("N and max_iters must be positive".into()));
        }
        if let Mixing::Constant { lambda } = self.mixing {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::InvalidArgument(format!("mixing weight must lie in (0, 1], got {lambda}")));
            }
        }
        if !(self.exploitability_tol > 0.0) {
            return Err(Error::InvalidArgument("exploitability_tol must be positive".into()));
        }
        self.ocp.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub exploitability: f64,
    pub atoms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    /// The converged iterate, or the least exploitable one.
    pub measure: TrajectoryMeasure,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MildSolution {
    /// Values at the requested `(state, time)` points.
    pub u: Vec<f64>,
    /// `m(t)` at the distinct requested times, ascending.
    pub marginals: Vec<(f64, EmpiricalStateMeasure)>,
}

/// Domain, base costs and coupling of a mean-field game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Game {
    pub domain: Domain,
    pub coupling: Coupling,
    pub base: CostSpec,
}

impl Game {
    pub fn new(domain: Domain, coupling: Coupling, base: CostSpec) -> Result<Self> {
        coupling.validate()?;
        base.validate()?;
        Ok(Game { domain, coupling, base })
    }

    /// Base costs plus the coupling frozen at `mu`.
    pub fn coupled_spec(&self, mu: &TrajectoryMeasure) -> CostSpec {
        match self.coupling.parts() {
            None => self.base.clone(),
            Some((strength, sigma)) => {
                let cost: Arc<dyn StageCost> =
                    Arc::new(KernelCost { marginals: Arc::new(Marginals::new(mu)), strength, sigma });
                self.base.with_extra(Some(cost.clone()), Some(cost))
            }
        }
    }

    /// `J^μ(traj)`.
    pub fn cost(&self, traj: &Trajectory, mu: &TrajectoryMeasure) -> f64 {
        cost_of(traj, &self.coupled_spec(mu))
    }

    /// Optimal trajectory and value of every agent against `spec`. Every
    /// atom of the agent is polished as a start next to the constructive
    /// ones, since coupled costs are nonconvex and the basins move between
    /// rounds. Agents run in parallel; results keep agent order.
    fn respond(
        &self,
        initial: &[(State, f64)],
        spec: &CostSpec,
        warm: Option<Vec<Vec<&Trajectory>>>,
        cfg: &OCPConfig,
    ) -> Result<Vec<(Trajectory, f64)>> {
        initial
            .par_iter()
            .enumerate()
            .map(|(agent, (s, _))| {
                let mut problem = Problem::new(*s, self.domain.clone(), spec.clone(), cfg.horizon);
                if let Some(w) = &warm {
                    problem.warm_starts.extend(w[agent].iter().map(|t| (*t).clone()));
                }
                let cfg = OCPConfig { multistart: cfg.multistart.max(problem.warm_starts.len() + 1), ..cfg.clone() };
                ocp::solve_problem(&problem, &cfg)
                    .map(|r| (r.trajectory, r.value))
                    .map_err(|e| Error::Agent { agent, source: Box::new(e) })
            })
            .collect()
    }

    /// One optimal trajectory per agent against the coupling frozen at `mu`.
    pub fn best_response(&self, mu: &TrajectoryMeasure, cfg: &EquilibriumConfig) -> Result<TrajectoryMeasure> {
        let spec = self.coupled_spec(mu);
        let br = self.respond(mu.initial_states(), &spec, Some(mu.by_agent()), &cfg.ocp)?;
        TrajectoryMeasure::from_agents(mu.initial.clone(), br.into_iter().map(|b| b.0).collect())
    }

    /// Weighted average over atoms of `J^μ(atom) − min(J^μ(atom), J^μ(BR))`.
    pub fn exploitability(&self, mu: &TrajectoryMeasure, cfg: &EquilibriumConfig) -> Result<f64> {
        let spec = self.coupled_spec(mu);
        let br = self.respond(mu.initial_states(), &spec, Some(mu.by_agent()), &cfg.ocp)?;
        Ok(gap(mu, &spec, &br))
    }

    /// Fictitious play from the decoupled optima:
    /// `μ_{k+1} = (1 − λ_k) μ_k + λ_k BR(μ_k)`.
    pub fn fictitious_play(&self, m0: &[(State, f64)], cfg: &EquilibriumConfig) -> Result<Equilibrium> {
        cfg.validate()?;
        check_weights(m0.iter().map(|p| p.1))?;
        if let Some(i) = m0.iter().position(|(s, _)| !self.domain.is_admissible_state(s)) {
            return Err(Error::Agent { agent: i, source: Box::new(Error::StateNotAdmissible) });
        }
        let start = self.respond(m0, &self.base, None, &cfg.ocp)?;
        let mut mu = TrajectoryMeasure::from_agents(m0.to_vec(), start.into_iter().map(|b| b.0).collect())?;
        let mut history = Vec::new();
        let mut best: Option<(f64, TrajectoryMeasure)> = None;
        for k in 1..=cfg.max_iters {
            let spec = self.coupled_spec(&mu);
            let br = self.respond(m0, &spec, Some(mu.by_agent()), &cfg.ocp)?;
            let e = gap(&mu, &spec, &br);
            history.push(IterationRecord { iteration: k, exploitability: e, atoms: mu.atoms.len() });
            if e < cfg.exploitability_tol {
                return Ok(Equilibrium { measure: mu, history, converged: true });
            }
            if best.as_ref().is_none_or(|(b, _)| e < *b) {
                best = Some((e, mu.clone()));
            }
            let response = TrajectoryMeasure::from_agents(m0.to_vec(), br.into_iter().map(|b| b.0).collect())?;
            mu = mu.mix(&response, cfg.mixing.lambda(k))?;
        }
        let measure = best.map(|b| b.1).expect("at least one iteration");
        Ok(Equilibrium { measure, history, converged: false })
    }

    /// `u(x, v, t)` against the coupling frozen at `mu`, and `m(t)` at the
    /// requested times.
    pub fn mild_solution(&self, mu: &TrajectoryMeasure, grid: &[(State, f64)], cfg: &EquilibriumConfig) -> Result<MildSolution> {
        let spec = self.coupled_spec(mu);
        let horizon = mu.horizon();
        let u = grid
            .par_iter()
            .map(|(s, t)| {
                if !(0.0..=horizon).contains(t) {
                    return Err(Error::TimeOutOfRange { t: *t, horizon });
                }
                if horizon - t <= 1e-12 * horizon.max(1.0) {
                    if !self.domain.is_admissible_state(s) {
                        return Err(Error::StateNotAdmissible);
                    }
                    return Ok(spec.terminal_value(s, horizon));
                }
                let mut problem = Problem::new(*s, self.domain.clone(), spec.clone(), horizon);
                problem.start_time = *t;
                // Atoms through `s` are feasible for its problem and usually
                // the best start in a nonconvex coupled cost.
                for a in &mu.atoms {
                    if a.trajectory.eval(*t)? == *s {
                        problem.warm_starts.push(a.trajectory.tail(*t)?);
                    }
                }
                let ocp_cfg = OCPConfig { multistart: cfg.ocp.multistart.max(problem.warm_starts.len() + 1), ..cfg.ocp.clone() };
                Ok(ocp::solve_problem(&problem, &ocp_cfg)?.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut times: Vec<f64> = grid.iter().map(|g| g.1).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let marginals = times.into_iter().map(|t| Ok((t, pushforward(mu, t)?))).collect::<Result<_>>()?;
        Ok(MildSolution { u, marginals })
    }
}

fn gap(mu: &TrajectoryMeasure, spec: &CostSpec, br: &[(Trajectory, f64)]) -> f64 {
    mu.atoms
        .iter()
        .map(|a| {
            let j = cost_of(&a.trajectory, spec);
            a.weight * (j - j.min(br[a.agent].1))
        })
        .sum()
}

/// Restriction of a sample to `Θ_r`, renormalized.
pub fn truncate_m0(sample: &[(State, f64)], spec: &ThetaRSpec) -> Result<Vec<(State, f64)>> {
    let mut kept = Vec::new();
    for (s, w) in sample {
        if spec.contains(s)? {
            kept.push((*s, *w));
        }
    }
    let total: f64 = kept.iter().map(|p| p.1).sum();
    if kept.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyTruncation);
    }
    for p in &mut kept {
        p.1 /= total;
    }
    Ok(kept)
}

/// `n` iid uniform draws from `Θ_r` (rejection from its bounding box in
/// `(x, v)`), equally weighted.
pub fn sample_m0(spec: &ThetaRSpec, n: usize, seed: u64) -> Result<Vec<(State, f64)>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let domain = &spec.domain;
    let (lo, hi) = domain.bounding_box();
    let vmax = match spec.mode {
        ThetaMode::Interval1D => (spec.r * (hi[0] - lo[0])).cbrt(),
        ThetaMode::MarginSets { .. } => spec.r,
    };
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 10_000 * n {
            return Err(Error::InvalidArgument("Θ_r is too thin to sample by rejection".into()));
        }
        let mut s = State::rest([0.0; 2]);
        for i in 0..dim {
            s.x[i] = rng.gen_range(lo[i]..=hi[i]);
            s.v[i] = rng.gen_range(-vmax..=vmax);
        }
        if domain.is_admissible_state(&s) && spec.contains(&s)? {
            out.push(s);
        }
    }
    let w = 1.0 / n as f64;
    Ok(out.into_iter().map(|s| (s, w)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::BuiltinCost;

    fn cfg(knots: usize) -> EquilibriumConfig {
        EquilibriumConfig { ocp: OCPConfig { knots, ..OCPConfig::default() }, ..EquilibriumConfig::default() }
    }

    fn line(s: State, horizon: f64) -> Trajectory {
        let end = State::new_2d([s.x[0] + horizon * s.v[0], s.x[1] + horizon * s.v[1]], s.v);
        Trajectory::new(1, vec![0.0, horizon], vec![s, end]).unwrap()
    }

    fn two_agents() -> TrajectoryMeasure {
        let init = vec![(State::new_1d(-0.8, 0.1), 0.25), (State::new_1d(-0.3, -0.2), 0.75)];
        let trajs = init.iter().map(|(s, _)| line(*s, 1.0)).collect();
        TrajectoryMeasure::from_agents(init, trajs).unwrap()
    }

    #[test]
    fn bump_derivatives_match_differences() {
        for &q in &[0.0, 0.2, 0.5, 0.9] {
            let (k, k1, k2) = bump(q);
            let h = 1e-6;
            assert!((k1 - (bump(q + h).0 - bump(q - h).0) / (2.0 * h)).abs() < 1e-6 * (1.0 + k1.abs()));
            assert!((k2 - (bump(q + h).1 - bump(q - h).1) / (2.0 * h)).abs() < 1e-5 * (1.0 + k2.abs()));
            assert!(k > 0.0 && k <= 1.0);
        }
        assert_eq!(bump(0.0).0, 1.0);
        assert_eq!(bump(1.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pushforward_at_zero_is_the_initial_sample() {
        let mu = two_agents();
        assert_eq!(pushforward(&mu, 0.0).unwrap().points, mu.initial_states().to_vec());
        let m = pushforward(&mu, 0.5).unwrap();
        assert_eq!(m.points[1], (State::new_1d(-0.4, -0.2), 0.75));
        assert!(matches!(pushforward(&mu, 1.5), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn single_atom_pushforward_and_integrals() {
        let s = State::new_1d(-0.5, 0.2);
        let one = TrajectoryMeasure::from_agents(vec![(s, 1.0)], vec![line(s, 1.0)]).unwrap();
        assert_eq!(pushforward(&one, 0.5).unwrap().points, vec![(State::new_1d(-0.4, 0.2), 1.0)]);
        let mu = two_agents();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (a, b, t) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0));
            let f = |s: &State| (a * s.x[0] + b * s.v[0]).sin();
            let m = pushforward(&mu, t).unwrap();
            let direct: f64 = mu.atoms().iter().map(|at| at.weight * f(&at.trajectory.eval(t).unwrap())).sum();
            assert!((m.integrate(f) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn pushforward_of_a_mixture_is_the_mixture() {
        let mu = two_agents();
        let init = mu.initial_states().to_vec();
        let stop = |s: State| Trajectory::new(1, vec![0.0, 0.5, 1.0], vec![s, State::new_1d(s.x[0], 0.0), State::new_1d(s.x[0], 0.0)]);
        let other = TrajectoryMeasure::from_agents(init.clone(), init.iter().map(|(s, _)| stop(*s).unwrap()).collect()).unwrap();
        let lambda = 0.3;
        let mixed = mu.mix(&other, lambda).unwrap();
        let f = |s: &State| s.x[0] * s.x[0] + s.v[0];
        for &t in &[0.0, 0.25, 0.7, 1.0] {
            let lhs = pushforward(&mixed, t).unwrap().integrate(f);
            let rhs = (1.0 - lambda) * pushforward(&mu, t).unwrap().integrate(f) + lambda * pushforward(&other, t).unwrap().integrate(f);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn mixing_preserves_agent_marginals() {
        let mu = two_agents();
        let init = mu.initial_states().to_vec();
        let other = TrajectoryMeasure::from_agents(
            init.clone(),
            init.iter().map(|(s, _)| line(*s, 1.0)).collect(),
        )
        .unwrap();
        // Identical atoms merge.
        let same = mu.mix(&other, 0.5).unwrap();
        assert_eq!(same.atoms().len(), 2);
        let rest: Vec<Trajectory> = vec![
            Trajectory::new(1, vec![0.0, 0.5, 1.0], vec![init[0].0, State::new_1d(-0.78, 0.0), State::new_1d(-0.78, 0.0)]).unwrap(),
            Trajectory::new(1, vec![0.0, 0.5, 1.0], vec![init[1].0, State::new_1d(-0.35, 0.0), State::new_1d(-0.35, 0.0)]).unwrap(),
        ];
        let braking = TrajectoryMeasure::from_agents(init.clone(), rest).unwrap();
        let mixed = mu.mix(&braking, 1.0 / 3.0).unwrap();
        assert_eq!(mixed.atoms().len(), 4);
        for (agent, (_, w)) in init.iter().enumerate() {
            let total: f64 = mixed.atoms().iter().filter(|a| a.agent == agent).map(|a| a.weight).sum();
            assert!((total - w).abs() < 1e-15);
        }
        assert_eq!(pushforward(&mixed, 0.0).unwrap().points, init);
        // Light atoms are pruned.
        let tiny = mu.mix(&braking, 1e-9).unwrap();
        assert_eq!(tiny.atoms().len(), 2);
    }

    #[test]
    fn zero_coupling_cost_is_the_base_cost() {
        let mu = two_agents();
        let base = CostSpec::new(BuiltinCost::Quadratic { a: 1.0, b: 0.5, target: [0.0, 0.0] }, BuiltinCost::Zero, 2.0).unwrap();
        let game = Game::new(Domain::unit_interval(), Coupling::Zero, base.clone()).unwrap();
        let t = &mu.atoms()[0].trajectory;
        assert_eq!(game.cost(t, &mu), cost_of(t, &base));
        // A distant crowd leaves the cost unchanged.
        let far = Game::new(
            Domain::interval(-10.0, 0.0).unwrap(),
            Coupling::MollifiedCongestion { strength: 1.0, bandwidth: 0.2 },
            base.clone(),
        )
        .unwrap();
        let s = State::new_1d(-5.0, 0.0);
        let lone = TrajectoryMeasure::from_agents(vec![(s, 1.0)], vec![line(s, 1.0)]).unwrap();
        assert_eq!(far.cost(t, &lone), cost_of(t, &base));
    }

    #[test]
    fn congestion_is_symmetric_under_swap() {
        let game = Game::new(
            Domain::unit_interval(),
            Coupling::MollifiedCongestion { strength: 1.0, bandwidth: 0.5 },
            CostSpec::zero(),
        )
        .unwrap();
        let (a, b) = (State::new_1d(-0.6, 0.1), State::new_1d(-0.4, -0.1));
        let (ta, tb) = (line(a, 1.0), line(b, 1.0));
        let mu = TrajectoryMeasure::from_agents(vec![(a, 0.5), (b, 0.5)], vec![ta.clone(), tb.clone()]).unwrap();
        let swapped = TrajectoryMeasure::from_agents(vec![(b, 0.5), (a, 0.5)], vec![tb.clone(), ta.clone()]).unwrap();
        assert_eq!(game.cost(&ta, &mu), game.cost(&ta, &swapped));
        assert_eq!(game.cost(&ta, &mu) - cost_of(&ta, &CostSpec::zero()), game.cost(&tb, &mu) - cost_of(&tb, &CostSpec::zero()));
    }

    #[test]
    fn kernel_cost_derivatives_match_differences() {
        let (a, b) = (State::new_1d(-0.5, 0.05), State::new_1d(-0.45, 0.0));
        let mu = TrajectoryMeasure::from_agents(vec![(a, 0.5), (b, 0.5)], vec![line(a, 1.0), line(b, 1.0)]).unwrap();
        let cost = KernelCost { marginals: Arc::new(Marginals::new(&mu)), strength: 1.3, sigma: 0.2 };
        let s = State::new_1d(-0.52, 0.08);
        let e = cost.eval(&s, 0.3);
        let h = 1e-6;
        for (c, bump_at) in [(0usize, 0usize), (2, 0)] {
            let mut p = s;
            let mut m = s;
            if c == 0 {
                p.x[bump_at] += h;
                m.x[bump_at] -= h;
            } else {
                p.v[bump_at] += h;
                m.v[bump_at] -= h;
            }
            let (ep, em) = (cost.eval(&p, 0.3), cost.eval(&m, 0.3));
            assert!((e.grad[c] - (ep.value - em.value) / (2.0 * h)).abs() < 1e-6);
            for r in [0usize, 2] {
                assert!((e.hess[c][r] - (ep.grad[r] - em.grad[r]) / (2.0 * h)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_coupling_play_stops_after_one_round() {
        let game = Game::new(Domain::unit_interval(), Coupling::Zero, CostSpec::zero()).unwrap();
        let m0 = vec![(State::new_1d(-0.5, 0.3), 0.5), (State::new_1d(-0.2, -0.4), 0.5)];
        let eq = game.fictitious_play(&m0, &cfg(64)).unwrap();
        assert!(eq.converged);
        assert_eq!(eq.history.len(), 1);
        assert!(eq.history[0].exploitability < 1e-9);
        assert_eq!(pushforward(&eq.measure, 0.0).unwrap().points, m0);
        let again = game.best_response(&eq.measure, &cfg(64)).unwrap();
        assert_eq!(again, game.best_response(&eq.measure, &cfg(64)).unwrap());
    }

    #[test]
    fn single_agent_best_response_is_the_solver_optimum() {
        let base = CostSpec::new(BuiltinCost::Quadratic { a: 1.0, b: 0.0, target: [-0.7, 0.0] }, BuiltinCost::Zero, 2.0).unwrap();
        let game = Game::new(Domain::unit_interval(), Coupling::Zero, base.clone()).unwrap();
        let s = State::new_1d(-0.3, 0.2);
        let mu = TrajectoryMeasure::from_agents(vec![(s, 1.0)], vec![line(s, 1.0)]).unwrap();
        let br = game.best_response(&mu, &cfg(64)).unwrap();
        let mut problem = Problem::new(s, Domain::unit_interval(), base, 1.0);
        problem.warm_starts.push(line(s, 1.0));
        let direct = ocp::solve_problem(&problem, &cfg(64).ocp).unwrap();
        assert_eq!(br.atoms()[0].trajectory, direct.trajectory);
    }

    #[test]
    fn best_response_has_no_gain_against_its_own_crowd() {
        let game = Game::new(
            Domain::unit_interval(),
            Coupling::MollifiedCongestion { strength: 1.0, bandwidth: 0.3 },
            CostSpec::zero(),
        )
        .unwrap();
        let mu = two_agents();
        let c = cfg(64);
        let br = game.best_response(&mu, &c).unwrap();
        let spec = game.coupled_spec(&mu);
        let values = game.respond(mu.initial_states(), &spec, Some(br.by_agent()), &c.ocp).unwrap();
        let gain: f64 = br
            .atoms()
            .iter()
            .map(|a| a.weight * (cost_of(&a.trajectory, &spec) - values[a.agent].1))
            .sum();
        assert!(gain.abs() < 1e-6, "{gain}");
    }

    #[test]
    fn resting_crowd_is_exploitable_when_moving_pays() {
        // Tracking a target at the far end makes staying put costly.
        let base = CostSpec::new(BuiltinCost::Quadratic { a: 5.0, b: 0.0, target: [-0.9, 0.0] }, BuiltinCost::Zero, 2.0).unwrap();
        let game = Game::new(Domain::unit_interval(), Coupling::MollifiedCongestion { strength: 1.0, bandwidth: 0.2 }, base).unwrap();
        let s = State::new_1d(-0.2, 0.0);
        let mu = TrajectoryMeasure::from_agents(vec![(s, 1.0)], vec![Trajectory::constant(1, s.x, 1.0).unwrap()]).unwrap();
        assert!(game.exploitability(&mu, &cfg(64)).unwrap() > 0.1);
    }

    #[test]
    fn mild_solution_at_the_horizon_is_terminal_cost() {
        let base = CostSpec::new(BuiltinCost::Zero, BuiltinCost::Quadratic { a: 2.0, b: 0.0, target: [0.0, 0.0] }, 2.0).unwrap();
        let game = Game::new(Domain::unit_interval(), Coupling::MollifiedCongestion { strength: 1.0, bandwidth: 0.2 }, base.clone()).unwrap();
        let mu = two_agents();
        let end = pushforward(&mu, 1.0).unwrap();
        let probe = State::new_1d(-0.7, 0.1);
        let sol = game.mild_solution(&mu, &[(probe, 1.0)], &cfg(32)).unwrap();
        let crowd: f64 = end
            .points
            .iter()
            .map(|(s, w)| {
                let q = ((probe.x[0] - s.x[0]).powi(2) + (probe.v[0] - s.v[0]).powi(2)) / 0.04;
                w * bump(q).0
            })
            .sum();
        assert!((sol.u[0] - (2.0 * 0.49 + crowd)).abs() < 1e-12);
        assert_eq!(sol.marginals.len(), 1);
        let zero = Game::new(Domain::unit_interval(), Coupling::Zero, CostSpec::zero()).unwrap();
        let rest = zero.mild_solution(&mu, &[(State::new_1d(-0.5, 0.0), 0.4)], &cfg(32)).unwrap();
        assert!(rest.u[0].abs() < 1e-12);
    }

    #[test]
    fn mild_values_match_equilibrium_costs() {
        let game = Game::new(
            Domain::unit_interval(),
            Coupling::MollifiedCongestion { strength: 1.0, bandwidth: 0.3 },
            CostSpec::zero(),
        )
        .unwrap();
        let m0 = vec![(State::new_1d(-0.6, 0.2), 0.5), (State::new_1d(-0.5, -0.1), 0.5)];
        let c = cfg(64);
        let eq = game.fictitious_play(&m0, &c).unwrap();
        assert!(eq.converged);
        let grid: Vec<(State, f64)> = m0.iter().map(|(s, _)| (*s, 0.0)).collect();
        let sol = game.mild_solution(&eq.measure, &grid, &c).unwrap();
        let spec = game.coupled_spec(&eq.measure);
        // Atoms are optimal up to the exploitability reached.
        let mut excess = 0.0;
        for a in eq.measure.atoms() {
            let j = cost_of(&a.trajectory, &spec);
            assert!(j >= sol.u[a.agent] - 1e-6, "{j} vs {}", sol.u[a.agent]);
            excess += a.weight * (j - sol.u[a.agent]);
        }
        assert!(excess < c.exploitability_tol, "{excess}");
        assert_eq!(sol.marginals[0].1.points, m0);
    }

    #[test]
    fn truncation_renormalizes() {
        let theta = ThetaRSpec::new(Domain::interval(-1.0, 0.0).unwrap(), 1.0, ThetaMode::Interval1D).unwrap();
        let inside = vec![(State::new_1d(-0.5, 0.1), 0.5), (State::new_1d(-0.5, -0.1), 0.5)];
        assert_eq!(truncate_m0(&inside, &theta).unwrap(), inside);
        let half = vec![(State::new_1d(-0.5, 0.1), 0.5), (State::new_1d(-0.01, 0.9), 0.5)];
        assert_eq!(truncate_m0(&half, &theta).unwrap(), vec![(State::new_1d(-0.5, 0.1), 1.0)]);
        assert_eq!(truncate_m0(&[(State::new_1d(-0.01, 0.9), 1.0)], &theta).unwrap_err(), Error::EmptyTruncation);
        // Truncating to Θ_2 then Θ_1 equals truncating to Θ_1.
        let sample = sample_m0(&theta.with_r(4.0), 300, 9).unwrap();
        let nested = truncate_m0(&truncate_m0(&sample, &theta.with_r(2.0)).unwrap(), &theta).unwrap();
        let once = truncate_m0(&sample, &theta).unwrap();
        assert_eq!(nested.len(), once.len());
        for (a, b) in nested.iter().zip(&once) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-15);
        }
    }

    #[test]
    fn sampler_stays_in_theta() {
        let theta = ThetaRSpec::new(Domain::interval(-1.0, 0.0).unwrap(), 1.0, ThetaMode::Interval1D).unwrap();
        let m0 = sample_m0(&theta, 200, 3).unwrap();
        assert_eq!(m0.len(), 200);
        assert!(m0.iter().all(|(s, _)| theta.contains(s).unwrap()));
        assert_eq!(m0, sample_m0(&theta, 200, 3).unwrap());
        let disc = ThetaRSpec::new(Domain::disc([0.0, 0.0], 1.0).unwrap(), 0.5, ThetaMode::MarginSets { rho: 2.0 }).unwrap();
        assert!(sample_m0(&disc, 50, 1).unwrap().iter().all(|(s, _)| disc.contains(s).unwrap()));
    }
}
