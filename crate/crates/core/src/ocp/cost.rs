//! Running and terminal costs and the cost functional `J`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, sub, Point, State};
use crate::quadrature::GAUSS4;
use crate::trajectory::Trajectory;

/// Value, gradient and Hessian of a stage cost in the variables
/// `(x₀, x₁, v₀, v₁)`; unused second components are zero in 1D.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageEval {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

impl StageEval {
    pub fn add(&mut self, other: &StageEval) {
        self.value += other.value;
        for i in 0..4 {
            self.grad[i] += other.grad[i];
            for j in 0..4 {
                self.hess[i][j] += other.hess[i][j];
            }
        }
    }
}

/// A cost over `(x, v, t)`. Implementations must return exact derivatives.
pub trait StageCost: Send + Sync + Debug {
    fn eval(&self, s: &State, t: f64) -> StageEval;

    fn value(&self, s: &State, t: f64) -> f64 {
        self.eval(s, t).value
    }

    /// A lower bound of the cost over all states and times.
    fn lower_bound(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinCost {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `a|x − target|² + b|v|²`.
    Quadratic {
        a: f64,
        b: f64,
        #[serde(default)]
        target: Point,
    },
}

impl BuiltinCost {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BuiltinCost::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidArgument(format!("constant cost must be finite, got {value}")))
            }
            BuiltinCost::Quadratic { a, b, .. } if !(a >= 0.0 && b >= 0.0) => {
                Err(Error::InvalidArgument(format!("quadratic weights must be nonnegative, got a={a}, b={b}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BuiltinCost::Zero)
    }
}

impl StageCost for BuiltinCost {
    fn eval(&self, s: &State, _t: f64) -> StageEval {
        let mut e = StageEval::default();
        match *self {
            BuiltinCost::Zero => {}
            BuiltinCost::Constant { value } => e.value = value,
            BuiltinCost::Quadratic { a, b, target } => {
                let dx = sub(&s.x, &target);
                e.value = a * dot(&dx, &dx) + b * dot(&s.v, &s.v);
                for i in 0..2 {
                    e.grad[i] = 2.0 * a * dx[i];
                    e.grad[2 + i] = 2.0 * b * s.v[i];
                    e.hess[i][i] = 2.0 * a;
                    e.hess[2 + i][2 + i] = 2.0 * b;
                }
            }
        }
        e
    }

    fn lower_bound(&self) -> f64 {
        match *self {
            BuiltinCost::Constant { value } => value,
            _ => 0.0,
        }
    }
}

/// `ℓ`, `g` and the exponent `p` of `(1/p)∫|η′|^p`. Couplings injected by the
/// mean-field layer are added on top of the built-in parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(default)]
    pub running: BuiltinCost,
    #[serde(default)]
    pub terminal: BuiltinCost,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(skip)]
    pub extra_running: Option<Arc<dyn StageCost>>,
    #[serde(skip)]
    pub extra_terminal: Option<Arc<dyn StageCost>>,
}

fn default_p() -> f64 {
    2.0
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec::zero()
    }
}

impl CostSpec {
    pub fn zero() -> Self {
        CostSpec {
            running: BuiltinCost::Zero,
            terminal: BuiltinCost::Zero,
            p: 2.0,
            extra_running: None,
            extra_terminal: None,
        }
    }

    pub fn new(running: BuiltinCost, terminal: BuiltinCost, p: f64) -> Result<Self> {
        let spec = CostSpec { running, terminal, p, extra_running: None, extra_terminal: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::UnsupportedExponent(self.p));
        }
        self.running.validate()?;
        self.terminal.validate()
    }

    pub fn with_extra(&self, running: Option<Arc<dyn StageCost>>, terminal: Option<Arc<dyn StageCost>>) -> Self {
        CostSpec { extra_running: running, extra_terminal: terminal, ..self.clone() }
    }

    pub fn has_running(&self) -> bool {
        !self.running.is_zero() || self.extra_running.is_some()
    }

    pub fn has_terminal(&self) -> bool {
        !self.terminal.is_zero() || self.extra_terminal.is_some()
    }

    pub fn running_eval(&self, s: &State, t: f64) -> StageEval {
        let mut e = self.running.eval(s, t);
        if let Some(extra) = &self.extra_running {
            e.add(&extra.eval(s, t));
        }
        e
    }

    pub fn terminal_eval(&self, s: &State, t: f64) -> StageEval {
        let mut e = self.terminal.eval(s, t);
        if let Some(extra) = &self.extra_terminal {
            e.add(&extra.eval(s, t));
        }
        e
    }

    pub fn running_value(&self, s: &State, t: f64) -> f64 {
        let mut v = self.running.value(s, t);
        if let Some(extra) = &self.extra_running {
            v += extra.value(s, t);
        }
        v
    }

    pub fn terminal_value(&self, s: &State, t: f64) -> f64 {
        let mut v = self.terminal.value(s, t);
        if let Some(extra) = &self.extra_terminal {
            v += extra.value(s, t);
        }
        v
    }

    /// `M`: the larger of `sup ℓ₋` and `sup g₋`, so `J ≥ ½‖η′‖² − M(T + 1)`
    /// for `p = 2`.
    pub fn lower_bound_m(&self) -> f64 {
        let low = |b: &BuiltinCost, e: &Option<Arc<dyn StageCost>>| {
            b.lower_bound() + e.as_ref().map_or(0.0, |c| c.lower_bound())
        };
        let l = low(&self.running, &self.extra_running);
        let g = low(&self.terminal, &self.extra_terminal);
        (-l).max(-g).max(0.0)
    }
}

/// `J(ξ, η)` for a trajectory starting at time `0`.
pub fn cost_of(traj: &Trajectory, spec: &CostSpec) -> f64 {
    cost_of_from(traj, spec, 0.0)
}

/// `J` for a trajectory whose local time `s` corresponds to absolute time
/// `t0 + s`: energy, 4-point Gauss quadrature of `ℓ` per segment, and `g` at
/// the final state.
pub fn cost_of_from(traj: &Trajectory, spec: &CostSpec, t0: f64) -> f64 {
    let mut total = 0.0;
    for (k, seg) in traj.segments().enumerate() {
        total += seg.energy(spec.p);
        if spec.has_running() {
            let start = t0 + traj.times()[k];
            let h = seg.duration;
            total += h * GAUSS4
                .iter()
                .map(|&(u, w)| w * spec.running_value(&seg.state(u * h), start + u * h))
                .sum::<f64>();
        }
    }
    if spec.has_terminal() {
        total += spec.terminal_value(&traj.final_state(), t0 + traj.horizon());
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        let zero = CostSpec::zero();
        let rest = Trajectory::constant(1, [-0.3, 0.0], 1.0).unwrap();
        assert_eq!(cost_of(&rest, &zero), 0.0);
        let q = Trajectory::new(1, vec![0.0, 1.0], vec![State::new_1d(0.0, 0.0), State::new_1d(1.0, 0.0)]).unwrap();
        assert!((cost_of(&q, &zero) - 6.0).abs() < 1e-12);
        let one = CostSpec::new(BuiltinCost::Constant { value: 1.0 }, BuiltinCost::Zero, 2.0).unwrap();
        let t = Trajectory::new(
            1,
            vec![0.0, 0.4, 2.5],
            vec![State::new_1d(0.0, 1.0), State::new_1d(0.3, -0.2), State::new_1d(0.1, 0.0)],
        )
        .unwrap();
        assert!((cost_of(&t, &one) - (t.energy(2.0) + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_tracking_is_integrated_exactly() {
        // ℓ = |x|² along x(t) = t on [0, 1] integrates to 1/3 (degree 2, exact for 4-point Gauss).
        let spec = CostSpec::new(
            BuiltinCost::Quadratic { a: 1.0, b: 0.0, target: [0.0, 0.0] },
            BuiltinCost::Quadratic { a: 0.0, b: 2.0, target: [0.0, 0.0] },
            2.0,
        )
        .unwrap();
        let t = Trajectory::new(1, vec![0.0, 1.0], vec![State::new_1d(0.0, 1.0), State::new_1d(1.0, 1.0)]).unwrap();
        assert!((cost_of(&t, &spec) - (1.0 / 3.0 + 2.0)).abs() < 1e-14);
        assert_eq!(spec.lower_bound_m(), 0.0);
        let neg = CostSpec::new(BuiltinCost::Constant { value: -0.5 }, BuiltinCost::Zero, 2.0).unwrap();
        assert_eq!(neg.lower_bound_m(), 0.5);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(CostSpec::new(BuiltinCost::Zero, BuiltinCost::Zero, 1.0).is_err());
        assert!(CostSpec::new(BuiltinCost::Quadratic { a: -1.0, b: 0.0, target: [0.0; 2] }, BuiltinCost::Zero, 2.0).is_err());
    }
}
