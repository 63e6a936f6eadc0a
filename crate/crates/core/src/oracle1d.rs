//! Closed-form solutions of the one-dimensional entry problem: reach the
//! boundary point `0` from `(x, v)` within time `θ`, ending with velocity `w`,
//! never dropping below `w` and never crossing `0`, at least energy
//! `½∫|η′|²`.
//!
//! Only the quadratic energy has a closed form; other exponents are refused.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryProblem {
    pub x: f64,
    pub v: f64,
    pub w: f64,
    pub theta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `θ ≤ 2|x|/(v+w)`: constant deceleration, position constraint slack.
    Linear,
    /// `2|x|/(v+w) < θ < 3|x|/(v+2w)`: quadratic velocity, arrival exactly at `0`.
    FullQuadratic,
    /// `θ ≥ 3|x|/(v+2w)`: parabolic deceleration to `w` at `τ`, then cruise.
    ParabolicThenFlat,
}

/// Velocity `η(t) = v + k t + (μ/2) t²` on `[0, switch]`, then `w` until `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntrySolution {
    pub value: f64,
    pub regime: Regime,
    pub tau: Option<f64>,
    pub mu: f64,
    pub k: f64,
    pub switch: f64,
    pub problem: EntryProblem,
}

fn check_exponent(p: f64) -> Result<()> {
    if p == 2.0 {
        Ok(())
    } else {
        Err(Error::UnsupportedExponent(p))
    }
}

impl EntryProblem {
    pub fn new(x: f64, v: f64, w: f64, theta: f64, horizon: f64) -> Result<Self> {
        let p = EntryProblem { x, v, w, theta, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let EntryProblem { x, v, w, theta, horizon } = *self;
        let bad = |m: &str| Err(Error::InvariantViolated(m.to_string()));
        if ![x, v, w, theta, horizon].iter().all(|a| a.is_finite()) {
            return bad("non-finite parameter");
        }
        if !(x < 0.0) {
            return bad("x must be negative");
        }
        if !(v > 0.0) {
            return bad("v must be positive");
        }
        if !(3.0 * x.abs() / v < horizon) {
            return bad("3|x|/v must be below T");
        }
        if !(w >= 0.0 && w <= x.abs() / horizon) {
            return bad("w must lie in [0, |x|/T]");
        }
        if !(theta > 0.0 && theta < horizon) {
            return bad("theta must lie in (0, T)");
        }
        Ok(())
    }

    /// `2|x|/(v+w)` and `3|x|/(v+2w)`.
    pub fn regime_bounds(&self) -> (f64, f64) {
        regime_bounds(self.x, self.v, self.w)
    }
}

fn regime_bounds(x: f64, v: f64, w: f64) -> (f64, f64) {
    (2.0 * x.abs() / (v + w), 3.0 * x.abs() / (v + 2.0 * w))
}

fn linear_value(v: f64, w: f64, theta: f64) -> f64 {
    0.5 * (w - v).powi(2) / theta
}

fn quadratic_value(x: f64, v: f64, w: f64, theta: f64) -> f64 {
    6.0 * x * x / theta.powi(3) + 6.0 * x * (v + w) / (theta * theta)
        + 2.0 * (v * v + v * w + w * w) / theta
}

fn flat_value(x: f64, v: f64, w: f64, theta: f64) -> f64 {
    2.0 / 9.0 * (v - w).powi(3) / (x.abs() - w * theta)
}

/// The value formula of each regime, evaluated at any `θ` (used to check
/// continuity at the regime boundaries).
pub fn regime_value(regime: Regime, x: f64, v: f64, w: f64, theta: f64) -> f64 {
    match regime {
        Regime::Linear => linear_value(v, w, theta),
        Regime::FullQuadratic => quadratic_value(x, v, w, theta),
        Regime::ParabolicThenFlat => flat_value(x, v, w, theta),
    }
}

fn select_regime(x: f64, v: f64, w: f64, theta: f64) -> Regime {
    let (t1, t2) = regime_bounds(x, v, w);
    if theta <= t1 {
        Regime::Linear
    } else if theta < t2 {
        Regime::FullQuadratic
    } else {
        Regime::ParabolicThenFlat
    }
}

pub fn entry_energy(p: &EntryProblem) -> Result<f64> {
    p.validate()?;
    let regime = select_regime(p.x, p.v, p.w, p.theta);
    Ok(regime_value(regime, p.x, p.v, p.w, p.theta))
}

/// As [`entry_energy`], for an acceleration cost `(1/p)|α|^p`.
pub fn entry_energy_with_exponent(problem: &EntryProblem, p: f64) -> Result<f64> {
    check_exponent(p)?;
    entry_energy(problem)
}

pub fn entry_trajectory(p: &EntryProblem) -> Result<EntrySolution> {
    p.validate()?;
    Ok(solve_unchecked(*p))
}

/// The explicit minimizer without the horizon hypotheses; needs `x ≤ 0`,
/// `v > 0`, `0 ≤ w < v` and `θ > 0`.
pub(crate) fn solve_unchecked(problem: EntryProblem) -> EntrySolution {
    let EntryProblem { x, v, w, theta, .. } = problem;
    let regime = select_regime(x, v, w, theta);
    let value = regime_value(regime, x, v, w, theta);
    let (k, mu, tau, switch) = match regime {
        Regime::Linear => (-(v - w) / theta, 0.0, None, theta),
        Regime::FullQuadratic => {
            let k = -(6.0 * x + (4.0 * v + 2.0 * w) * theta) / (theta * theta);
            let mu = 6.0 * (2.0 * x + (v + w) * theta) / theta.powi(3);
            (k, mu, None, theta)
        }
        Regime::ParabolicThenFlat => {
            let tau = -3.0 * (x + w * theta) / (v - w);
            let mu = 2.0 * (v - w).powi(3) / (9.0 * (x + w * theta).powi(2));
            (-mu * tau, mu, Some(tau), tau)
        }
    };
    EntrySolution { value, regime, tau, mu, k, switch, problem }
}

impl EntrySolution {
    pub fn velocity(&self, t: f64) -> f64 {
        if t >= self.switch {
            return self.problem.w;
        }
        self.problem.v + t * (self.k + 0.5 * self.mu * t)
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        if t >= self.switch {
            0.0
        } else {
            self.k + self.mu * t
        }
    }

    /// `x + ∫_0^t η`.
    pub fn position(&self, t: f64) -> f64 {
        let s = t.min(self.switch);
        let head = self.problem.x + s * (self.problem.v + s * (0.5 * self.k + self.mu * s / 6.0));
        head + (t - s).max(0.0) * self.problem.w
    }

    /// `x + ∫_0^θ η`, non-positive for feasible profiles.
    pub fn terminal_slack(&self) -> f64 {
        self.position(self.problem.theta)
    }

    pub fn complementarity_residual(&self) -> f64 {
        (self.mu * self.terminal_slack()).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalTheta {
    pub theta_star: f64,
    pub min_value: f64,
    /// Leading term `(2/9) v³/|x|` of the minimum as `w → 0`.
    pub asymptotic: f64,
}

pub fn optimal_theta(x: f64, v: f64, w: f64, horizon: f64) -> Result<OptimalTheta> {
    let theta_star = 3.0 * x.abs() / (v + w + (v * w).sqrt());
    let problem = EntryProblem::new(x, v, w, theta_star, horizon)?;
    Ok(OptimalTheta {
        theta_star,
        min_value: entry_energy(&problem)?,
        asymptotic: blowup_estimate(x, v),
    })
}

/// `(2/9) (v_+)³ / |x|`.
pub fn blowup_estimate(x: f64, v: f64) -> f64 {
    let vp = v.max(0.0);
    if vp == 0.0 {
        return 0.0;
    }
    2.0 / 9.0 * vp.powi(3) / x.abs()
}

/// Longest first phase that keeps the normal connector inside:
/// `3 d_abs / v_normal_plus`, infinite when the normal speed vanishes.
pub fn max_phase1_time(d_abs: f64, v_normal_plus: f64) -> f64 {
    if v_normal_plus <= 0.0 {
        f64::INFINITY
    } else {
        3.0 * d_abs / v_normal_plus
    }
}
