//! Augmented-Lagrangian outer loop around a damped Newton method on the
//! banded Hessian.

use super::transcription::{Need, Penalty, Transcription};
use super::OCPConfig;

#[derive(Debug)]
pub(crate) struct Solved {
    pub z: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
}

struct Inner {
    converged: bool,
    residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Consecutive steps without a decrease above rounding noise before Newton
/// gives up on the current multipliers.
const MAX_STAGNANT: usize = 5;

/// Damped Newton on the AL merit with Armijo backtracking. Stops when half
/// the Newton decrement falls below `inner_tol (1 + |f|)`.
fn newton(tr: &Transcription, z: &mut Vec<f64>, pen: &Penalty, cfg: &OCPConfig) -> Inner {
    let mut residual = f64::INFINITY;
    let mut stagnant = 0;
    for _ in 0..cfg.max_newton {
        let a = tr.assemble(z, Some(pen), Need::Hessian);
        let hess = a.h.expect("hessian requested");
        let rhs: Vec<f64> = a.g.iter().map(|g| -g).collect();
        let Some((step, _)) = hess.solve_regularized(&rhs) else {
            return Inner { converged: false, residual };
        };
        let slope = dot(&a.g, &step);
        let decrement = -slope;
        residual = (decrement.max(0.0) / 2.0).sqrt();
        if decrement / 2.0 <= cfg.inner_tol * (1.0 + a.f.abs()) {
            return Inner { converged: true, residual };
        }
        if !(slope < 0.0) {
            return Inner { converged: false, residual };
        }
        // Rounding noise of `f`; decreases below it carry no information.
        let noise = 1e3 * f64::EPSILON * (1.0 + a.fabs);
        let mut alpha = 1.0;
        let mut trial = z.clone();
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, z0), s) in trial.iter_mut().zip(z.iter()).zip(&step) {
                *t = z0 + alpha * s;
            }
            let f = tr.value(&trial, Some(pen));
            if f <= a.f + 1e-4 * alpha * slope {
                accepted = Some(f);
                break;
            }
            alpha *= 0.5;
        }
        let Some(f) = accepted else {
            return Inner { converged: decrement / 2.0 <= noise, residual };
        };
        std::mem::swap(z, &mut trial);
        if a.f - f <= noise {
            if decrement / 2.0 <= 10.0 * noise {
                return Inner { converged: true, residual };
            }
            // At large penalties the merit's kinks can make Newton steps
            // useless; the outer loop decides what a stalled iterate means.
            stagnant += 1;
            if stagnant == MAX_STAGNANT {
                return Inner { converged: false, residual };
            }
        } else {
            stagnant = 0;
        }
    }
    Inner { converged: false, residual }
}

/// Outer multiplier loop on a fixed sample set. Converged once every
/// tightened sample is within half the tolerance of zero, so the samples
/// themselves hold exactly.
fn augmented_lagrangian(tr: &Transcription, z: &mut Vec<f64>, pen: &mut Penalty, cap: f64, cfg: &OCPConfig) -> Inner {
    let mut prev = f64::INFINITY;
    let mut prev_f = f64::INFINITY;
    let mut last = Inner { converged: false, residual: f64::INFINITY };
    for _ in 0..cfg.max_outer {
        last = newton(tr, z, pen, cfg);
        let violation = tr.update_multipliers(z, pen).max(0.0);
        let f = tr.value(z, None);
        if violation <= 0.5 * cfg.constraint_tol {
            // Once feasible, an objective that no longer moves between
            // outer iterations means the multipliers have settled.
            let stalled = (f - prev_f).abs() <= 1e-12 * (1.0 + f.abs());
            if last.converged || stalled {
                return Inner { converged: true, residual: last.residual };
            }
        } else if violation > 0.25 * prev {
            pen.rho = (pen.rho * cfg.penalty_growth).min(cap);
        }
        prev = violation;
        prev_f = f;
    }
    Inner { converged: false, residual: last.residual }
}

/// Rounds of sample refinement before giving up on exact containment.
const MAX_EXCHANGE: usize = 12;

/// Solves on one grid: AL on the sampled constraints, then samples at the
/// exact maximizers of still-violating segments, until none remain.
pub(crate) fn solve_grid(tr: &Transcription, z0: Vec<f64>, cfg: &OCPConfig) -> Solved {
    let mut z = z0;
    // Penalty relative to the stiffest curvature of the objective, so the
    // multiplier update contracts at a rate set by `penalty_init` alone.
    let stiffness = tr.assemble(&z, None, Need::Hessian).h.map_or(1.0, |h| h.max_diag()).max(1.0);
    let rho = cfg.penalty_init * stiffness;
    let mut pen = tr.penalty(rho, 0.5 * cfg.constraint_tol);
    let mut inner = Inner { converged: false, residual: f64::INFINITY };
    for _ in 0..MAX_EXCHANGE {
        inner = augmented_lagrangian(tr, &mut z, &mut pen, 1e8 * rho, cfg);
        if tr.refine(&z, &mut pen, 0.25 * cfg.constraint_tol) == 0 {
            return Solved { z, residual: inner.residual, converged: inner.converged };
        }
    }
    let exact = tr.constraint_values(&z).into_iter().fold(0.0f64, f64::max);
    Solved { z, residual: inner.residual, converged: inner.converged && exact <= cfg.constraint_tol }
}
