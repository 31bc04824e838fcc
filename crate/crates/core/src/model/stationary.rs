use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::{CoefficientVector, Error, Result};

/// Eigenvalues with `|Re λ|` below this are treated as zero.
pub const STABILITY_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Every `Re λ < −margin`.
    Stable,
    /// Some `Re λ > margin` and not a one-dimensional saddle.
    Unstable,
    /// Exactly one `Re λ > margin`, the rest `< −margin`.
    SaddleLike,
    /// No unstable direction but some `|Re λ| ≤ margin`.
    Marginal,
}

impl Classification {
    /// At least one eigenvalue with `Re λ > margin`.
    pub fn is_unstable(self) -> bool {
        matches!(self, Classification::Unstable | Classification::SaddleLike)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone)]
pub struct StationaryState {
    pub u_star: CoefficientVector,
    /// `‖drift(u_star)‖₂`.
    pub residual: f64,
    pub jacobian_eigs: Vec<Complex<f64>>,
    pub classification: Classification,
    pub iterations: usize,
}

impl StationaryState {
    /// `η = Re λ + α` for each Jacobian eigenvalue.
    pub fn eta(&self, alpha: f64) -> Vec<f64> {
        self.jacobian_eigs.iter().map(|e| e.re + alpha).collect()
    }
}

pub fn classify(eigs: &[Complex<f64>], margin: f64) -> Classification {
    let pos = eigs.iter().filter(|e| e.re > margin).count();
    let neg = eigs.iter().filter(|e| e.re < -margin).count();
    if pos == 0 && neg == eigs.len() {
        Classification::Stable
    } else if pos == 1 && neg == eigs.len() - 1 {
        Classification::SaddleLike
    } else if pos > 0 {
        Classification::Unstable
    } else {
        Classification::Marginal
    }
}

/// Zero of the drift. Newton iterations use a backtracking line search and
/// drop to the damped fixed-point map `u ← (1−ω)u + (ω/α)(KF)(u)`, `ω = 0.5`,
/// when a Newton step cannot reduce the residual.
pub fn stationary_solve(
    model: &ModelSpec,
    init: &CoefficientVector,
    method: SolveMethod,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryState> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let omega = 0.5;
    let alpha = model.alpha();
    let mut u = init.clone();
    let mut r = model.drift(&u)?;
    let mut res = r.norm();
    let mut best = res;
    let mut newton = method == SolveMethod::Newton;
    let mut iterations = 0;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence { iterations, best_residual: best });
        }
        iterations += 1;
        if newton {
            let j = model.jacobian(&u)?;
            let step = j.lu().solve(&(-&r)).ok_or(Error::SingularJacobian)?;
            if !step.iter().all(|s| s.is_finite()) {
                return Err(Error::SingularJacobian);
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial = &u + &step * t;
                let rt = model.drift(&trial)?;
                let nt = rt.norm();
                if nt < res {
                    u = trial;
                    r = rt;
                    res = nt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                log::debug!("Newton line search stalled at residual {res:e}; switching to fixed-point");
                newton = false;
            }
        } else {
            let kf = &r + &u * alpha;
            u = &u * (1.0 - omega) + kf * (omega / alpha);
            r = model.drift(&u)?;
            res = r.norm();
        }
        if !res.is_finite() {
            return Err(Error::NonConvergence { iterations, best_residual: best });
        }
        best = best.min(res);
    }
    let j = model.jacobian(&u)?;
    let jacobian_eigs: Vec<Complex<f64>> = j.complex_eigenvalues().iter().copied().collect();
    let classification = classify(&jacobian_eigs, STABILITY_MARGIN);
    Ok(StationaryState { u_star: u, residual: res, jacobian_eigs, classification, iterations })
}
