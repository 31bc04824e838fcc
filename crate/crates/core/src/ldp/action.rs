use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DiscretePath;
use crate::model::ModelSpec;
use crate::{CoefficientVector, Error, Result};

/// Discrete rate function and its split
/// `I = ½ ∫ (a₁ − 2a₂ + a₃) dt` with `a₁ = ‖φ′+αφ‖²_𝔇`,
/// `a₂ = ⟨φ′+αφ, KF⟩_𝔇`, `a₃ = ‖KF‖²_𝔇 = Σ (KF_i / λ_i)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub total: f64,
    /// `(∫a₁, ∫a₂, ∫a₃)`.
    pub terms: (f64, f64, f64),
    /// `½ h r_kᵀ 𝔇⁻¹ r_k` per interval.
    pub per_interval: Vec<f64>,
}

/// `1/λ_i²` for the path's modes; zero eigenvalues are rejected.
pub(crate) fn inverse_covariance(model: &ModelSpec, n: usize) -> Result<Vec<f64>> {
    if n != model.n_modes() {
        return Err(Error::LengthMismatch { expected: model.n_modes(), got: n });
    }
    model
        .lambda_sq()?
        .iter()
        .enumerate()
        .map(|(i, &l)| if l > 0.0 { Ok(1.0 / l) } else { Err(Error::ZeroEigenvalue { mode: i }) })
        .collect()
}

/// Per-node drifts and the interval residuals
/// `r_k = (φ_{k+1} − φ_k)/h − ½(g(φ_k) + g(φ_{k+1}))`.
pub(crate) struct Residuals {
    pub kf: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub(crate) fn residuals(path: &DiscretePath, model: &ModelSpec) -> Residuals {
    let n = path.n_modes();
    let m = path.m();
    let h = path.h();
    let alpha = model.alpha();
    let mut ws = model.workspace();
    let mut kf = DMatrix::zeros(n, m + 1);
    let mut buf = CoefficientVector::zeros(n);
    for k in 0..=m {
        let u = path.nodes.column(k).into_owned();
        model.drift_into(&u, &mut ws, &mut buf);
        buf.axpy(alpha, &u, 1.0);
        kf.set_column(k, &buf);
    }
    let mut r = DMatrix::zeros(n, m);
    for k in 0..m {
        for i in 0..n {
            let (a, b) = (path.nodes[(i, k)], path.nodes[(i, k + 1)]);
            let lin = (b - a) / h + alpha * 0.5 * (a + b);
            r[(i, k)] = lin - 0.5 * (kf[(i, k)] + kf[(i, k + 1)]);
        }
    }
    Residuals { kf, r }
}

/// `I(φ) = ½ Σ_k h r_kᵀ 𝔇⁻¹ r_k` with the three-term split.
pub fn action_eval(path: &DiscretePath, model: &ModelSpec) -> Result<ActionValue> {
    let dinv = inverse_covariance(model, path.n_modes())?;
    let Residuals { kf, r } = residuals(path, model);
    let h = path.h();
    let alpha = model.alpha();
    let (mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0);
    let mut per_interval = Vec::with_capacity(path.m());
    let mut total = 0.0;
    for k in 0..path.m() {
        let mut q = 0.0;
        for (i, &di) in dinv.iter().enumerate() {
            let (a, b) = (path.nodes[(i, k)], path.nodes[(i, k + 1)]);
            let lin = (b - a) / h + alpha * 0.5 * (a + b);
            let kbar = 0.5 * (kf[(i, k)] + kf[(i, k + 1)]);
            a1 += h * di * lin * lin;
            a2 += h * di * lin * kbar;
            a3 += h * di * kbar * kbar;
            q += di * r[(i, k)] * r[(i, k)];
        }
        let piece = 0.5 * h * q;
        per_interval.push(piece);
        total += piece;
    }
    Ok(ActionValue { total, terms: (a1, a2, a3), per_interval })
}

/// The integrated `(a₁, a₂, a₃)`.
pub fn action_three_terms(path: &DiscretePath, model: &ModelSpec) -> Result<(f64, f64, f64)> {
    Ok(action_eval(path, model)?.terms)
}

/// Exact gradient of the discrete action with respect to every node; columns
/// of fixed endpoints are zero.
///
/// `∂I/∂φ_j = 𝔇⁻¹(r_{j−1} − r_j) − (h/2) J(φ_j)ᵀ 𝔇⁻¹ (r_{j−1} + r_j)`, with
/// missing neighbours dropped at the ends.
pub fn action_gradient(path: &DiscretePath, model: &ModelSpec) -> Result<DMatrix<f64>> {
    Ok(action_with_gradient(path, model)?.1)
}

pub(crate) fn action_with_gradient(path: &DiscretePath, model: &ModelSpec) -> Result<(f64, DMatrix<f64>)> {
    if !model.gain().is_smooth() {
        return Err(Error::UnsuitableGain("differentiable"));
    }
    let dinv = inverse_covariance(model, path.n_modes())?;
    let Residuals { r, .. } = residuals(path, model);
    let n = path.n_modes();
    let m = path.m();
    let h = path.h();
    let mut ws = model.workspace();
    let mut scaled = r.clone();
    let mut total = 0.0;
    for k in 0..m {
        for i in 0..n {
            total += 0.5 * h * dinv[i] * r[(i, k)] * r[(i, k)];
            scaled[(i, k)] *= dinv[i];
        }
    }
    let mut grad = DMatrix::zeros(n, m + 1);
    for j in 0..=m {
        if (j == 0 && path.fixed_start) || (j == m && path.fixed_end) {
            continue;
        }
        let mut lin = CoefficientVector::zeros(n);
        let mut sum = CoefficientVector::zeros(n);
        if j > 0 {
            lin += scaled.column(j - 1);
            sum += scaled.column(j - 1);
        }
        if j < m {
            lin -= scaled.column(j);
            sum += scaled.column(j);
        }
        let u = path.nodes.column(j).into_owned();
        let jt = model.jacobian_tr_mul(&u, &sum, &mut ws);
        grad.set_column(j, &(lin - jt * (0.5 * h)));
    }
    Ok((total, grad))
}
