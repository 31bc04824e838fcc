use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::action::{action_with_gradient, inverse_covariance};
use super::{action_eval, ActionValue, DiscretePath, InitialPath};
use crate::model::ModelSpec;
use crate::{CoefficientVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop when `max |∂I/∂φ|` falls below this.
    pub grad_tol: f64,
    /// Stop when the action improves by less than `rel_tol · I` over
    /// `stall_window` consecutive iterations.
    pub rel_tol: f64,
    pub stall_window: usize,
    /// L-BFGS memory; 0 gives preconditioned steepest descent.
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { max_iters: 5000, grad_tol: 1e-7, rel_tol: 1e-13, stall_window: 20, memory: 10 }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be > 0"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol", "must be > 0"));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::invalid("rel_tol", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub path: DiscretePath,
    pub action: ActionValue,
    pub converged: bool,
    pub iterations: usize,
    /// Action after every accepted step, starting with the initial path.
    pub history: Vec<f64>,
    pub grad_norm: f64,
}

/// Minimum-action path between fixed endpoints on `[0, T]` with `M` intervals.
pub fn minimize_action(
    start: &CoefficientVector,
    end: &CoefficientVector,
    t_end: f64,
    m: usize,
    model: &ModelSpec,
    init: InitialPath,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    if !start.iter().chain(end.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("endpoints", "must be finite"));
    }
    let path = DiscretePath::initial(start, end, t_end, m, init)?;
    minimize_path(path, model, opts, model.n_modes())
}

/// Descends from `path`. Only the first `free_modes` rows move; the remaining
/// rows and any fixed endpoint columns stay as given.
pub fn minimize_path(
    path: DiscretePath,
    model: &ModelSpec,
    opts: &MinimizeOptions,
    free_modes: usize,
) -> Result<MinimizeResult> {
    opts.validate()?;
    let n = path.n_modes();
    let lam: Vec<f64> = inverse_covariance(model, n)?.iter().map(|d| 1.0 / d).collect();
    let free_modes = free_modes.min(n);
    let precond = Preconditioner::new(&path, model.alpha(), &lam, free_modes);

    let mut path = path;
    let (mut value, mut grad) = action_with_gradient(&path, model)?;
    precond.mask(&mut grad);
    let mut history = vec![value];
    let mut pairs: VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = grad.amax();

    while iterations < opts.max_iters {
        if grad_norm < opts.grad_tol || free_modes == 0 {
            converged = true;
            break;
        }
        let w = opts.stall_window;
        if w > 0 && history.len() > w {
            let old = history[history.len() - 1 - w];
            if old - value <= opts.rel_tol * value.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        iterations += 1;

        let mut dir = -two_loop(&grad, &pairs, &precond);
        let mut slope = dir.dot(&grad);
        if !(slope < 0.0) {
            pairs.clear();
            dir = -precond.apply(&grad);
            slope = dir.dot(&grad);
        }
        let step = match line_search(&path, model, value, slope, &dir) {
            Some(s) => s,
            None if !pairs.is_empty() => {
                pairs.clear();
                dir = -precond.apply(&grad);
                slope = dir.dot(&grad);
                match line_search(&path, model, value, slope, &dir) {
                    Some(s) => s,
                    None => break,
                }
            }
            None => break,
        };
        let (t, new_value, mut new_grad) = step;
        precond.mask(&mut new_grad);
        let s = &dir * t;
        let y = &new_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            if opts.memory > 0 {
                pairs.push_back((s.clone(), y, 1.0 / sy));
            }
        }
        path.nodes += s;
        value = new_value;
        grad = new_grad;
        grad_norm = grad.amax();
        history.push(value);
    }
    if !converged {
        log::debug!("action minimisation stopped after {iterations} iterations, |grad| = {grad_norm:.3e}");
    }
    let action = action_eval(&path, model)?;
    Ok(MinimizeResult { path, action, converged, iterations, history, grad_norm })
}

/// Armijo backtracking; returns the accepted step and the new value/gradient.
fn line_search(
    path: &DiscretePath,
    model: &ModelSpec,
    value: f64,
    slope: f64,
    dir: &DMatrix<f64>,
) -> Option<(f64, f64, DMatrix<f64>)> {
    let mut t = 1.0;
    let mut trial = path.clone();
    for _ in 0..60 {
        trial.nodes.copy_from(&path.nodes);
        trial.nodes += dir * t;
        if let Ok((v, g)) = action_with_gradient(&trial, model) {
            if v.is_finite() && v <= value + 1e-4 * t * slope {
                return Some((t, v, g));
            }
        }
        t *= 0.5;
    }
    None
}

fn two_loop(
    grad: &DMatrix<f64>,
    pairs: &VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)>,
    precond: &Preconditioner,
) -> DMatrix<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q -= y * a;
        alphas.push(a);
    }
    let mut r = precond.apply(&q);
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&r);
        r += s * (a - b);
    }
    r
}

/// Inverse of the action Hessian with the nonlinearity dropped: per mode,
/// `λ_i² A⁻¹` with `A` the tridiagonal form of `h Σ_k (D_k)ᵀ D_k`,
/// `D_k φ = (φ_{k+1} − φ_k)/h + α(φ_k + φ_{k+1})/2`.
struct Preconditioner {
    lam_sq: Vec<f64>,
    free_modes: usize,
    /// Free node range `[lo, hi)`.
    lo: usize,
    hi: usize,
    diag: Vec<f64>,
    off: f64,
}

impl Preconditioner {
    fn new(path: &DiscretePath, alpha: f64, lam_sq: &[f64], free_modes: usize) -> Self {
        let m = path.m();
        let h = path.h();
        let lo = usize::from(path.fixed_start);
        let hi = if path.fixed_end { m } else { m + 1 };
        let inner = 1.0 / h + h * alpha * alpha / 4.0;
        let diag = (lo..hi)
            .map(|k| {
                let intervals = usize::from(k > 0) + usize::from(k < m);
                let mut d = inner * intervals as f64;
                if k == 0 {
                    d -= alpha;
                }
                if k == m {
                    d += alpha;
                }
                d.max(1e-3 * inner)
            })
            .collect();
        Self { lam_sq: lam_sq.to_vec(), free_modes, lo, hi, diag, off: -1.0 / h + h * alpha * alpha / 4.0 }
    }

    fn mask(&self, g: &mut DMatrix<f64>) {
        let m1 = g.ncols();
        for k in (0..self.lo).chain(self.hi..m1) {
            g.column_mut(k).fill(0.0);
        }
        let n = g.nrows();
        if self.free_modes < n {
            g.rows_mut(self.free_modes, n - self.free_modes).fill(0.0);
        }
    }

    fn apply(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        let len = self.hi - self.lo;
        if len == 0 {
            return out;
        }
        let mut rhs = vec![0.0; len];
        for i in 0..self.free_modes {
            for (j, k) in (self.lo..self.hi).enumerate() {
                rhs[j] = g[(i, k)];
            }
            let z = solve_symmetric_tridiagonal(&self.diag, self.off, &rhs);
            for (j, k) in (self.lo..self.hi).enumerate() {
                out[(i, k)] = self.lam_sq[i] * z[j];
            }
        }
        out
    }
}

/// Thomas algorithm for a symmetric tridiagonal system with constant
/// off-diagonal.
fn solve_symmetric_tridiagonal(diag: &[f64], off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = off / denom;
    d[0] = rhs[0] / denom;
    for k in 1..n {
        denom = diag[k] - off * c[k - 1];
        c[k] = off / denom;
        d[k] = (rhs[k] - off * d[k - 1]) / denom;
    }
    let mut x = d;
    for k in (0..n.saturating_sub(1)).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{stationary_solve, SolveMethod};

    #[test]
    fn thomas_matches_dense() {
        let diag = [4.0, 5.0, 3.0, 6.0];
        let off = -1.5;
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let x = solve_symmetric_tridiagonal(&diag, off, &rhs);
        let a = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                diag[i]
            } else if i.abs_diff(j) == 1 {
                off
            } else {
                0.0
            }
        });
        let r = a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_row_slice(&rhs);
        assert!(r.amax() < 1e-14);
    }

    fn states(model: &ModelSpec) -> (CoefficientVector, CoefficientVector, CoefficientVector) {
        let solve =
            |c| stationary_solve(model, &model.constant_state(c), SolveMethod::Newton, 1e-13, 100).unwrap().u_star;
        (solve(0.0), solve(0.5), solve(1.0))
    }

    #[test]
    fn constant_path_stays_put() {
        let m = ModelSpec::scalar_bistable().unwrap();
        let (lo, _, _) = states(&m);
        let r = minimize_action(&lo, &lo, 5.0, 50, &m, InitialPath::Linear, &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.action.total < 1e-20);
    }

    #[test]
    fn descent_is_monotone_and_downhill_is_free() {
        let m = ModelSpec::scalar_bistable().unwrap();
        let (_, s, hi) = states(&m);
        let mut last = f64::INFINITY;
        for t in [2.0, 6.0, 12.0] {
            let r =
                minimize_action(&s, &hi, t, (40.0 * t) as usize, &m, InitialPath::Linear, &MinimizeOptions::default())
                    .unwrap();
            assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
            assert!(r.action.total <= r.history[0]);
            assert!(r.action.total < last);
            last = r.action.total;
        }
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn uphill_cost_is_positive_and_path_leaves_gradient_small() {
        let m = ModelSpec::homogeneous_bistable(1, 3, 1.0).unwrap();
        let (lo, s, _) = states(&m);
        let r = minimize_action(&lo, &s, 8.0, 160, &m, InitialPath::HeteroclinicGuess, &MinimizeOptions::default())
            .unwrap();
        assert!(r.action.total > 0.0);
        assert!(r.converged, "grad {}", r.grad_norm);
        assert_eq!(r.path.start(), lo);
        assert_eq!(r.path.end(), s);
    }
}
