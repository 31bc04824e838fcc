use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{action_eval, minimize_path, DiscretePath, MinimizeOptions};
use crate::model::ModelSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleReport {
    /// `max_t |(φ^i)′ + αφ^i|` per mode, on interval midpoints.
    pub deviations: Vec<f64>,
    pub full_action: f64,
    /// Re-minimised action with modes `≥ n` pinned, for `n = 0..=N`.
    pub pinned_actions: Vec<f64>,
    /// Smallest `n` whose relative action change is below `tol`.
    pub n_eff: usize,
}

/// Discrete relaxation factor: `φ_{k+1} = ρ φ_k` zeroes the interval residual
/// of `φ′ + αφ` exactly.
pub fn relaxation_factor(alpha: f64, h: f64) -> f64 {
    (1.0 - 0.5 * alpha * h) / (1.0 + 0.5 * alpha * h)
}

/// `max_k |(φ_{k+1} − φ_k)/h + α(φ_k + φ_{k+1})/2|` for each mode.
pub fn relaxation_deviation(path: &DiscretePath, alpha: f64) -> Vec<f64> {
    let h = path.h();
    (0..path.n_modes())
        .map(|i| {
            (0..path.m())
                .map(|k| {
                    let (a, b) = (path.nodes[(i, k)], path.nodes[(i, k + 1)]);
                    ((b - a) / h + 0.5 * alpha * (a + b)).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Copy of `path` with modes `≥ n` replaced by `φ^i_0 ρ^k`. The pinned rows
/// ignore the original end values.
pub fn pin_modes(path: &DiscretePath, alpha: f64, n: usize) -> DiscretePath {
    let rho = relaxation_factor(alpha, path.h());
    let mut p = path.clone();
    for i in n..path.n_modes() {
        let mut v = path.nodes[(i, 0)];
        for k in 0..=path.m() {
            p.nodes[(i, k)] = v;
            v *= rho;
        }
    }
    p
}

/// Measures how many leading modes a minimiser actually needs: for each
/// prefix length `n` the trailing modes are pinned to pure relaxation and the
/// leading ones re-minimised.
pub fn multiscale_truncate(
    minimizer: &DiscretePath,
    model: &ModelSpec,
    tol: f64,
    opts: &MinimizeOptions,
) -> Result<MultiscaleReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let n = minimizer.n_modes();
    let full_action = action_eval(minimizer, model)?.total;
    let pinned_actions: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|k| {
            if k == n {
                return Ok(full_action);
            }
            let start = pin_modes(minimizer, model.alpha(), k);
            Ok(minimize_path(start, model, opts, k)?.action.total)
        })
        .collect::<Result<_>>()?;
    let scale = full_action.abs().max(f64::MIN_POSITIVE);
    let n_eff = pinned_actions.iter().position(|&a| (a - full_action).abs() / scale < tol).unwrap_or(n);
    Ok(MultiscaleReport {
        deviations: relaxation_deviation(minimizer, model.alpha()),
        full_action,
        pinned_actions,
        n_eff,
    })
}
