use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{minimize_action, minimize_path, DiscretePath, InitialPath, MinimizeOptions};
use crate::model::ModelSpec;
use crate::{CoefficientVector, Error, Result};

#[derive(Debug, Clone)]
pub struct QuasipotentialResult {
    pub value: f64,
    pub path: DiscretePath,
    pub t_used: f64,
    /// `(T, min action)` for every horizon tried.
    pub t_profile: Vec<(f64, f64)>,
    /// Every horizon's minimisation met its stopping rule.
    pub converged: bool,
    /// The minimum lies strictly inside the horizon grid.
    pub bracketed: bool,
}

/// Serialisable summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasipotentialReport {
    pub value: f64,
    #[serde(rename = "T_profile")]
    pub t_profile: Vec<(f64, f64)>,
    #[serde(rename = "N_eff")]
    pub n_eff: Option<usize>,
    pub converged: bool,
}

impl QuasipotentialResult {
    pub fn report(&self, n_eff: Option<usize>) -> QuasipotentialReport {
        QuasipotentialReport { value: self.value, t_profile: self.t_profile.clone(), n_eff, converged: self.converged }
    }
}

/// `min_T Z(u*, v; T)` over an ascending horizon grid, warm-starting each
/// horizon from the previous minimiser. `m` is the interval count per horizon.
pub fn quasipotential(
    u_star: &CoefficientVector,
    v: &CoefficientVector,
    model: &ModelSpec,
    t_grid: &[f64],
    m: usize,
    opts: &MinimizeOptions,
) -> Result<QuasipotentialResult> {
    if t_grid.len() < 3 {
        return Err(Error::invalid("T_grid", "needs at least 3 horizons"));
    }
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) || !(t_grid[0] > 0.0) {
        return Err(Error::invalid("T_grid", "must be positive and strictly ascending"));
    }
    let mut best: Option<(usize, super::MinimizeResult)> = None;
    let mut profile = Vec::with_capacity(t_grid.len());
    let mut converged = true;
    let mut prev: Option<DiscretePath> = None;
    for (j, &t) in t_grid.iter().enumerate() {
        let r = match &prev {
            None => minimize_action(u_star, v, t, m, model, InitialPath::HeteroclinicGuess, opts)?,
            Some(p) => minimize_path(p.resampled(t, m)?, model, opts, model.n_modes())?,
        };
        converged &= r.converged;
        profile.push((t, r.action.total));
        prev = Some(r.path.clone());
        if best.as_ref().is_none_or(|(_, b)| r.action.total < b.action.total) {
            best = Some((j, r));
        }
    }
    let (j, best) = best.expect("non-empty grid");
    let bracketed = j + 1 < t_grid.len();
    if !bracketed {
        log::warn!("quasipotential profile still decreasing at T = {}; infimum not bracketed", t_grid[j]);
    }
    Ok(QuasipotentialResult {
        value: best.action.total,
        t_used: t_grid[j],
        path: best.path,
        t_profile: profile,
        converged,
        bracketed,
    })
}

#[derive(Debug, Clone)]
pub struct BoundarySearch {
    pub saddle: QuasipotentialResult,
    /// Quasipotential to each sampled boundary point, in input order.
    pub boundary: Vec<(CoefficientVector, QuasipotentialResult)>,
    /// Smallest of all values.
    pub z_bar: f64,
}

/// Estimate of `inf_{v∈∂D} Z(u*, v)`: the saddle target plus sampled boundary
/// points, minimised independently in parallel.
pub fn boundary_quasipotential(
    u_star: &CoefficientVector,
    saddle: &CoefficientVector,
    boundary: &[CoefficientVector],
    model: &ModelSpec,
    t_grid: &[f64],
    m: usize,
    opts: &MinimizeOptions,
) -> Result<BoundarySearch> {
    let targets: Vec<&CoefficientVector> = std::iter::once(saddle).chain(boundary).collect();
    let mut results: Vec<QuasipotentialResult> =
        targets.par_iter().map(|v| quasipotential(u_star, v, model, t_grid, m, opts)).collect::<Result<_>>()?;
    let rest = results.split_off(1);
    let saddle = results.pop().expect("saddle result");
    let z_bar = rest.iter().map(|r| r.value).fold(saddle.value, f64::min);
    Ok(BoundarySearch { saddle, boundary: boundary.iter().cloned().zip(rest).collect(), z_bar })
}
