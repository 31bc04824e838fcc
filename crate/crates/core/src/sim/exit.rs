use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::{Scheme, Stepper};
use crate::model::ModelSpec;
use crate::noise::{lambda_of, NoiseStream};
use crate::stats::{self, LinearFit};
use crate::{CoefficientVector, Error, Result};

/// Exit from the `ℓ²` ball of `radius` around a stable `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitExperiment {
    pub center: CoefficientVector,
    pub radius: f64,
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub t_max: f64,
    /// Fixed step; `None` selects [`exit_dt`] per `ε`.
    pub dt: Option<f64>,
    pub seed: u64,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSamples {
    pub epsilon: f64,
    pub dt: f64,
    pub t_max: f64,
    pub taus: Vec<f64>,
    pub censored: Vec<bool>,
}

impl ExitSamples {
    pub fn n(&self) -> usize {
        self.taus.len()
    }

    pub fn n_censored(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.n_censored() as f64 / self.n().max(1) as f64
    }

    /// Exponential maximum-likelihood mean with right censoring:
    /// total observed time over the number of exits.
    pub fn mean(&self) -> Option<f64> {
        let exits = self.n() - self.n_censored();
        (exits > 0).then(|| self.taus.iter().sum::<f64>() / exits as f64)
    }

    pub fn uncensored(&self) -> Vec<f64> {
        self.taus.iter().zip(&self.censored).filter(|(_, c)| !**c).map(|(t, _)| *t).collect()
    }

    /// Rows `epsilon,path_id,tau,censored` (no header).
    pub fn write_csv_rows(&self, mut w: impl Write) -> std::io::Result<()> {
        for (p, (t, c)) in self.taus.iter().zip(&self.censored).enumerate() {
            writeln!(w, "{},{},{},{}", self.epsilon, p, t, *c as u8)?;
        }
        Ok(())
    }
}

/// `min(0.01/α, r² / (100 ε² Σλ²))`.
pub fn exit_dt(model: &ModelSpec, radius: f64, epsilon: f64) -> Result<f64> {
    let trace: f64 = model.lambda_sq()?.iter().sum();
    let base = 0.01 / model.alpha();
    if epsilon == 0.0 || trace == 0.0 {
        return Ok(base);
    }
    Ok(base.min(radius * radius / (100.0 * epsilon * epsilon * trace)))
}

fn path_id(eps_index: usize, path: usize) -> u64 {
    ((eps_index as u64) << 32) | path as u64
}

/// Runs `n_paths` independent paths from `start` until `stop` fires or
/// `t_max`; results in path-id order.
#[allow(clippy::too_many_arguments)]
fn stopping_times(
    model: &ModelSpec,
    start: &CoefficientVector,
    stop: &(dyn Fn(&CoefficientVector) -> bool + Sync),
    epsilon: f64,
    n_paths: usize,
    t_max: f64,
    dt: f64,
    seed: u64,
    eps_index: usize,
    scheme: Scheme,
) -> Result<ExitSamples> {
    let n = model.n_modes();
    if start.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: start.len() });
    }
    if !(dt > 0.0) || (scheme == Scheme::EulerMaruyama && dt >= 1.0 / model.alpha()) {
        return Err(Error::invalid("dt", "must satisfy 0 < dt < 1/alpha"));
    }
    let lambda = lambda_of(model.basis());
    let stepper = Stepper::new(scheme, model.alpha(), dt);
    let max_steps = (t_max / dt).ceil() as usize;
    let results: Vec<Result<(f64, bool)>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = NoiseStream::new(seed, path_id(eps_index, p), model.basis());
            let mut ws = model.workspace();
            let mut u = start.clone();
            let mut kf = CoefficientVector::zeros(n);
            let mut xi = vec![0.0; n];
            let mut noise = vec![0.0; n];
            for step in 1..=max_steps {
                stream.next_normals(&mut xi);
                for i in 0..n {
                    noise[i] = epsilon * lambda[i] * stepper.noise_sd * xi[i];
                }
                stepper.advance(model, &mut u, &mut kf, &mut ws, &noise);
                if !u.iter().all(|v| v.is_finite()) {
                    return Err(Error::BlowUp { step });
                }
                if stop(&u) {
                    return Ok((step as f64 * dt, false));
                }
            }
            Ok((t_max, true))
        })
        .collect();
    let mut taus = Vec::with_capacity(n_paths);
    let mut censored = Vec::with_capacity(n_paths);
    for r in results {
        let (t, c) = r?;
        taus.push(t);
        censored.push(c);
    }
    Ok(ExitSamples { epsilon, dt, t_max, taus, censored })
}

/// First exit times from the ball for one noise level (`eps_index` selects
/// the independent block of path ids used for that level).
pub fn first_exit(model: &ModelSpec, exp: &ExitExperiment, eps_index: usize) -> Result<ExitSamples> {
    let epsilon = *exp.epsilons.get(eps_index).ok_or_else(|| Error::invalid("epsilons", "index out of range"))?;
    if !(exp.radius > 0.0) {
        return Err(Error::invalid("radius", "must be > 0"));
    }
    let dt = match exp.dt {
        Some(dt) => dt,
        None => exit_dt(model, exp.radius, epsilon)?,
    };
    let center = exp.center.clone();
    let r = exp.radius;
    let stop = move |u: &CoefficientVector| (u - &center).norm() > r;
    let samples = stopping_times(
        model,
        &exp.center,
        &stop,
        epsilon,
        exp.n_paths,
        exp.t_max,
        dt,
        exp.seed,
        eps_index,
        exp.scheme,
    )?;
    if samples.n() > 0 && samples.n_censored() == samples.n() {
        return Err(Error::AllCensored { epsilon, t_max: exp.t_max });
    }
    Ok(samples)
}

/// First passage from `start` into the `delta`-ball around `target`.
#[allow(clippy::too_many_arguments)]
pub fn transition_times(
    model: &ModelSpec,
    start: &CoefficientVector,
    target: &CoefficientVector,
    delta: f64,
    epsilon: f64,
    n_paths: usize,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<ExitSamples> {
    let target = target.clone();
    let stop = move |u: &CoefficientVector| (u - &target).norm() < delta;
    let samples = stopping_times(model, start, &stop, epsilon, n_paths, t_max, dt, seed, 0, Scheme::EulerMaruyama)?;
    if samples.n() > 0 && samples.n_censored() == samples.n() {
        return Err(Error::AllCensored { epsilon, t_max });
    }
    Ok(samples)
}

/// Deterministic check that the ball lies in the basin of `center`: points on
/// the sphere (coordinate directions and `n_random` random ones) must relax
/// to within `radius/10` of the center within `50/α`.
pub fn validate_radius(
    model: &ModelSpec,
    center: &CoefficientVector,
    radius: f64,
    n_random: usize,
    seed: u64,
) -> Result<()> {
    let n = model.n_modes();
    let mut dirs: Vec<CoefficientVector> = Vec::new();
    for i in 0..n.min(8) {
        for s in [1.0, -1.0] {
            let mut d = CoefficientVector::zeros(n);
            d[i] = s;
            dirs.push(d);
        }
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    for _ in 0..n_random {
        let d = CoefficientVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if d.norm() > 1e-12 {
            dirs.push(d.normalize());
        }
    }
    let dt = 0.01 / model.alpha();
    let steps = (50.0 / model.alpha() / dt).ceil() as usize;
    let stepper = Stepper::new(Scheme::EulerMaruyama, model.alpha(), dt);
    let zero = vec![0.0; n];
    for d in dirs {
        let mut u = center + d * radius;
        let mut kf = CoefficientVector::zeros(n);
        let mut ws = model.workspace();
        for _ in 0..steps {
            stepper.advance(model, &mut u, &mut kf, &mut ws, &zero);
        }
        let dist = (&u - center).norm();
        if !(dist < 0.1 * radius) {
            return Err(Error::RadiusOutsideBasin {
                radius,
                reason: format!("boundary point ended at distance {dist:.3e} from the center"),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub n: usize,
    pub n_censored: usize,
    pub mean: f64,
    pub sem: f64,
    pub eps2_log_mean: f64,
    pub eps2_log_mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitScaling {
    pub rows: Vec<ScalingRow>,
    pub fit: LinearFit,
    /// Extrapolated `lim ε² ln E[τ]`.
    pub z_bar: f64,
    /// 95% half-width of `z_bar`.
    pub z_bar_ci: f64,
}

/// `ε² ln E[τ]` per level and its weighted linear extrapolation in `ε²`.
pub fn exit_scaling(samples: &[ExitSamples]) -> Result<ExitScaling> {
    if samples.len() < 3 {
        return Err(Error::invalid("epsilons", "need at least 3 noise levels"));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let fraction = s.censored_fraction();
        if fraction >= 0.5 {
            return Err(Error::ExcessiveCensoring { epsilon: s.epsilon, fraction });
        }
        let exits = s.n() - s.n_censored();
        let mean = s.mean().ok_or(Error::AllCensored { epsilon: s.epsilon, t_max: s.t_max })?;
        let e2 = s.epsilon * s.epsilon;
        rows.push(ScalingRow {
            epsilon: s.epsilon,
            n: s.n(),
            n_censored: s.n_censored(),
            mean,
            sem: mean / (exits as f64).sqrt(),
            eps2_log_mean: e2 * mean.ln(),
            eps2_log_mean_se: e2 / (exits as f64).sqrt(),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.epsilon * r.epsilon).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.eps2_log_mean).collect();
    let sigma: Vec<f64> = rows.iter().map(|r| r.eps2_log_mean_se).collect();
    let fit = stats::weighted_linear_fit(&x, &y, &sigma);
    Ok(ExitScaling { rows, z_bar: fit.intercept, z_bar_ci: 1.96 * fit.intercept_se, fit })
}

/// KS statistic of samples against the exponential law with fitted mean, and
/// the 1% critical value.
pub fn ks_exponential(samples: &[f64]) -> (f64, f64) {
    let mean = stats::mean(samples);
    (stats::ks_statistic(samples, |t| 1.0 - (-t / mean).exp()), stats::ks_critical_1pct(samples.len()))
}
