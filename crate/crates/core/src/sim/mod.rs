//! Euler–Maruyama integration of the Galerkin system
//! `du = [−αu + (KF)(u)] dt + ε λ ⊙ dβ`, coupled-noise convergence runs and
//! first-exit experiments.

mod convergence;
mod exit;

pub use convergence::{galerkin_convergence, ConvergenceRow, ConvergenceSetup};
pub use exit::{
    exit_dt, exit_scaling, first_exit, ks_exponential, transition_times, validate_radius, ExitExperiment, ExitSamples,
    ExitScaling, ScalingRow,
};

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::model::ModelSpec;
use crate::noise::{lambda_of, NoiseConfig};
use crate::spectral::domain_measure;
use crate::{CoefficientVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `u + dt·drift(u) + ε λ ⊙ Δβ`.
    #[default]
    EulerMaruyama,
    /// Exact treatment of `−αu` and of the OU noise, explicit in `KF`.
    Exponential,
}

#[derive(Debug, Clone)]
pub struct SimConfig<'a> {
    pub model: &'a ModelSpec,
    pub noise: &'a NoiseConfig,
    pub dt: f64,
    pub t_end: f64,
    pub initial: CoefficientVector,
    pub scheme: Scheme,
    /// Keep every `record_every`-th state (the last state is always kept).
    pub record_every: usize,
}

impl SimConfig<'_> {
    pub fn validate(&self) -> Result<()> {
        let alpha = self.model.alpha();
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if self.scheme == Scheme::EulerMaruyama && self.dt >= 1.0 / alpha {
            return Err(Error::invalid("dt", format!("must be < 1/alpha = {}", 1.0 / alpha)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::invalid("t_end", "must be >= dt"));
        }
        if self.initial.len() != self.model.n_modes() {
            return Err(Error::LengthMismatch { expected: self.model.n_modes(), got: self.initial.len() });
        }
        if self.noise.basis.n_modes() < self.model.n_modes() {
            return Err(Error::LengthMismatch { expected: self.model.n_modes(), got: self.noise.basis.n_modes() });
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be >= 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// One Euler–Maruyama step with a pre-scaled noise increment `ε λ ⊙ Δβ`.
pub fn em_step(
    u: &CoefficientVector,
    model: &ModelSpec,
    dt: f64,
    scaled_increment: &CoefficientVector,
) -> Result<CoefficientVector> {
    if scaled_increment.len() != u.len() {
        return Err(Error::LengthMismatch { expected: u.len(), got: scaled_increment.len() });
    }
    let next = u + model.drift(u)? * dt + scaled_increment;
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::BlowUp { step: 0 });
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CoefficientVector>,
    /// `sup_k ε‖O_k‖₂` of the discrete OU process driven by the same increments.
    pub noise_sup: f64,
}

impl Trajectory {
    /// CSV with header `t,u1,…,uN`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("u{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in s.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }
}

/// Per-step update coefficients shared by the schemes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stepper {
    /// Multiplier of `u`.
    decay: f64,
    /// Multiplier of `KF(u)`.
    gain: f64,
    /// Standard deviation multiplying `ξ` (before `ε λ`).
    noise_sd: f64,
}

impl Stepper {
    pub(crate) fn new(scheme: Scheme, alpha: f64, dt: f64) -> Self {
        match scheme {
            Scheme::EulerMaruyama => Self { decay: 1.0 - alpha * dt, gain: dt, noise_sd: dt.sqrt() },
            Scheme::Exponential => {
                let e = (-alpha * dt).exp();
                Self { decay: e, gain: (1.0 - e) / alpha, noise_sd: ((1.0 - e * e) / (2.0 * alpha)).sqrt() }
            }
        }
    }

    /// `u ← decay·u + gain·KF(u) + noise`, with `kf` as scratch.
    #[inline]
    pub(crate) fn advance(
        &self,
        model: &ModelSpec,
        u: &mut CoefficientVector,
        kf: &mut CoefficientVector,
        ws: &mut crate::model::Workspace,
        noise: &[f64],
    ) {
        model.drift_into(u, ws, kf);
        // drift = −αu + KF; recover KF to apply the scheme's coefficients
        kf.axpy(model.alpha(), u, 1.0);
        for ((ui, ki), ni) in u.iter_mut().zip(kf.iter()).zip(noise) {
            *ui = self.decay * *ui + self.gain * ki + ni;
        }
    }
}

/// Integrate one path. Deterministic given `(config, path_id)`.
pub fn simulate(cfg: &SimConfig<'_>, path_id: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let model = cfg.model;
    let n = model.n_modes();
    let eps = cfg.noise.epsilon;
    let lambda: Vec<f64> = lambda_of(&cfg.noise.basis)[..n].to_vec();
    let stepper = Stepper::new(cfg.scheme, model.alpha(), cfg.dt);
    let mut stream = crate::noise::NoiseStream::for_indices(cfg.noise.seed, path_id, &model.basis().indices()[..n]);
    let mut ws = model.workspace();
    let mut u = cfg.initial.clone();
    let mut kf = CoefficientVector::zeros(n);
    let mut xi = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let mut ou = vec![0.0; n];
    let mut noise_sup = 0.0f64;
    let steps = cfg.n_steps();
    let mut times = vec![0.0];
    let mut states = vec![u.clone()];
    for k in 1..=steps {
        stream.next_normals(&mut xi);
        let mut ou_sq = 0.0;
        for i in 0..n {
            noise[i] = eps * lambda[i] * stepper.noise_sd * xi[i];
            ou[i] = stepper.decay * ou[i] + noise[i];
            ou_sq += ou[i] * ou[i];
        }
        noise_sup = noise_sup.max(ou_sq.sqrt());
        stepper.advance(model, &mut u, &mut kf, &mut ws, &noise);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step: k });
        }
        if k % cfg.record_every == 0 || k == steps {
            times.push(k as f64 * cfg.dt);
            states.push(u.clone());
        }
    }
    Ok(Trajectory { times, states, noise_sup })
}

/// Gronwall envelope for `sup_t ‖U_t‖₂` given the path's own noise size:
/// `(‖U₀‖ + T·B(|f(0)|·meas^{1/2} + L·S)) e^{B L T} + S`, with
/// `B` = [`ModelSpec::nonlinearity_bound`], `L = Lip(f)`, `S = sup ε‖O‖`.
pub fn gronwall_envelope(model: &ModelSpec, u0_norm: f64, noise_sup: f64, t_end: f64) -> f64 {
    let b = model.nonlinearity_bound();
    let l = model.gain().lipschitz();
    let f0 = model.gain().eval(0.0).abs() * domain_measure(model.basis().dim()).sqrt();
    // slack for the quadrature Gram matrix differing from identity by rounding
    let slack = 1.0 + 1e-9;
    slack * ((u0_norm + t_end * b * (f0 + l * noise_sup)) * (b * l * t_end).exp() + noise_sup)
}
