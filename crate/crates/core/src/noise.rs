//! Truncated Q-Wiener noise `W_t = Σ λ_i β^i_t v_i` and its Ornstein–Uhlenbeck
//! convolution.
//!
//! Every mode draws from its own counter-addressed ChaCha8 stream keyed by
//! `(seed, path id, multi-index)`, with step `k` at word offset `4k`. A mode's
//! samples therefore do not depend on how many other modes are retained.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

use crate::spectral::{MultiIndex, SpectralBasis};
use crate::stats;
use crate::{CoefficientVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RngKind {
    #[default]
    Chacha8,
}

#[derive(Debug, Clone)]
pub struct NoiseConfig {
    /// Basis carrying the eigenvalues `λ_i²`.
    pub basis: SpectralBasis,
    pub epsilon: f64,
    pub seed: u64,
    pub rng_kind: RngKind,
}

impl NoiseConfig {
    pub fn new(basis: SpectralBasis, epsilon: f64, seed: u64) -> Result<Self> {
        basis.lambda_sq()?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid("epsilon", "must be >= 0"));
        }
        Ok(Self { basis, epsilon, seed, rng_kind: RngKind::Chacha8 })
    }

    /// `λ_i` (non-negative square roots).
    pub fn lambda(&self) -> Vec<f64> {
        lambda_of(&self.basis)
    }

    pub fn stream(&self, path_id: u64) -> NoiseStream {
        NoiseStream::new(self.seed, path_id, &self.basis)
    }
}

pub(crate) fn lambda_of(basis: &SpectralBasis) -> Vec<f64> {
    basis.lambda_sq().map(|l| l.iter().map(|v| v.sqrt()).collect()).unwrap_or_default()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn path_key(seed: u64, path_id: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = splitmix64(seed ^ splitmix64(path_id.wrapping_add(0x5851_F42D_4C95_7F2D)));
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

/// Standard normal from two `u64` draws (four 32-bit words), cosine branch.
#[inline]
fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Per-path, per-mode standard normal streams, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rngs: Vec<ChaCha8Rng>,
    step: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, path_id: u64, basis: &SpectralBasis) -> Self {
        Self::for_indices(seed, path_id, basis.indices())
    }

    pub fn for_indices(seed: u64, path_id: u64, indices: &[MultiIndex]) -> Self {
        let key = path_key(seed, path_id);
        let rngs = indices
            .iter()
            .map(|i| {
                let mut r = ChaCha8Rng::from_seed(key);
                r.set_stream(i.stream_key());
                r
            })
            .collect();
        Self { rngs, step: 0 }
    }

    pub fn n_modes(&self) -> usize {
        self.rngs.len()
    }

    /// Index of the next step to be drawn.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn seek(&mut self, step: u64) {
        for r in &mut self.rngs {
            r.set_word_pos(u128::from(step) * 4);
        }
        self.step = step;
    }

    /// Standard normals `ξ_i` of the current step for every mode.
    pub fn next_normals(&mut self, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&mut self.rngs) {
            *o = box_muller(r);
        }
        self.step += 1;
    }

    /// Unscaled Brownian increments `Δβ^i ~ N(0, dt)`.
    pub fn next_increments(&mut self, dt: f64, out: &mut [f64]) {
        self.next_normals(out);
        let s = dt.sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    }
}

/// `n_steps` unscaled increment vectors for one path.
pub fn wiener_increments(cfg: &NoiseConfig, path_id: u64, dt: f64, n_steps: usize) -> Result<Vec<DVector<f64>>> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    let mut stream = cfg.stream(path_id);
    let mut buf = vec![0.0; stream.n_modes()];
    Ok((0..n_steps)
        .map(|_| {
            stream.next_increments(dt, &mut buf);
            DVector::from_column_slice(&buf)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OUState {
    pub values: CoefficientVector,
    pub t: f64,
}

impl OUState {
    pub fn zero(n: usize) -> Self {
        Self { values: CoefficientVector::zeros(n), t: 0.0 }
    }
}

/// Exact update `O' = e^{−αdt} O + λ ξ √((1 − e^{−2αdt}) / 2α)`.
pub fn ou_step(state: &OUState, dt: f64, normals: &[f64], alpha: f64, lambda: &[f64]) -> OUState {
    let mut next = state.clone();
    ou_step_mut(&mut next, dt, normals, alpha, lambda);
    next
}

pub(crate) fn ou_step_mut(state: &mut OUState, dt: f64, normals: &[f64], alpha: f64, lambda: &[f64]) {
    let decay = (-alpha * dt).exp();
    let sd = ((1.0 - (-2.0 * alpha * dt).exp()) / (2.0 * alpha)).sqrt();
    for ((o, &xi), &l) in state.values.iter_mut().zip(normals).zip(lambda) {
        *o = decay * *o + l * xi * sd;
    }
    state.t += dt;
}

/// `t Σ λ_i² v_i(x) v_i(y)`.
pub fn series_covariance(basis: &SpectralBasis, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let lam = basis.lambda_sq()?;
    Ok(t * basis.indices().iter().zip(lam).map(|(i, l)| l * i.eval(x) * i.eval(y)).sum::<f64>())
}

/// `t (2ξ)^{−d} exp(−π|x−y|² / (4ξ²))`.
pub fn gaussian_covariance(xi: f64, t: f64, x: &[f64], y: &[f64]) -> f64 {
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    t * (2.0 * xi).powi(x.len() as i32).recip() * (-PI * r2 / (4.0 * xi * xi)).exp()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCovariance {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub series: f64,
    pub gaussian: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub pairs: Vec<PairCovariance>,
    /// `max |MC − series|`.
    pub series_abs_dev: f64,
    /// `max |MC − series| / standard error`.
    pub series_z: f64,
    /// `max |series − gaussian| / gaussian`.
    pub gaussian_rel_dev: f64,
}

/// Monte Carlo `E[W_t(x) W_t(y)]` compared with the exact series and with the
/// Gaussian correlation form. Samples are independent paths of `cfg`.
pub fn covariance_diagnostic(
    cfg: &NoiseConfig,
    xi: f64,
    t: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    n_samples: usize,
) -> Result<CovarianceReport> {
    if n_samples < 2 {
        return Err(Error::invalid("n_samples", "must be >= 2"));
    }
    let lambda = cfg.lambda();
    let basis = &cfg.basis;
    let tables: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(x, y)| {
            crate::spectral::check_in_domain(x)?;
            crate::spectral::check_in_domain(y)?;
            Ok((
                basis.indices().iter().zip(&lambda).map(|(i, l)| l * i.eval(x)).collect(),
                basis.indices().iter().zip(&lambda).map(|(i, l)| l * i.eval(y)).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let products: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|path| {
            let mut stream = cfg.stream(path);
            let mut beta = vec![0.0; lambda.len()];
            stream.next_increments(t, &mut beta);
            tables
                .iter()
                .map(|(vx, vy)| {
                    let wx: f64 = vx.iter().zip(&beta).map(|(a, b)| a * b).sum();
                    let wy: f64 = vy.iter().zip(&beta).map(|(a, b)| a * b).sum();
                    wx * wy
                })
                .collect()
        })
        .collect();
    let mut report = CovarianceReport { pairs: vec![], series_abs_dev: 0.0, series_z: 0.0, gaussian_rel_dev: 0.0 };
    for (p, (x, y)) in pairs.iter().enumerate() {
        let col: Vec<f64> = products.iter().map(|r| r[p]).collect();
        let mc = stats::mean(&col);
        let se = stats::sem(&col);
        let series = series_covariance(basis, t, x, y)?;
        let gaussian = gaussian_covariance(xi, t, x, y);
        let dev = (mc - series).abs();
        report.series_abs_dev = report.series_abs_dev.max(dev);
        if se > 0.0 {
            report.series_z = report.series_z.max(dev / se);
        }
        if gaussian > 0.0 {
            report.gaussian_rel_dev = report.gaussian_rel_dev.max((series - gaussian).abs() / gaussian);
        }
        report.pairs.push(PairCovariance {
            x: x.clone(),
            y: y.clone(),
            monte_carlo: mc,
            standard_error: se,
            series,
            gaussian,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuTruncationReport {
    pub n: usize,
    pub n_ref: usize,
    /// Monte Carlo `E[sup_t ‖O^{N_ref}_t − O^N_t‖]`.
    pub mean_sup_error: f64,
    pub sem: f64,
    /// `(Σ_{N < i ≤ N_ref} λ_i²)^{1/2}`.
    pub b_n: f64,
    pub ratio: f64,
}

/// Coupled-stream estimate of the OU truncation error. Because mode streams
/// are shared, `O^N` equals the first `N` modes of `O^{N_ref}` and the error
/// is the norm of the tail modes.
pub fn ou_truncation_error(
    cfg: &NoiseConfig,
    alpha: f64,
    n: usize,
    n_ref: usize,
    t_end: f64,
    dt: f64,
    n_paths: usize,
) -> Result<OuTruncationReport> {
    if n > n_ref || n_ref > cfg.basis.n_modes() {
        return Err(Error::invalid("n", format!("need N <= N_ref <= {}", cfg.basis.n_modes())));
    }
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::invalid("dt", "must satisfy 0 < dt <= t_end"));
    }
    let reference = cfg.basis.truncated(n_ref)?;
    let lambda = lambda_of(&reference);
    let b_n = reference.tail_trace(n)?.sqrt();
    let steps = (t_end / dt).round() as usize;
    let sups: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut stream = NoiseStream::new(cfg.seed, path, &reference);
            let mut state = OUState::zero(n_ref);
            let mut xi = vec![0.0; n_ref];
            let mut sup = 0.0f64;
            for _ in 0..steps {
                stream.next_normals(&mut xi);
                ou_step_mut(&mut state, dt, &xi, alpha, &lambda);
                let tail: f64 = state.values.iter().skip(n).map(|v| v * v).sum();
                sup = sup.max(tail.sqrt());
            }
            sup
        })
        .collect();
    let mean_sup_error = stats::mean(&sups);
    let ratio = if b_n > 0.0 { mean_sup_error / b_n } else { 0.0 };
    Ok(OuTruncationReport { n, n_ref, mean_sup_error, sem: stats::sem(&sups), b_n, ratio })
}

/// KS statistic of mode-`mode` OU marginals at time `t` against
/// `N(0, λ²(1 − e^{−2αt}) / 2α)`.
pub fn ou_marginal_ks(cfg: &NoiseConfig, alpha: f64, mode: usize, t: f64, dt: f64, n_paths: usize) -> Result<f64> {
    let lambda = cfg.lambda();
    let steps = (t / dt).round() as usize;
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut stream = cfg.stream(path);
            let mut state = OUState::zero(lambda.len());
            let mut xi = vec![0.0; lambda.len()];
            for _ in 0..steps {
                stream.next_normals(&mut xi);
                ou_step_mut(&mut state, dt, &xi, alpha, &lambda);
            }
            state.values[mode]
        })
        .collect();
    let t_used = steps as f64 * dt;
    let sd = lambda[mode] * ((1.0 - (-2.0 * alpha * t_used).exp()) / (2.0 * alpha)).sqrt();
    let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid("lambda", e.to_string()))?;
    Ok(stats::ks_statistic(&samples, |x| normal.cdf(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, noise_spectrum_exponential};

    fn config(cutoff: u32, xi: f64, seed: u64) -> NoiseConfig {
        NoiseConfig::new(noise_spectrum_exponential(&build_basis(1, cutoff).unwrap(), xi).unwrap(), 1.0, seed).unwrap()
    }

    #[test]
    fn streams_are_truncation_independent() {
        let small = config(3, 1.0, 42);
        let big = config(9, 1.0, 42);
        let a = wiener_increments(&small, 3, 0.01, 50).unwrap();
        let b = wiener_increments(&big, 3, 0.01, 50).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_slice(), &y.as_slice()[..4]);
        }
    }

    #[test]
    fn seek_matches_sequential() {
        let cfg = config(4, 1.0, 1);
        let mut seq = cfg.stream(0);
        let mut buf = vec![0.0; 5];
        for _ in 0..7 {
            seq.next_normals(&mut buf);
        }
        let mut jump = cfg.stream(0);
        jump.seek(6);
        let mut buf2 = vec![0.0; 5];
        jump.next_normals(&mut buf2);
        assert_eq!(buf, buf2);
    }

    #[test]
    fn determinism_and_seed_independence() {
        let a = wiener_increments(&config(2, 1.0, 5), 0, 0.1, 2000).unwrap();
        let b = wiener_increments(&config(2, 1.0, 5), 0, 0.1, 2000).unwrap();
        assert_eq!(a, b);
        let c = wiener_increments(&config(2, 1.0, 6), 0, 0.1, 2000).unwrap();
        let xs: Vec<f64> = a.iter().map(|v| v[1]).collect();
        let ys: Vec<f64> = c.iter().map(|v| v[1]).collect();
        let (mx, my) = (stats::mean(&xs), stats::mean(&ys));
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
        let corr = cov / (stats::variance(&xs) * stats::variance(&ys)).sqrt() / (xs.len() as f64 - 1.0);
        assert!(corr.abs() < 0.05, "{corr}");
    }

    #[test]
    fn increment_variance() {
        let cfg = config(3, 1.0, 9);
        let dt = 0.02;
        let inc = wiener_increments(&cfg, 0, dt, 100_000).unwrap();
        for mode in 0..4 {
            let xs: Vec<f64> = inc.iter().map(|v| v[mode]).collect();
            let v = stats::variance(&xs);
            assert!((v / dt - 1.0).abs() < 0.05, "mode {mode}: {}", v / dt);
        }
    }

    #[test]
    fn zero_spectrum_keeps_ou_at_zero() {
        let mut s = OUState::zero(3);
        for k in 0..10 {
            s = ou_step(&s, 0.1, &[1.0, -2.0, 0.5 + k as f64], 1.0, &[0.0, 0.0, 0.0]);
        }
        assert_eq!(s.values, CoefficientVector::zeros(3));
    }

    #[test]
    fn ou_stationary_variance() {
        let cfg = config(2, 1.0, 13);
        let lambda = cfg.lambda();
        let alpha = 1.5;
        let dt = 0.5;
        let mut stream = cfg.stream(0);
        let mut state = OUState::zero(3);
        let mut xi = vec![0.0; 3];
        let mut samples = vec![vec![]; 3];
        for k in 0..100_020 {
            stream.next_normals(&mut xi);
            ou_step_mut(&mut state, dt, &xi, alpha, &lambda);
            if k >= 20 {
                for (m, s) in samples.iter_mut().enumerate() {
                    s.push(state.values[m]);
                }
            }
        }
        for m in 0..3 {
            // successive samples are correlated by e^{-α dt}; 1e5 draws still give ~1% error
            let target = lambda[m] * lambda[m] / (2.0 * alpha);
            assert!((stats::variance(&samples[m]) / target - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn ou_large_alpha_reaches_stationarity_in_one_step() {
        let cfg = config(1, 1.0, 17);
        let lambda = cfg.lambda();
        let alpha = 50.0;
        let xs: Vec<f64> = (0..20_000u64)
            .map(|p| {
                let mut stream = cfg.stream(p);
                let mut xi = vec![0.0; 2];
                stream.next_normals(&mut xi);
                ou_step(&OUState::zero(2), 1.0, &xi, alpha, &lambda).values[1]
            })
            .collect();
        let target = lambda[1] * lambda[1] / (2.0 * alpha);
        assert!((stats::variance(&xs) / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn ou_marginal_passes_ks() {
        let cfg = config(3, 1.0, 23);
        let ks = ou_marginal_ks(&cfg, 1.0, 2, 0.7, 0.1, 4000).unwrap();
        assert!(ks < stats::ks_critical_1pct(4000));
    }

    #[test]
    fn covariance_checks() {
        let cfg =
            NoiseConfig::new(noise_spectrum_exponential(&build_basis(1, 40).unwrap(), 0.5).unwrap(), 1.0, 3).unwrap();
        let pairs = vec![(vec![3.0], vec![3.0]), (vec![2.5], vec![2.8]), (vec![3.4], vec![3.1])];
        let r = covariance_diagnostic(&cfg, 0.5, 1.0, &pairs, 20_000).unwrap();
        assert!(r.series_z < 3.0, "{}", r.series_z);
        assert!(r.gaussian_rel_dev < 0.10, "{}", r.gaussian_rel_dev);
        let zero =
            NoiseConfig::new(build_basis(1, 5).unwrap().with_eigenvalues(vec![0.0; 6]).unwrap(), 1.0, 3).unwrap();
        let r = covariance_diagnostic(&zero, 0.5, 1.0, &pairs, 100).unwrap();
        assert!(r.pairs.iter().all(|p| p.monte_carlo == 0.0 && p.series == 0.0));
    }

    #[test]
    fn ou_truncation_behaviour() {
        let cfg = config(31, 1.0, 7);
        let same = ou_truncation_error(&cfg, 1.0, 32, 32, 1.0, 0.05, 10).unwrap();
        assert_eq!(same.mean_sup_error, 0.0);
        let reports: Vec<_> =
            [4, 8, 16].iter().map(|&n| ou_truncation_error(&cfg, 1.0, n, 32, 5.0, 0.01, 200).unwrap()).collect();
        for w in reports.windows(2) {
            assert!(w[1].mean_sup_error < w[0].mean_sup_error + 3.0 * (w[0].sem + w[1].sem));
        }
        assert!(reports.iter().all(|r| r.ratio <= 10.0));
    }
}
