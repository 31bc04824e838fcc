use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::check_in_domain;
use crate::{Error, Result};

/// Multi-index `i = (i_1, …, i_d)` labelling `v_i(x) = Π_k e_{i_k}(x_k)`.
///
/// Ordered by Euclidean norm `|i|`, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Self {
        Self(components)
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c) * u64::from(c)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn max_component(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Stable 64-bit key used to address this mode's random stream.
    pub fn stream_key(&self) -> u64 {
        self.0.iter().fold(self.0.len() as u64, |acc, &c| acc.wrapping_mul(0x1_0000_0001).wrapping_add(u64::from(c)))
    }

    /// `v_i(x)`; no domain check.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&i, &xk)| axis_factor(i, xk)).product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.norm_sq().cmp(&other.norm_sq()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `e_0 = 1/√(2π)`, `e_n(x) = cos(n x / 2)/√π`.
#[inline]
pub(crate) fn axis_factor(i: u32, x: f64) -> f64 {
    if i == 0 {
        1.0 / (2.0 * PI).sqrt()
    } else {
        (f64::from(i) * x * 0.5).cos() / PI.sqrt()
    }
}

/// Truncated trigonometric basis with its noise spectrum and Lipschitz constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    dim: usize,
    cutoff: u32,
    indices: Vec<MultiIndex>,
    eigenvalues: Option<Vec<f64>>,
    lipschitz: Vec<f64>,
}

/// Every multi-index in `{0, …, cutoff}^d`, in canonical order.
///
/// Lipschitz constants are `L_i = π^{-d/2} |i|`; noise eigenvalues are left
/// unset until a spectrum is attached.
pub fn build_basis(d: usize, cutoff: u32) -> Result<SpectralBasis> {
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    let side = cutoff + 1;
    let mut indices: Vec<MultiIndex> = match d {
        1 => (0..side).map(|i| MultiIndex(vec![i])).collect(),
        _ => (0..side).flat_map(|i| (0..side).map(move |j| MultiIndex(vec![i, j]))).collect(),
    };
    indices.sort();
    let scale = PI.powf(-(d as f64) / 2.0);
    let lipschitz = indices.iter().map(|i| scale * i.norm()).collect();
    Ok(SpectralBasis { dim: d, cutoff, indices, eigenvalues: None, lipschitz })
}

/// `v_i(x)` for any multi-index of the basis dimension, with domain checking.
pub fn basis_eval(basis: &SpectralBasis, i: &MultiIndex, x: &[f64]) -> Result<f64> {
    if i.dim() != basis.dim || x.len() != basis.dim {
        return Err(Error::LengthMismatch { expected: basis.dim, got: x.len().min(i.dim()) });
    }
    check_in_domain(x)?;
    Ok(i.eval(x))
}

/// Attach `λ_i² = exp(-ξ² |i|² / (4π))`.
pub fn noise_spectrum_exponential(basis: &SpectralBasis, xi: f64) -> Result<SpectralBasis> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::invalid("xi", "must be > 0"));
    }
    let lam = basis.indices.iter().map(|i| (-xi * xi * i.norm_sq() as f64 / (4.0 * PI)).exp()).collect();
    basis.clone().with_eigenvalues(lam)
}

/// JSON view of a basis: `{d, cutoff, indices, lambda_sq, lipschitz}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisExport {
    pub d: usize,
    pub cutoff: u32,
    pub indices: Vec<MultiIndex>,
    pub lambda_sq: Option<Vec<f64>>,
    pub lipschitz: Vec<f64>,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn n_modes(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    /// Noise covariance eigenvalues `λ_i²`.
    pub fn lambda_sq(&self) -> Result<&[f64]> {
        self.eigenvalues.as_deref().ok_or(Error::SpectrumUnset)
    }

    pub fn with_eigenvalues(mut self, lambda_sq: Vec<f64>) -> Result<Self> {
        if lambda_sq.len() != self.n_modes() {
            return Err(Error::LengthMismatch { expected: self.n_modes(), got: lambda_sq.len() });
        }
        if lambda_sq.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lambda_sq", "must be finite and non-negative"));
        }
        self.eigenvalues = Some(lambda_sq);
        Ok(self)
    }

    pub fn max_component(&self) -> u32 {
        self.indices.iter().map(MultiIndex::max_component).max().unwrap_or(0)
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.indices.binary_search(index).ok()
    }

    /// The first `n` modes in canonical order.
    pub fn truncated(&self, n: usize) -> Result<SpectralBasis> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::invalid("n_modes", format!("must be in 1..={}", self.n_modes())));
        }
        Ok(SpectralBasis {
            dim: self.dim,
            cutoff: self.cutoff,
            indices: self.indices[..n].to_vec(),
            eigenvalues: self.eigenvalues.as_ref().map(|e| e[..n].to_vec()),
            lipschitz: self.lipschitz[..n].to_vec(),
        })
    }

    /// `Σ_i λ_i²` over the retained modes.
    pub fn partial_trace(&self) -> Result<f64> {
        Ok(self.lambda_sq()?.iter().sum())
    }

    /// `Σ_{i ≥ from} λ_i²` (positions in canonical order).
    pub fn tail_trace(&self, from: usize) -> Result<f64> {
        Ok(self.lambda_sq()?.iter().skip(from).sum())
    }

    pub fn export(&self) -> BasisExport {
        BasisExport {
            d: self.dim,
            cutoff: self.cutoff,
            indices: self.indices.clone(),
            lambda_sq: self.eigenvalues.clone(),
            lipschitz: self.lipschitz.clone(),
        }
    }
}
