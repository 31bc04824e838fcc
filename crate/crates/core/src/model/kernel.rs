use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quad::gauss_legendre;
use crate::spectral::{QuadratureGrid, SpectralBasis};
use crate::{Error, Result};

/// Connectivity kernel `w`.
///
/// Serialized as `{kind, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// Diagonal in the cosine basis: `K v_i = κ_i v_i`.
    SpectralCoupled(SpectralCoupling),
    /// `w(r) = A e^{-a r} - e^{-r}`, `r = |x - y|`.
    MexicanHat {
        #[serde(rename = "A")]
        amplitude: f64,
        a: f64,
    },
    /// `w(r) = amplitude · exp(-r² / (2 width²))`.
    Gaussian { amplitude: f64, width: f64 },
}

/// Eigenvalues of a spectral-coupled kernel, either listed or tied to the
/// noise spectrum as `κ_0 = kappa0`, `κ_i = scale · λ_i` for `i ≠ 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectralCoupling {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl SpectralCoupling {
    pub fn explicit(kappa: Vec<f64>) -> Self {
        Self { kappa: Some(kappa), ..Self::default() }
    }

    pub fn from_spectrum(kappa0: f64, scale: f64) -> Self {
        Self { kappa: None, kappa0: Some(kappa0), scale: Some(scale) }
    }

    /// One eigenvalue per basis mode.
    pub fn resolve(&self, basis: &SpectralBasis) -> Result<Vec<f64>> {
        let n = basis.n_modes();
        let kappa = match (&self.kappa, self.kappa0) {
            (Some(k), None) => {
                if k.len() < n {
                    return Err(Error::invalid(
                        "kernel.kappa",
                        format!("has {} entries but the basis has {n} modes", k.len()),
                    ));
                }
                k[..n].to_vec()
            }
            (None, Some(k0)) => {
                let lam = basis.lambda_sq()?;
                let scale = self.scale.unwrap_or(1.0);
                basis
                    .indices()
                    .iter()
                    .zip(lam)
                    .map(|(i, l)| if i.norm_sq() == 0 { k0 } else { scale * l.sqrt() })
                    .collect()
            }
            _ => return Err(Error::invalid("kernel", "spectral-coupled needs exactly one of kappa, kappa0")),
        };
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("kernel.kappa", "must be finite"));
        }
        Ok(kappa)
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::SpectralCoupled(ref c) => {
                if let Some(s) = c.scale {
                    if !s.is_finite() {
                        return Err(Error::invalid("kernel.scale", "must be finite"));
                    }
                }
            }
            KernelSpec::MexicanHat { amplitude, a } => {
                if !amplitude.is_finite() {
                    return Err(Error::invalid("kernel.A", "must be finite"));
                }
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::invalid("kernel.a", "must be > 0"));
                }
            }
            KernelSpec::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(Error::invalid("kernel.amplitude", "must be finite"));
                }
                if !(width > 0.0) || !width.is_finite() {
                    return Err(Error::invalid("kernel.width", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, KernelSpec::SpectralCoupled(_))
    }

    /// `w` as a function of distance. Not defined for spectral kernels.
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::MexicanHat { amplitude, a } => amplitude * (-a * r).exp() - (-r).exp(),
            KernelSpec::Gaussian { amplitude, width } => amplitude * (-0.5 * r * r / (width * width)).exp(),
            KernelSpec::SpectralCoupled(_) => f64::NAN,
        }
    }
}

/// Per-axis Gauss nodes on `[0, 2π]` with breakpoints at `split`, so the
/// kink of `w` at `x = y` falls on a panel boundary.
fn split_axis(split: f64, panels: usize, per_panel: usize, gx: &[f64], gw: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut ys = Vec::with_capacity((panels + 2) * per_panel);
    let mut ws = Vec::with_capacity((panels + 2) * per_panel);
    for (lo, hi) in [(0.0, split), (split, two_pi)] {
        let len = hi - lo;
        if len <= 0.0 {
            continue;
        }
        let np = ((len / two_pi) * panels as f64).ceil().max(1.0) as usize;
        let h = len / np as f64;
        for p in 0..np {
            let mid = lo + (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(gw) {
                ys.push(mid + 0.5 * h * x);
                ws.push(0.5 * h * w);
            }
        }
    }
    (ys, ws)
}

fn axis_table(max_index: u32, ys: &[f64]) -> Vec<Vec<f64>> {
    (0..=max_index).map(|m| ys.iter().map(|&y| crate::spectral::axis_factor(m, y)).collect()).collect()
}

/// `(K v_i)(x_k)` for every mode `i` and outer node `x_k`, as an `N × n_nodes`
/// matrix. Inner integrals use composite Gauss–Legendre split at `y = x`.
pub fn kernel_images(
    kernel: &KernelSpec,
    basis: &SpectralBasis,
    grid: &QuadratureGrid,
    inner_panels: usize,
    per_panel: usize,
) -> Result<DMatrix<f64>> {
    if kernel.is_spectral() {
        return Err(Error::invalid("kernel", "spectral kernels have closed-form images"));
    }
    let n = basis.n_modes();
    let d = basis.dim();
    let max_c = basis.max_component();
    let (gx, gw) = gauss_legendre(per_panel);
    let columns: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            let mut out = vec![0.0; n];
            if d == 1 {
                let (ys, ws) = split_axis(x[0], inner_panels, per_panel, &gx, &gw);
                let table = axis_table(max_c, &ys);
                let kw: Vec<f64> = ys.iter().zip(&ws).map(|(y, w)| w * kernel.profile((x[0] - y).abs())).collect();
                for (slot, idx) in out.iter_mut().zip(basis.indices()) {
                    let row = &table[idx.components()[0] as usize];
                    *slot = row.iter().zip(&kw).map(|(a, b)| a * b).sum();
                }
            } else {
                let (y0, w0) = split_axis(x[0], inner_panels, per_panel, &gx, &gw);
                let (y1, w1) = split_axis(x[1], inner_panels, per_panel, &gx, &gw);
                let t0 = axis_table(max_c, &y0);
                let t1 = axis_table(max_c, &y1);
                // partial[m][j0] = Σ_{j1} w(x, y) W0 W1 e_m(y1)
                let mut partial = vec![vec![0.0; y0.len()]; max_c as usize + 1];
                let mut kw = vec![0.0; y1.len()];
                for (j0, (&ya, &wa)) in y0.iter().zip(&w0).enumerate() {
                    let dx = x[0] - ya;
                    for (j1, (&yb, &wb)) in y1.iter().zip(&w1).enumerate() {
                        let dy = x[1] - yb;
                        kw[j1] = wa * wb * kernel.profile((dx * dx + dy * dy).sqrt());
                    }
                    for (m, row) in t1.iter().enumerate() {
                        partial[m][j0] = row.iter().zip(&kw).map(|(a, b)| a * b).sum();
                    }
                }
                for (slot, idx) in out.iter_mut().zip(basis.indices()) {
                    let c = idx.components();
                    *slot = t0[c[0] as usize].iter().zip(&partial[c[1] as usize]).map(|(a, b)| a * b).sum();
                }
            }
            out
        })
        .collect();
    Ok(DMatrix::from_fn(n, grid.len(), |i, k| columns[k][i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, build_gauss_grid, noise_spectrum_exponential};

    #[test]
    fn resolve_from_spectrum() {
        let b = noise_spectrum_exponential(&build_basis(1, 3).unwrap(), 1.0).unwrap();
        let k = SpectralCoupling::from_spectrum(1.0, -1.0).resolve(&b).unwrap();
        assert_eq!(k[0], 1.0);
        let lam = b.lambda_sq().unwrap();
        assert!((k[2] + lam[2].sqrt()).abs() < 1e-15);
        assert!(SpectralCoupling::default().resolve(&b).is_err());
        assert!(SpectralCoupling::explicit(vec![1.0]).resolve(&b).is_err());
    }

    #[test]
    fn image_of_constant_mode_1d() {
        // ∫_0^{2π} e^{-|x-y|} dy / √(2π) = (2 - e^{-x} - e^{x-2π}) / √(2π)
        let kernel = KernelSpec::MexicanHat { amplitude: 0.0, a: 1.0 };
        let basis = build_basis(1, 0).unwrap();
        let grid = build_gauss_grid(1, 4, 4).unwrap();
        let img = kernel_images(&kernel, &basis, &grid, 8, 8).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        for k in 0..grid.len() {
            let x = grid.node(k)[0];
            let exact = -(2.0 - (-x).exp() - (x - two_pi).exp()) / two_pi.sqrt();
            assert!((img[(0, k)] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_shape() {
        let k: KernelSpec = serde_json::from_str(r#"{"kind":"mexican-hat","params":{"A":2,"a":2}}"#).unwrap();
        assert_eq!(k, KernelSpec::MexicanHat { amplitude: 2.0, a: 2.0 });
        let s: KernelSpec =
            serde_json::from_str(r#"{"kind":"spectral-coupled","params":{"kappa":[0.9,0.5,0.1]}}"#).unwrap();
        assert_eq!(s, KernelSpec::SpectralCoupled(SpectralCoupling::explicit(vec![0.9, 0.5, 0.1])));
    }
}
