use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SpectralBasis;
use crate::quad::gauss_legendre;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Composite trapezoid, endpoints included.
    Trapezoid,
    /// Composite Gauss–Legendre with equal panels.
    GaussLegendre,
}

/// Tensor-product quadrature on `[0, 2π]^d`.
///
/// Nodes are stored row-major: node `k` of a 2-D grid has axis indices
/// `(k / order, k % order)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    dim: usize,
    order: usize,
    kind: GridKind,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Trapezoid grid with `order` equispaced points per axis (endpoints included).
///
/// The even `4π`-periodic extension of cosine products makes the rule exact
/// for `∫ cos(m x / 2)` whenever `m < 2 (order - 1)`, so Gram entries of modes
/// with `i + j < 2 (order - 1)` per axis are exact up to rounding.
pub fn build_quadrature(d: usize, order: usize) -> Result<QuadratureGrid> {
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if order < 2 {
        return Err(Error::invalid("quadrature order", "must be >= 2"));
    }
    let h = 2.0 * PI / (order - 1) as f64;
    let axis: Vec<f64> = (0..order).map(|k| k as f64 * h).collect();
    let axis_w: Vec<f64> = (0..order).map(|k| if k == 0 || k == order - 1 { 0.5 * h } else { h }).collect();
    Ok(tensor(d, order, GridKind::Trapezoid, &axis, &axis_w))
}

/// Composite Gauss–Legendre grid: `panels` panels of `per_panel` nodes per axis.
pub fn build_gauss_grid(d: usize, panels: usize, per_panel: usize) -> Result<QuadratureGrid> {
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if panels == 0 || per_panel == 0 {
        return Err(Error::invalid("gauss grid", "needs at least one panel and one node"));
    }
    let (gx, gw) = gauss_legendre(per_panel);
    let h = 2.0 * PI / panels as f64;
    let mut axis = Vec::with_capacity(panels * per_panel);
    let mut axis_w = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            axis.push(mid + 0.5 * h * x);
            axis_w.push(0.5 * h * w);
        }
    }
    Ok(tensor(d, panels * per_panel, GridKind::GaussLegendre, &axis, &axis_w))
}

fn tensor(d: usize, order: usize, kind: GridKind, axis: &[f64], axis_w: &[f64]) -> QuadratureGrid {
    let (points, weights) = if d == 1 {
        (axis.to_vec(), axis_w.to_vec())
    } else {
        let mut pts = Vec::with_capacity(2 * order * order);
        let mut ws = Vec::with_capacity(order * order);
        for (x0, w0) in axis.iter().zip(axis_w) {
            for (x1, w1) in axis.iter().zip(axis_w) {
                pts.push(*x0);
                pts.push(*x1);
                ws.push(w0 * w1);
            }
        }
        (pts, ws)
    };
    QuadratureGrid { dim: d, order, kind, points, weights }
}

/// `max(64, 4 · largest per-axis index)`.
pub fn default_quadrature_order(basis: &SpectralBasis) -> usize {
    (4 * basis.max_component() as usize).max(64)
}

impl QuadratureGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}
