use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::{CoefficientVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPath {
    #[default]
    Linear,
    /// Sigmoidal-in-time interpolation concentrating the transition mid-horizon.
    HeteroclinicGuess,
}

/// Piecewise-linear path on the uniform grid `t_k = kT/M`. Column `k` of
/// `nodes` is `φ(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub t_end: f64,
    pub nodes: DMatrix<f64>,
    pub fixed_start: bool,
    pub fixed_end: bool,
}

impl DiscretePath {
    pub fn new(t_end: f64, nodes: DMatrix<f64>) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::invalid("T", "must be > 0"));
        }
        if nodes.ncols() < 2 || nodes.nrows() == 0 {
            return Err(Error::invalid("M", "path needs at least one interval and one mode"));
        }
        if !nodes.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("path", "nodes must be finite"));
        }
        Ok(Self { t_end, nodes, fixed_start: true, fixed_end: true })
    }

    pub fn from_nodes(t_end: f64, nodes: &[CoefficientVector]) -> Result<Self> {
        let n = nodes.first().map_or(0, |v| v.len());
        if nodes.iter().any(|v| v.len() != n) {
            return Err(Error::invalid("path", "nodes must share one length"));
        }
        Self::new(t_end, DMatrix::from_fn(n, nodes.len(), |i, k| nodes[k][i]))
    }

    /// `M + 1` nodes interpolating `start → end` with the chosen profile.
    pub fn initial(
        start: &CoefficientVector,
        end: &CoefficientVector,
        t_end: f64,
        m: usize,
        kind: InitialPath,
    ) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::LengthMismatch { expected: start.len(), got: end.len() });
        }
        if m == 0 {
            return Err(Error::invalid("M", "must be > 0"));
        }
        let profile = |s: f64| match kind {
            InitialPath::Linear => s,
            InitialPath::HeteroclinicGuess => {
                let k = 6.0;
                let raw = |x: f64| (k * (x - 0.5)).tanh();
                (raw(s) - raw(0.0)) / (raw(1.0) - raw(0.0))
            }
        };
        let nodes = DMatrix::from_fn(start.len(), m + 1, |i, k| {
            let s = profile(k as f64 / m as f64);
            start[i] + s * (end[i] - start[i])
        });
        Self::new(t_end, nodes)
    }

    pub fn n_modes(&self) -> usize {
        self.nodes.nrows()
    }

    /// Number of intervals `M`.
    pub fn m(&self) -> usize {
        self.nodes.ncols() - 1
    }

    pub fn h(&self) -> f64 {
        self.t_end / self.m() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.m()).map(|k| k as f64 * self.h()).collect()
    }

    pub fn node(&self, k: usize) -> CoefficientVector {
        self.nodes.column(k).into_owned()
    }

    pub fn start(&self) -> CoefficientVector {
        self.node(0)
    }

    pub fn end(&self) -> CoefficientVector {
        self.node(self.m())
    }

    /// Linear interpolation of the path at time `t ∈ [0, T]`.
    pub fn at(&self, t: f64) -> CoefficientVector {
        let s = (t / self.h()).clamp(0.0, self.m() as f64);
        let k = (s.floor() as usize).min(self.m() - 1);
        let w = s - k as f64;
        self.nodes.column(k) * (1.0 - w) + self.nodes.column(k + 1) * w
    }

    /// Same shape in normalized time on a new horizon and node count.
    pub fn resampled(&self, t_end: f64, m: usize) -> Result<Self> {
        let mut cols = Vec::with_capacity(m + 1);
        for k in 0..=m {
            cols.push(self.at(self.t_end * k as f64 / m as f64));
        }
        let mut p = Self::from_nodes(t_end, &cols)?;
        p.fixed_start = self.fixed_start;
        p.fixed_end = self.fixed_end;
        Ok(p)
    }

    /// The first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::invalid("n_modes", format!("must be in 1..={}", self.n_modes())));
        }
        Ok(Self { nodes: self.nodes.rows(0, n).into_owned(), ..self.clone() })
    }

    /// CSV with header `t,phi1,…,phiN`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((1..=self.n_modes()).map(|i| format!("phi{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.times().iter().enumerate() {
            write!(w, "{t}")?;
            for v in self.nodes.column(k).iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_profiles_hit_endpoints() {
        let a = CoefficientVector::from_vec(vec![0.0, 1.0]);
        let b = CoefficientVector::from_vec(vec![2.0, -1.0]);
        for kind in [InitialPath::Linear, InitialPath::HeteroclinicGuess] {
            let p = DiscretePath::initial(&a, &b, 4.0, 10, kind).unwrap();
            assert!((p.start() - &a).amax() < 1e-15);
            assert!((p.end() - &b).amax() < 1e-15);
        }
        let lin = DiscretePath::initial(&a, &b, 4.0, 10, InitialPath::Linear).unwrap();
        assert!((lin.at(2.0) - CoefficientVector::from_vec(vec![1.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn resample_preserves_linear_path() {
        let a = CoefficientVector::from_vec(vec![0.0]);
        let b = CoefficientVector::from_vec(vec![3.0]);
        let p = DiscretePath::initial(&a, &b, 1.0, 6, InitialPath::Linear).unwrap();
        let q = p.resampled(5.0, 9).unwrap();
        assert_eq!(q.m(), 9);
        assert!((q.node(3)[0] - 1.0).abs() < 1e-14);
        assert!((q.h() - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let a = CoefficientVector::from_vec(vec![0.0, 1.0]);
        let p = DiscretePath::initial(&a, &a, 1.0, 2, InitialPath::Linear).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,phi1,phi2");
        assert_eq!(text.lines().count(), 4);
    }
}
