//! Value functions on a tensor grid over the leading modes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{ensure_len, Error, Result};

/// Uniform axis `lo, lo + h, ..., hi` with `n >= 2` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || n < 2 {
            return Err(Error::InvalidParameter(format!("bad axis: half-width {half_width}, {n} points")));
        }
        Ok(Self { lo: -half_width, hi: half_width, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    /// Cell index and weight of the right node, after clamping `x` to the axis.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let u = ((x.clamp(self.lo, self.hi) - self.lo) / self.step()).min((self.n - 1) as f64);
        let i = (u.floor() as usize).min(self.n - 2);
        (i, u - i as f64)
    }
}

/// Diagnostics of a fixed-point solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub lipschitz_f0: f64,
    /// Contraction constant of the map restricted to the grid modes.
    pub contraction_constant: f64,
    /// Same constant computed with every mode of the model.
    pub full_model_constant: f64,
    pub iterations: usize,
    pub last_change: f64,
    /// Successive-change ratios `‖ΔDv_{n+1}‖ / ‖ΔDv_n‖` above the noise floor.
    pub ratios: Vec<f64>,
    /// Fixed-point remainder plus grid-refinement estimate, in sup norm.
    pub error_budget: f64,
    pub grid_error: f64,
    pub model_digest: String,
}

/// Multilinear interpolant of `v` and of the leading components of `D^G v`.
/// Outside the grid, values are clamped to the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    axes: Vec<GridAxis>,
    k_dim: usize,
    values: Vec<f64>,
    /// Node-major: `grads[node * lead + i]`.
    grads: Vec<f64>,
    pub report: SolveReport,
}

impl ValueField {
    pub fn new(axes: Vec<GridAxis>, k_dim: usize, values: Vec<f64>, grads: Vec<f64>) -> Result<Self> {
        let count: usize = axes.iter().map(|a| a.n).product();
        if axes.is_empty() || axes.len() > k_dim {
            return Err(Error::DimensionMismatch(format!("{} grid axes for {k_dim} modes", axes.len())));
        }
        ensure_len("node values", values.len(), count)?;
        ensure_len("node gradients", grads.len(), count * axes.len())?;
        Ok(Self { axes, k_dim, values, grads, report: SolveReport::default() })
    }

    pub fn lead(&self) -> usize {
        self.axes.len()
    }

    pub fn k_dim(&self) -> usize {
        self.k_dim
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn node_values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_gradients(&self) -> &[f64] {
        &self.grads
    }

    /// Multi-index of a node, last axis fastest.
    pub fn node_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.lead()];
        for (o, a) in out.iter_mut().zip(&self.axes).rev() {
            *o = idx % a.n;
            idx /= a.n;
        }
        out
    }

    /// Coordinates of a node, padded with zeros to `k_dim`.
    pub fn node_point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.k_dim];
        for (i, (j, a)) in self.node_index(idx).into_iter().zip(&self.axes).enumerate() {
            x[i] = a.node(j);
        }
        x
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, v)| *v >= a.lo && *v <= a.hi)
    }

    /// Interpolation stencil: `(node, weight)` over the `2^lead` cell corners.
    fn stencil(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let cells: Vec<(usize, f64)> = self.axes.iter().enumerate().map(|(i, a)| a.locate(x[i])).collect();
        let mut out = Vec::with_capacity(1 << self.lead());
        for corner in 0..1usize << self.lead() {
            let (mut idx, mut w) = (0, 1.0);
            for (i, ((c, t), a)) in cells.iter().zip(&self.axes).enumerate() {
                let up = corner >> (self.lead() - 1 - i) & 1 == 1;
                idx = idx * a.n + c + usize::from(up);
                w *= if up { *t } else { 1.0 - t };
            }
            if w != 0.0 {
                out.push((idx, w));
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.stencil(x).iter().map(|(i, w)| w * self.values[*i]).sum()
    }

    /// `D^G v(x)` as a `k_dim`-vector; components past the grid modes vanish.
    pub fn g_gradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.lead();
        let mut out = vec![0.0; self.k_dim];
        for (i, w) in self.stencil(x) {
            for c in 0..m {
                out[c] += w * self.grads[i * m + c];
            }
        }
        out
    }

    /// Bound on the multilinear interpolation error between nodes, `Σ_i max |Δ²_i w| / 8`,
    /// for the values (`component = None`) or one gradient component.
    pub fn interpolation_error(&self, component: Option<usize>) -> f64 {
        let m = self.lead();
        let at = |idx: usize| match component {
            None => self.values[idx],
            Some(c) => self.grads[idx * m + c],
        };
        let mut total = 0.0;
        let mut stride = 1;
        for axis in self.axes.iter().rev() {
            let mut worst = 0.0_f64;
            for idx in 0..self.node_count() {
                let j = (idx / stride) % axis.n;
                if j > 0 && j + 1 < axis.n {
                    worst = worst.max((at(idx + stride) - 2.0 * at(idx) + at(idx - stride)).abs());
                }
            }
            total += worst / 8.0;
            stride *= axis.n;
        }
        total
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `x_0.., v, dg_0..` per node.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let m = self.lead();
        let cols: Vec<String> = (0..m)
            .map(|i| format!("x_{i}"))
            .chain(std::iter::once("v".into()))
            .chain((0..m).map(|i| format!("dg_{i}")))
            .collect();
        writeln!(f, "{}", cols.join(","))?;
        for idx in 0..self.node_count() {
            let x = self.node_point(idx);
            let row: Vec<String> = x[..m]
                .iter()
                .chain(std::iter::once(&self.values[idx]))
                .chain(&self.grads[idx * m..(idx + 1) * m])
                .map(|v| v.to_string())
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }
}
