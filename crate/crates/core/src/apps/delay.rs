//! Controlled SDE with delay in the control, lifted to `ℝ × L²(−d, 0)`.
//!
//! `dy = (a₀ y + b₀ u(t) + ∫_{−d}^0 b₁(ξ) u(t+ξ) dξ) dt + σ₀ dW` becomes
//! `dx₀ = (a₀ x₀ + x₁(0) + b₀ u) dt + σ₀ dW`, `∂_t x₁ = −∂_ξ x₁ + b₁ u`, `x₁(−d) = 0`.
//! The transport is discretized by first-order upwind finite volumes on `n_d` cells,
//! which conserves mass; time steps are exact for the resulting linear system.

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dynamics::{dense_transition, LinearControlSystem, Transition};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SpectralModel};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DelayParams {
    pub a0: f64,
    pub b0: f64,
    pub sigma0: f64,
    pub delay: f64,
    /// Samples of `b₁` at the left endpoints of the `n_d` cells of `[−d, 0]`.
    pub b1: Vec<f64>,
}

impl DelayParams {
    /// Sample `b₁` on an `n_d`-cell grid.
    pub fn sampled(a0: f64, b0: f64, sigma0: f64, delay: f64, n_d: usize, b1: impl Fn(f64) -> f64) -> Self {
        let h = delay / n_d as f64;
        Self { a0, b0, sigma0, delay, b1: (0..n_d).map(|j| b1(-delay + j as f64 * h)).collect() }
    }
}

/// Product-space model with `b = (b₀, b₁)` normalized in `ℝ × L²`.
#[derive(Debug, Clone)]
pub struct DelayInstance {
    pub params: DelayParams,
    /// `|b|` before normalization; the control is rescaled by it.
    pub b_scale: f64,
    b: Vec<f64>,
    drift: DMatrix<f64>,
}

pub fn build_delay_instance(params: DelayParams) -> Result<DelayInstance> {
    if !(params.sigma0 > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma0 must be positive, got {}", params.sigma0)));
    }
    let n_d = params.b1.len();
    if n_d < 2 || !(params.delay > 0.0) {
        return Err(Error::InvalidParameter("need a positive delay and at least 2 delay cells".into()));
    }
    if !(params.a0.is_finite() && params.b0.is_finite() && params.b1.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidParameter("delay coefficients must be finite".into()));
    }
    let h = params.delay / n_d as f64;
    let norm = (params.b0 * params.b0 + h * params.b1.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("control direction b vanishes".into()));
    }
    let b: Vec<f64> = std::iter::once(params.b0).chain(params.b1.iter().copied()).map(|v| v / norm).collect();
    let mut m = DMatrix::zeros(n_d + 1, n_d + 1);
    m[(0, 0)] = params.a0;
    m[(0, n_d)] = 1.0;
    for j in 1..=n_d {
        m[(j, j)] = -1.0 / h;
        if j > 1 {
            m[(j, j - 1)] = 1.0 / h;
        }
    }
    Ok(DelayInstance { params, b_scale: norm, b, drift: m })
}

impl DelayInstance {
    pub fn n_cells(&self) -> usize {
        self.params.b1.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.params.delay / self.n_cells() as f64
    }

    /// Normalized `b = (b₀, b₁)` as state coordinates.
    pub fn direction(&self) -> &[f64] {
        &self.b
    }

    /// `x₁_j = h Σ_{l≤j} b₁_l u₀(ξ_{l−1} − ξ_j)` from the past control `u₀` on `[−d, 0]`,
    /// `ξ_l = −d + l h`; the control is given in original units.
    pub fn initial_state(&self, y0: f64, past_control: impl Fn(f64) -> f64) -> Vec<f64> {
        let (n, h, d) = (self.n_cells(), self.cell_width(), self.params.delay);
        let xi = |l: usize| -d + l as f64 * h;
        let mut x = vec![y0];
        for j in 1..=n {
            let s: f64 = (1..=j).map(|l| self.params.b1[l - 1] * past_control(xi(l - 1) - xi(j))).sum();
            x.push(h * s);
        }
        x
    }

    /// Original-units control `u` corresponds to the normalized control `u · |b|`.
    pub fn normalized_control(&self, u: f64) -> f64 {
        u * self.b_scale
    }

    /// Scalar model for `x₀` when the delay kernel vanishes and `a₀ ≤ 0`: an OU
    /// mode with `μ = −a₀`, `g = b₀/|b|`, identity control map.
    pub fn scalar_reduction(&self, lambda: f64) -> Result<SpectralModel> {
        if self.params.b1.iter().any(|v| *v != 0.0) || self.params.a0 > 0.0 {
            return Err(Error::UnsupportedScheme(
                "the HJB solver covers the delay example only with b1 = 0 and a0 <= 0".into(),
            ));
        }
        let g = self.b[0];
        SpectralModel::build(ModelSpec {
            n_modes: 1,
            mu: vec![-self.params.a0],
            sigma_diag: vec![self.params.sigma0],
            g_diag: vec![g],
            control_map: vec![vec![1.0]],
            beta: 0.0,
            a_g: 0.0,
            c_g: g.abs().max(1e-300),
            lambda,
            p: 2.0,
            spatial_dim: 1,
        })
    }

    /// Noiseless trajectory `E X_t` on `times` for a simple control in normalized units.
    pub fn mean_path(&self, x: &[f64], control: &crate::dynamics::SimpleControl, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        crate::dynamics::validate_grid(times)?;
        let grid = crate::dynamics::merge_times(times, &control.jump_times()[1..]);
        let mut out = vec![x.to_vec()];
        let mut state = x.to_vec();
        let mut next = vec![0.0; state.len()];
        let mut j = 1;
        for w in grid.windows(2) {
            let tr = self.transition(w[1] - w[0])?;
            tr.mean_step(&state, control.value_at(w[0]), &mut next);
            std::mem::swap(&mut state, &mut next);
            if j < times.len() && (w[1] - times[j]).abs() <= 1e-13 * times[j].max(1.0) {
                out.push(state.clone());
                j += 1;
            }
        }
        Ok(out)
    }
}

impl LinearControlSystem for DelayInstance {
    fn state_dim(&self) -> usize {
        self.n_cells() + 1
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn k_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        (&self.drift * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn noise_variances(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.state_dim()];
        q[0] = self.params.sigma0 * self.params.sigma0;
        q
    }

    fn control_to_k(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    fn g_adjoint(&self, grad: &[f64]) -> Vec<f64> {
        vec![grad.iter().zip(&self.b).map(|(a, b)| a * b).sum()]
    }

    fn transition(&self, dt: f64) -> Result<Transition> {
        let b = DMatrix::from_column_slice(self.state_dim(), 1, &self.b);
        dense_transition(&self.drift, &b, &self.noise_variances(), dt)
    }

    fn digest(&self) -> String {
        let text = serde_json::to_string(&self.params).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
