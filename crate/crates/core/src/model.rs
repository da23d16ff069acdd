//! Diagonal spectral description of a controlled Ornstein–Uhlenbeck problem.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure_len, Error, Result};
use crate::numerics::log_space;

/// Raw model data as read from / written to a TOML manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_modes: usize,
    pub mu: Vec<f64>,
    pub sigma_diag: Vec<f64>,
    pub g_diag: Vec<f64>,
    /// `n_modes` rows of `m` entries: `(L u)_k = Σ_j control_map[k][j] u_j`.
    pub control_map: Vec<Vec<f64>>,
    pub beta: f64,
    #[serde(rename = "a_G")]
    pub a_g: f64,
    #[serde(rename = "C_G")]
    pub c_g: f64,
    pub lambda: f64,
    pub p: f64,
    pub spatial_dim: usize,
}

/// A validated model. Mode `k` evolves as
/// `dX_k = (-μ_k X_k + g_k (L u)_k) dt + σ_k dW_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    spec: ModelSpec,
    q: Vec<f64>,
    control_dim: usize,
    /// Row-major `N × m` copy of the control map.
    l_flat: Vec<f64>,
}

/// Times at which the kernel bound is sampled during construction.
pub fn kernel_check_grid() -> Vec<f64> {
    log_space(1e-6, 10.0, 141)
}

impl SpectralModel {
    pub fn build(spec: ModelSpec) -> Result<Self> {
        let n = spec.mu.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("at least one mode required".into()));
        }
        ensure_len("n_modes", spec.n_modes, n)?;
        ensure_len("sigma_diag", spec.sigma_diag.len(), n)?;
        ensure_len("g_diag", spec.g_diag.len(), n)?;
        ensure_len("control_map rows", spec.control_map.len(), n)?;
        let m = spec.control_map[0].len();
        if m == 0 {
            return Err(Error::DimensionMismatch("control dimension must be positive".into()));
        }
        for row in &spec.control_map {
            ensure_len("control_map row", row.len(), m)?;
        }
        if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", spec.lambda)));
        }
        if !(0.0..1.0).contains(&spec.beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1), got {}", spec.beta)));
        }
        let bound = 1.0 / (1.0 - spec.beta);
        if !(spec.p > bound) {
            return Err(Error::AdmissibilityExponent { p: spec.p, bound });
        }
        if !(spec.c_g > 0.0 && spec.c_g.is_finite() && spec.a_g.is_finite()) {
            return Err(Error::InvalidParameter("C_G must be positive and a_G finite".into()));
        }
        if spec.spatial_dim == 0 {
            return Err(Error::InvalidParameter("spatial_dim must be at least 1".into()));
        }
        for (i, &mu) in spec.mu.iter().enumerate() {
            let sorted = i == 0 || mu >= spec.mu[i - 1];
            if !(mu >= 0.0 && mu.is_finite() && sorted) {
                return Err(Error::UnsortedEigenvalues { index: i });
            }
        }
        for (i, &s) in spec.sigma_diag.iter().enumerate() {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma_{i} must be finite and >= 0")));
            }
        }
        let finite = |v: &f64| v.is_finite();
        if !spec.g_diag.iter().all(finite) || !spec.control_map.iter().flatten().all(finite) {
            return Err(Error::InvalidParameter("g_diag and control_map must be finite".into()));
        }
        let q = spec.sigma_diag.iter().map(|s| s * s).collect();
        let l_flat = spec.control_map.iter().flatten().copied().collect();
        let model = Self { spec, q, control_dim: m, l_flat };
        if let Some(e) = model.first_kernel_violation(&kernel_check_grid()) {
            return Err(e);
        }
        Ok(model)
    }

    fn first_kernel_violation(&self, grid: &[f64]) -> Option<Error> {
        for &s in grid {
            let rhs = self.kernel_envelope(s);
            for k in 0..self.n_modes() {
                let lhs = (-self.mu()[k] * s).exp() * self.g()[k].abs();
                if lhs > rhs * (1.0 + 1e-12) {
                    return Some(Error::KernelBound { mode: k, s, lhs, rhs });
                }
            }
        }
        None
    }

    /// `C_G (s^{-β} ∨ 1) e^{a_G s}`.
    pub fn kernel_envelope(&self, s: f64) -> f64 {
        self.spec.c_g * s.powf(-self.spec.beta).max(1.0) * (self.spec.a_g * s).exp()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::build(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.spec).expect("model spec is always serialisable")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_modes(&self) -> usize {
        self.spec.mu.len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn mu(&self) -> &[f64] {
        &self.spec.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.spec.sigma_diag
    }

    /// Noise variances `q_k = σ_k²`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn g(&self) -> &[f64] {
        &self.spec.g_diag
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    pub fn p(&self) -> f64 {
        self.spec.p
    }

    pub fn spatial_dim(&self) -> usize {
        self.spec.spatial_dim
    }

    /// Entry `L_{k j}`.
    pub fn control_entry(&self, k: usize, j: usize) -> f64 {
        self.l_flat[k * self.control_dim + j]
    }

    /// `L u` in mode space.
    pub fn control_to_k(&self, u: &[f64]) -> Vec<f64> {
        let m = self.control_dim;
        self.l_flat
            .chunks_exact(m)
            .map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `L* q` in control space.
    pub fn control_adjoint(&self, q: &[f64]) -> Vec<f64> {
        let m = self.control_dim;
        let mut out = vec![0.0; m];
        for (row, qk) in self.l_flat.chunks_exact(m).zip(q) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * qk;
            }
        }
        out
    }

    /// Copy with a different discount rate.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.lambda = lambda;
        Self::build(spec)
    }

    /// The model restricted to its `n` leading modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {n} of {} modes",
                self.n_modes()
            )));
        }
        let s = &self.spec;
        Self::build(ModelSpec {
            n_modes: n,
            mu: s.mu[..n].to_vec(),
            sigma_diag: s.sigma_diag[..n].to_vec(),
            g_diag: s.g_diag[..n].to_vec(),
            control_map: s.control_map[..n].to_vec(),
            ..s.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_spec() -> ModelSpec {
        let n = 8;
        let mu: Vec<f64> = (0..n).map(|k| (k * k) as f64).collect();
        ModelSpec {
            n_modes: n,
            g_diag: mu.iter().map(|m| (1.0 + m).powf(0.3)).collect(),
            mu,
            sigma_diag: vec![1.0; n],
            control_map: vec![vec![1.0]; n],
            beta: 0.3,
            a_g: 0.0,
            c_g: 1.0,
            lambda: 1.0,
            p: 2.0,
            spatial_dim: 1,
        }
    }

    #[test]
    fn heat_model_is_valid() {
        let m = SpectralModel::build(heat_spec()).unwrap();
        assert_eq!(m.n_modes(), 8);
        assert_eq!(m.control_dim(), 1);
    }

    #[test]
    fn pure_brownian_mode_is_valid() {
        let spec = ModelSpec {
            n_modes: 1,
            mu: vec![0.0],
            sigma_diag: vec![1.0],
            g_diag: vec![1.0],
            control_map: vec![vec![1.0]],
            beta: 0.0,
            a_g: 0.0,
            c_g: 1.0,
            lambda: 1.0,
            p: 1.01,
            spatial_dim: 1,
        };
        assert!(SpectralModel::build(spec).is_ok());
    }

    #[test]
    fn admissibility_exponent_rejected() {
        let spec = ModelSpec { p: 1.2, ..heat_spec() };
        assert!(matches!(SpectralModel::build(spec), Err(Error::AdmissibilityExponent { .. })));
    }

    #[test]
    fn unsorted_and_mismatched_inputs_rejected() {
        let mut spec = heat_spec();
        spec.mu.swap(2, 3);
        assert!(matches!(SpectralModel::build(spec), Err(Error::UnsortedEigenvalues { index: 3 })));
        let mut spec = heat_spec();
        spec.g_diag.pop();
        assert!(matches!(SpectralModel::build(spec), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn kernel_bound_enforced() {
        let spec = ModelSpec { c_g: 0.5, ..heat_spec() };
        assert!(matches!(SpectralModel::build(spec), Err(Error::KernelBound { .. })));
    }

    #[test]
    fn toml_round_trip_keeps_key_names() {
        let m = SpectralModel::build(heat_spec()).unwrap();
        let text = m.to_toml_string();
        assert!(text.contains("a_G") && text.contains("C_G"));
        let back = SpectralModel::from_toml_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.digest(), m.digest());
    }

    #[test]
    fn control_map_and_adjoint_are_transposes() {
        let mut spec = heat_spec();
        spec.control_map = (0..8).map(|k| vec![k as f64, 1.0 - k as f64]).collect();
        let m = SpectralModel::build(spec).unwrap();
        let u = [0.3, -1.2];
        let q: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        let lhs: f64 = m.control_to_k(&u).iter().zip(&q).map(|(a, b)| a * b).sum();
        let rhs: f64 = m.control_adjoint(&q).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
