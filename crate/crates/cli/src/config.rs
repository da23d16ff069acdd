//! Run configuration: cost, solver and verification budgets in one TOML file.

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use mildhjb_core::apps::DelayParams;
use mildhjb_core::hjb::{ControlCost, CostSpec, SolverConfig, StateCost};
use mildhjb_core::{ControlBox, SpectralModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// `l₁(x) = 1 − exp(−⟨x, w⟩²)`.
    pub weights: Vec<f64>,
    /// `l₂(u) = ½ c |u|²`.
    pub control_weight: f64,
    /// Half-width of the admissible box.
    pub radius: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { weights: vec![1.0, 1.0], control_weight: 1.0, radius: 1.0 }
    }
}

impl CostConfig {
    pub fn build(&self, model: &SpectralModel) -> Result<CostSpec> {
        ensure!(self.weights.len() <= model.n_modes(), "cost weights exceed the {} model modes", model.n_modes());
        let admissible = ControlBox::symmetric(model.control_dim(), self.radius)?;
        Ok(CostSpec::new(
            StateCost::GaussianWell { weights: self.weights.clone() },
            ControlCost::Quadratic { weight: self.control_weight },
            admissible,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    pub paths: usize,
    pub step: f64,
    pub tail_tol: f64,
    /// Initial state; missing trailing modes are zero.
    pub x0: Vec<f64>,
    /// Grid stride of the strict-residual sweep entering the solver allowance.
    pub residual_stride: usize,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self { paths: 10_000, step: 0.01, tail_tol: 1e-6, x0: vec![], residual_stride: 7 }
    }
}

impl VerificationConfig {
    pub fn initial_state(&self, n: usize) -> Result<Vec<f64>> {
        ensure!(self.x0.len() <= n, "x0 has {} entries for {n} modes", self.x0.len());
        let mut x = self.x0.clone();
        x.resize(n, 0.0);
        Ok(x)
    }
}

/// Trigonometric test function `amplitude · cos(⟨a, x⟩ + phase)` for Dynkin checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynkinConfig {
    pub direction: Vec<f64>,
    pub amplitude: f64,
    pub phase: f64,
    /// Discount in the identity; the model's `λ` when absent.
    pub lambda: Option<f64>,
}

impl Default for DynkinConfig {
    fn default() -> Self {
        Self { direction: vec![0.6, -0.4, 0.3], amplitude: 1.0, phase: 0.3, lambda: None }
    }
}

/// Delay example in original units: `b₁(ξ) = b1_scale · e^{b1_rate ξ}` on `[−delay, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayConfig {
    pub a0: f64,
    pub b0: f64,
    pub sigma0: f64,
    pub delay: f64,
    pub b1_scale: f64,
    pub b1_rate: f64,
    pub y0: f64,
    /// Constant past control on `[−delay, 0)`.
    pub past_control: f64,
    /// Constant control applied on `[0, T]`.
    pub control: f64,
    /// Discount of the Dynkin check, the cost and the experimental HJB solve.
    pub lambda: f64,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self { a0: -1.0, b0: 1.0, sigma0: 0.5, delay: 1.0, b1_scale: 1.0, b1_rate: 1.0, y0: 0.5, past_control: 1.0, control: 0.5, lambda: 16.0 }
    }
}

impl DelayConfig {
    pub fn params(&self, n_d: usize) -> DelayParams {
        let (scale, rate) = (self.b1_scale, self.b1_rate);
        DelayParams::sampled(self.a0, self.b0, self.sigma0, self.delay, n_d, move |xi| scale * (rate * xi).exp())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cost: CostConfig,
    pub solver: SolverConfig,
    pub verification: VerificationConfig,
    pub dynkin: DynkinConfig,
    pub delay: DelayConfig,
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<(Self, String)> {
        let Some(path) = path else {
            return Ok((Self::default(), String::new()));
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        Ok((config, text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c: RunConfig = toml::from_str("[cost]\nradius = 2.0\n[solver]\ngrid_points = 21\n").unwrap();
        assert_eq!(c.cost.radius, 2.0);
        assert_eq!(c.cost.weights, vec![1.0, 1.0]);
        assert_eq!(c.solver.grid_points, 21);
        assert!(toml::from_str::<RunConfig>("[cost]\nradious = 2.0\n").is_err());
    }

    #[test]
    fn shipped_config_parses() {
        let c: RunConfig = toml::from_str(include_str!("../../../configs/run.toml")).unwrap();
        assert_eq!(c.solver.lead_modes, 2);
        assert_eq!(c.verification.x0, vec![0.4, -0.3]);
    }

    #[test]
    fn initial_state_pads_with_zeros() {
        let v = VerificationConfig { x0: vec![0.4], ..Default::default() };
        assert_eq!(v.initial_state(3).unwrap(), vec![0.4, 0.0, 0.0]);
        assert!(v.initial_state(0).is_err());
    }
}
