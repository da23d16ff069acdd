//! Heat equation on `(0,π)^d` with Neumann boundary control, in the cosine basis.
//!
//! The boundary input enters as `G L α` with `g_k = (δ+μ_k)^{1/4+ε}` and
//! `L_k = (δ+μ_k)^{3/4−ε} ⟨N_δ α, e_k⟩`, where `N_δ` is the Neumann map of
//! `Δw = δw, ∂_n w = α`. The exponents cancel in `G L`, leaving the distributional
//! boundary input `∫_∂ α e_k`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::conditions::{audit_model, theta_window, ConditionReport, ThetaWindow};
use crate::dynamics::ControlBox;
use crate::error::{Error, Result};
use crate::hjb::{ControlCost, CostSpec, StateCost};
use crate::model::{ModelSpec, SpectralModel};
use crate::quadrature::composite_legendre;

/// `e_k(ξ)` of the Neumann Laplacian on `(0,π)`.
pub fn cosine_mode(k: usize, xi: f64) -> f64 {
    if k == 0 {
        1.0 / PI.sqrt()
    } else {
        (2.0 / PI).sqrt() * (k as f64 * xi).cos()
    }
}

fn cosine_norm(k: usize) -> f64 {
    cosine_mode(k, 0.0)
}

/// Coefficients `⟨N_δ α, e_k⟩ = (α₀ e_k(0) + α_π e_k(π)) / (δ + k²)` for `k < n`.
pub fn neumann_map_1d(delta: f64, alpha: [f64; 2], n: usize) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    Ok((0..n)
        .map(|k| (alpha[0] * cosine_mode(k, 0.0) + alpha[1] * cosine_mode(k, PI)) / (delta + (k * k) as f64))
        .collect())
}

/// Closed-form solution `w(ξ) = (α₀ cosh(r(π−ξ)) + α_π cosh(rξ)) / (r sinh(rπ))`, `r = √δ`.
pub fn neumann_solution_1d(delta: f64, alpha: [f64; 2], xi: f64) -> f64 {
    let r = delta.sqrt();
    (alpha[0] * (r * (PI - xi)).cosh() + alpha[1] * (r * xi).cosh()) / (r * (r * PI).sinh())
}

/// `(δ + μ_k)⟨w, e_k⟩ − (α₀ e_k(0) + α_π e_k(π))` with the inner product by quadrature.
pub fn green_identity_residual(delta: f64, alpha: [f64; 2], k: usize) -> Result<f64> {
    let rule = composite_legendre(0.0, PI, 32, 16)?;
    let inner = rule.integrate(|xi| neumann_solution_1d(delta, alpha, xi) * cosine_mode(k, xi));
    let boundary = alpha[0] * cosine_mode(k, 0.0) + alpha[1] * cosine_mode(k, PI);
    Ok((delta + (k * k) as f64) * inner - boundary)
}

/// Square eigenpairs `(μ, i, j)` with `μ = i² + j²`, sorted by `(μ, i, j)`.
pub fn square_modes(n: usize) -> Vec<(f64, usize, usize)> {
    let r = (n as f64).sqrt().ceil() as usize + 2;
    let mut v: Vec<(f64, usize, usize)> = (0..=2 * r)
        .flat_map(|i| (0..=2 * r).map(move |j| ((i * i + j * j) as f64, i, j)))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    v.truncate(n);
    v
}

/// Boundary basis on the square: cosine modes of frequency `j` on each side, ordered
/// by `(j, side)` with sides `ξ=0, ξ=π, η=0, η=π`. Entry `(k, r)` is `∫_∂ β_r e_k`.
pub fn square_boundary_matrix(modes: &[(f64, usize, usize)], m: usize) -> Vec<Vec<f64>> {
    let sign = |a: usize| if a % 2 == 0 { 1.0 } else { -1.0 };
    modes
        .iter()
        .map(|&(_, a, b)| {
            (0..m)
                .map(|r| {
                    let (freq, side) = (r / 4, r % 4);
                    match side {
                        0 if b == freq => cosine_norm(a),
                        1 if b == freq => cosine_norm(a) * sign(a),
                        2 if a == freq => cosine_norm(b),
                        3 if a == freq => cosine_norm(b) * sign(b),
                        _ => 0.0,
                    }
                })
                .collect()
        })
        .collect()
}

/// Inputs of [`build_neumann_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NeumannParams {
    pub spatial_dim: usize,
    pub n_modes: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub theta: f64,
    /// Exponent used by the noise-trace audit.
    pub gamma: f64,
    pub lambda: f64,
    /// Boundary modes for the square; the interval always has its two endpoints.
    pub boundary_modes: usize,
    /// Accept θ outside the window or failed audits, with a warning.
    pub allow_override: bool,
}

impl Default for NeumannParams {
    fn default() -> Self {
        Self {
            spatial_dim: 1,
            n_modes: 8,
            delta: 1.0,
            epsilon: 0.05,
            theta: 0.0,
            gamma: 0.05,
            lambda: 16.0,
            boundary_modes: 4,
            allow_override: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeumannInstance {
    pub params: NeumannParams,
    pub window: ThetaWindow,
    pub model: SpectralModel,
    pub reports: Vec<ConditionReport>,
    /// True when the instance was accepted despite a failed precondition.
    pub overridden: bool,
}

impl NeumannInstance {
    pub fn all_audits_pass(&self) -> bool {
        self.reports.iter().all(|r| r.satisfied)
    }
}

pub fn build_neumann_instance(params: &NeumannParams) -> Result<NeumannInstance> {
    let NeumannParams { spatial_dim: d, n_modes: n, delta, epsilon, theta, .. } = *params;
    let window = theta_window(d)?;
    if window.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "noise exponent window is empty for d = {d}: the conditions hold only for d <= 2"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 0.75) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 3/4), got {epsilon}")));
    }
    if !(delta > 0.0) || n < 2 {
        return Err(Error::InvalidParameter("need delta > 0 and at least 2 modes".into()));
    }
    let mut overridden = false;
    let mut refuse = |what: String| -> Result<()> {
        if params.allow_override {
            log::warn!("override: {what}");
            overridden = true;
            Ok(())
        } else {
            Err(Error::AuditFailed(what))
        }
    };
    if !window.contains(theta) {
        refuse(format!("theta = {theta} outside ({}, {})", window.lower, window.upper))?;
    }
    if 1.5 + 2.0 * epsilon + d as f64 * theta >= 2.0 {
        refuse(format!("3/2 + 2 epsilon + d theta = {} is not below 2", 1.5 + 2.0 * epsilon + d as f64 * theta))?;
    }

    let beta = 0.25 + epsilon;
    let (mu, boundary): (Vec<f64>, Vec<Vec<f64>>) = match d {
        1 => (0..n)
            .map(|k| ((k * k) as f64, vec![cosine_mode(k, 0.0), cosine_mode(k, PI)]))
            .unzip(),
        2 => {
            let modes = square_modes(n);
            let b = square_boundary_matrix(&modes, params.boundary_modes.max(1));
            (modes.iter().map(|m| m.0).collect(), b)
        }
        _ => unreachable!("window is empty for d >= 3"),
    };
    let spec = ModelSpec {
        n_modes: n,
        g_diag: mu.iter().map(|m| (delta + m).powf(beta)).collect(),
        sigma_diag: (0..n).map(|k| if k == 0 { 1.0 } else { (k as f64).powf(-theta) }).collect(),
        control_map: mu
            .iter()
            .zip(&boundary)
            .map(|(m, row)| row.iter().map(|b| (delta + m).powf(-beta) * b).collect())
            .collect(),
        mu,
        beta,
        // sup_μ (δ+μ)^β e^{−μs} ≤ e^{δs} (β/(e s))^β
        a_g: delta,
        c_g: (beta / std::f64::consts::E).powf(beta) * (1.0 + 1e-9),
        lambda: params.lambda,
        p: 1.0 / (0.75 - epsilon) + 1.0,
        spatial_dim: d,
    };
    let model = SpectralModel::build(spec)?;
    let reports = audit_model(&model, params.gamma)?;
    let failed: Vec<String> = reports.iter().filter(|r| !r.satisfied).map(|r| r.condition_id.to_string()).collect();
    if !failed.is_empty() {
        refuse(format!("audits failed: {}", failed.join(", ")))?;
    }
    Ok(NeumannInstance { params: params.clone(), window, model, reports, overridden })
}

/// Shipped cost: `l₁ = 1 − exp(−⟨x, w⟩²)`, `l₂ = ½|u|²`, `Λ = [−r, r]^m`.
pub fn default_cost(model: &SpectralModel, weights: Vec<f64>, radius: f64) -> Result<CostSpec> {
    CostSpec::new(
        StateCost::GaussianWell { weights },
        ControlCost::Quadratic { weight: 1.0 },
        ControlBox::symmetric(model.control_dim(), radius)?,
    )
}

/// `(G L α)_k` for a boundary input `α`.
pub fn boundary_input(model: &SpectralModel, alpha: &[f64]) -> Vec<f64> {
    model.control_to_k(alpha).iter().zip(model.g()).map(|(l, g)| l * g).collect()
}
