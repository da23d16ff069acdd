//! Hamiltonians `F_{0,CV}(x, q; u) = ⟨L u, q⟩ + l(x, u)` and `F₀ = inf_Λ F_{0,CV}`.

use std::sync::Arc;

use crate::conditions::{ConditionId, ConditionReport};
use crate::dynamics::FeedbackPolicy;
use crate::error::{ensure_len, Error, Result};
use crate::hjb::cost::CostSpec;
use crate::hjb::field::ValueField;
use crate::model::SpectralModel;
use crate::numerics::{dot, norm};

fn check_dims(cost: &CostSpec, model: &SpectralModel, q: &[f64]) -> Result<()> {
    ensure_len("control dimension", cost.control_dim(), model.control_dim())?;
    ensure_len("costate", q.len(), model.n_modes())?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("costate must be finite".into()));
    }
    Ok(())
}

pub fn hamiltonian_fcv(cost: &CostSpec, model: &SpectralModel, x: &[f64], q: &[f64], u: &[f64]) -> Result<f64> {
    check_dims(cost, model, q)?;
    if !cost.admissible.contains(u) {
        return Err(Error::InadmissibleControl(format!("{u:?} outside the control box")));
    }
    Ok(dot(&model.control_to_k(u), q) + cost.running(x, u))
}

/// Minimiser of `⟨L u, q⟩ + l₂(u)` over `Λ`: solves `Dl₂(u) = −L* q`, clamped to the box.
pub fn minimizer(cost: &CostSpec, model: &SpectralModel, q: &[f64]) -> Result<Vec<f64>> {
    check_dims(cost, model, q)?;
    cost.argmin_linear(&model.control_adjoint(q))
}

/// `F₀(x, q) − l₁(x)`, the part depending on the costate.
pub fn control_hamiltonian(cost: &CostSpec, model: &SpectralModel, q: &[f64]) -> Result<f64> {
    let u = minimizer(cost, model, q)?;
    Ok(dot(&model.control_to_k(&u), q) + cost.control.eval(&u))
}

pub fn hamiltonian_f0(cost: &CostSpec, model: &SpectralModel, x: &[f64], q: &[f64]) -> Result<f64> {
    Ok(cost.state.eval(x) + control_hamiltonian(cost, model, q)?)
}

/// `sup_{u ∈ Λ} |L u|` restricted to the first `modes` rows: Lipschitz constant of `F₀(x, ·)`.
pub fn lipschitz_constant(cost: &CostSpec, model: &SpectralModel, modes: usize) -> f64 {
    if !cost.admissible.is_bounded() {
        return f64::INFINITY;
    }
    cost.admissible
        .vertices()
        .iter()
        .map(|u| norm(&model.control_to_k(u)[..modes.min(model.n_modes())]))
        .fold(0.0, f64::max)
}

/// Lipschitz continuity of the Hamiltonian in the costate.
pub fn check_hamiltonian_lipschitz(cost: &CostSpec, model: &SpectralModel) -> ConditionReport {
    let c = lipschitz_constant(cost, model, model.n_modes());
    ConditionReport {
        condition_id: ConditionId::A3,
        satisfied: c.is_finite(),
        witness: c,
        detail: if c.is_finite() {
            format!("C_F0 = sup over the control box of |L u| = {c:.6}")
        } else {
            "unbounded control set: F0 is not globally Lipschitz in q".into()
        },
    }
}

/// Optimal control at `x` given `v`.
pub fn feedback_map(cost: &CostSpec, model: &SpectralModel, v: &ValueField, x: &[f64]) -> Result<Vec<f64>> {
    if v.k_dim() != model.n_modes() {
        return Err(Error::DimensionMismatch("value field and model disagree on modes".into()));
    }
    minimizer(cost, model, &v.g_gradient(x))
}

/// Closed-loop policy `x ↦ feedback_map(x)`.
pub fn feedback_policy(cost: &CostSpec, model: &SpectralModel, v: Arc<ValueField>) -> FeedbackPolicy {
    let (c, m) = (cost.clone(), model.clone());
    FeedbackPolicy::new("hjb-argmin", model.control_dim(), move |x| {
        minimizer(&c, &m, &v.g_gradient(x)).unwrap_or_else(|_| vec![f64::NAN; m.control_dim()])
    })
    .with_box(cost.admissible.clone())
}
