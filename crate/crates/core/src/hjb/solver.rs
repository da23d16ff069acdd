//! Fixed-point solver for the mild HJB equation
//! `v = ∫₀^∞ e^{−λs} P_s[F₀(·, D^G v)] ds` on a tensor grid over the leading modes.
//!
//! The state cost `l₁` is integrated exactly against the Gaussian transition law;
//! the costate part `F₀ − l₁` is carried by its multilinear interpolant. The
//! G-gradient of each `P_s` term uses the Gaussian integration-by-parts weight
//! `g_i e^{−μ_i s} z_i / √Q_i(s)`, so `v` and `D^G v` share one quadrature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::cost::{CostSpec, StateCost};
use crate::hjb::field::{GridAxis, SolveReport, ValueField};
use crate::hjb::hamiltonian::{control_hamiltonian, lipschitz_constant};
use crate::model::SpectralModel;
use crate::numerics::variance_factor;
use crate::quadrature::{gauss_hermite_normal, LaplaceRule, LaplaceSpec, Rule};
use crate::rng::NormalStream;

/// Expectation rule used inside the fixed-point map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FieldScheme {
    GaussHermite { order: usize },
    /// Antithetic normal samples, frozen across iterations.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lead_modes: usize,
    /// Points per axis; odd counts let the coarse grid nest inside the fine one.
    pub grid_points: usize,
    /// Overrides `width_factor · √(q_i / (λ + 2μ_i))`.
    pub half_width: Option<Vec<f64>>,
    pub width_factor: f64,
    pub scheme: FieldScheme,
    /// Gauss–Hermite order per axis for the state cost.
    pub cost_order: usize,
    pub laplace: LaplaceSpec,
    pub tol: f64,
    pub max_iter: usize,
    /// Re-solve on the nested coarse grid to estimate the discretization error.
    pub estimate_grid_error: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lead_modes: 2,
            grid_points: 41,
            half_width: None,
            width_factor: 5.0,
            scheme: FieldScheme::GaussHermite { order: 24 },
            cost_order: 20,
            laplace: LaplaceSpec::default(),
            tol: 1e-9,
            max_iter: 200,
            estimate_grid_error: true,
        }
    }
}

/// Half-widths `factor · √(q_i/(λ+2μ_i))`: the std of the discounted occupation law from 0.
pub fn default_half_widths(model: &SpectralModel, lead: usize, factor: f64) -> Vec<f64> {
    (0..lead)
        .map(|i| factor * (model.q()[i] / (model.lambda() + 2.0 * model.mu()[i])).sqrt())
        .collect()
}

/// `C_{F₀} · ∫ e^{−λs} sup_{i<modes} |g_i e^{−μ_i s}/√Q_i(s)| ds`, tail included.
pub fn contraction_constant(model: &SpectralModel, cost: &CostSpec, modes: usize, laplace: LaplaceSpec) -> Result<f64> {
    let rule = LaplaceRule::new(model.lambda(), laplace)?;
    let gamma = |s: f64| -> Result<f64> {
        (0..modes).try_fold(0.0, |acc: f64, i| {
            let q = model.q()[i];
            if q == 0.0 {
                return Err(Error::DegenerateNoise { mode: i });
            }
            let (mu, g) = (model.mu()[i], model.g()[i]);
            Ok(acc.max(g.abs() * (-mu * s).exp() / (q * variance_factor(mu, s)).sqrt()))
        })
    };
    let mut integral = 0.0;
    for (s, w) in rule.iter() {
        integral += w * gamma(s)?;
    }
    // gamma is nonincreasing in s
    integral += rule.tail_bound(gamma(rule.horizon)?);
    Ok(lipschitz_constant(cost, model, modes) * integral)
}

/// Per-time, per-axis transfer matrices on the grid (row-major `n × n`).
struct AxisOps {
    value: Vec<f64>,
    deriv: Vec<f64>,
    /// `g_i e^{−μ_i s} / √Q_i(s)`.
    grad_factor: f64,
}

fn axis_ops(model: &SpectralModel, axis: &GridAxis, i: usize, s: f64, rule: &Rule) -> Result<AxisOps> {
    let (mu, q, g) = (model.mu()[i], model.q()[i], model.g()[i]);
    if q == 0.0 {
        return Err(Error::DegenerateNoise { mode: i });
    }
    let decay = (-mu * s).exp();
    let sd = (q * variance_factor(mu, s)).sqrt();
    let n = axis.n;
    let (mut value, mut deriv) = (vec![0.0; n * n], vec![0.0; n * n]);
    for a in 0..n {
        let m = decay * axis.node(a);
        for (z, w) in rule.iter() {
            let (c, t) = axis.locate(m + sd * z);
            value[a * n + c] += w * (1.0 - t);
            value[a * n + c + 1] += w * t;
            deriv[a * n + c] += w * z * (1.0 - t);
            deriv[a * n + c + 1] += w * z * t;
        }
    }
    Ok(AxisOps { value, deriv, grad_factor: g * decay / sd })
}

/// Contract `mat` against tensor axis `axis`.
fn apply_axis(dims: &[usize], axis: usize, mat: &[f64], input: &[f64]) -> Vec<f64> {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![0.0; input.len()];
    for o in 0..outer {
        for a in 0..n {
            let dst = (o * n + a) * stride;
            for b in 0..n {
                let k = mat[a * n + b];
                if k == 0.0 {
                    continue;
                }
                let src = (o * n + b) * stride;
                for r in 0..stride {
                    out[dst + r] += k * input[src + r];
                }
            }
        }
    }
    out
}

/// The discretized map `h ↦ (Σ_s W_s P_s h, Σ_s W_s D^G P_s h)` on the grid.
struct GridOperator {
    dims: Vec<usize>,
    weights: Vec<f64>,
    ops: Vec<Vec<AxisOps>>,
}

impl GridOperator {
    fn new(model: &SpectralModel, axes: &[GridAxis], laplace: &LaplaceRule, scheme: FieldScheme) -> Result<Self> {
        let lead = axes.len();
        let ops = laplace
            .times
            .par_iter()
            .enumerate()
            .map(|(si, &s)| {
                (0..lead)
                    .map(|i| {
                        let rule = match scheme {
                            FieldScheme::GaussHermite { order } => gauss_hermite_normal(order)?,
                            FieldScheme::MonteCarlo { samples, seed } => antithetic_rule(samples, seed, si, i)?,
                        };
                        axis_ops(model, &axes[i], i, s, &rule)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dims: axes.iter().map(|a| a.n).collect(), weights: laplace.weights.clone(), ops })
    }

    /// Returns values and node-major gradients.
    fn apply(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lead = self.dims.len();
        let terms: Vec<Vec<Vec<f64>>> = self
            .ops
            .par_iter()
            .zip(&self.weights)
            .map(|(ops, &w)| {
                (0..=lead)
                    .map(|c| {
                        // c == lead: value; otherwise gradient component c
                        let mut t = h.to_vec();
                        for (axis, op) in ops.iter().enumerate().rev() {
                            let mat = if axis == c { &op.deriv } else { &op.value };
                            t = apply_axis(&self.dims, axis, mat, &t);
                        }
                        let scale = if c == lead { w } else { w * ops[c].grad_factor };
                        t.iter_mut().for_each(|v| *v *= scale);
                        t
                    })
                    .collect()
            })
            .collect();
        let count = h.len();
        let mut values = vec![0.0; count];
        let mut grads = vec![0.0; count * lead];
        for term in &terms {
            for (v, t) in values.iter_mut().zip(&term[lead]) {
                *v += t;
            }
            for c in 0..lead {
                for (j, t) in term[c].iter().enumerate() {
                    grads[j * lead + c] += t;
                }
            }
        }
        (values, grads)
    }
}

fn antithetic_rule(samples: usize, seed: u64, time: usize, axis: usize) -> Result<Rule> {
    if samples < 2 {
        return Err(Error::InvalidParameter("Monte Carlo scheme needs at least 2 samples".into()));
    }
    let half = samples.div_ceil(2);
    let mut rng = NormalStream::new(seed, (time * 64 + axis) as u64, 0);
    let mut nodes = Vec::with_capacity(2 * half);
    for _ in 0..half {
        let z = rng.next();
        nodes.push(z);
        nodes.push(-z);
    }
    let w = 1.0 / nodes.len() as f64;
    Ok(Rule { weights: vec![w; nodes.len()], nodes })
}

/// `Σ_s W_s (E l₁(X_s), c_i(s) E[l₁(X_s) z_i])` at every node, from 0 drift.
fn state_cost_terms(
    model: &SpectralModel,
    cost: &StateCost,
    probe: &ValueField,
    laplace: &LaplaceRule,
    order: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lead = probe.lead();
    let count = probe.node_count();
    if let StateCost::Constant(c) = cost {
        let total: f64 = laplace.weights.iter().sum::<f64>() + laplace.tail_bound(1.0);
        return Ok((vec![c * total; count], vec![0.0; count * lead]));
    }
    if cost.upper_bound().is_none() {
        return Err(Error::InvalidParameter("the solver needs a bounded state cost".into()));
    }
    let rule = gauss_hermite_normal(order)?;
    let points = order.pow(lead as u32);
    let per_time: Vec<(Vec<f64>, Vec<f64>, f64)> = laplace
        .iter()
        .map(|(s, w)| {
            let decay: Vec<f64> = (0..lead).map(|i| (-model.mu()[i] * s).exp()).collect();
            let sd: Vec<f64> = (0..lead).map(|i| (model.q()[i] * variance_factor(model.mu()[i], s)).sqrt()).collect();
            let factor: Vec<f64> = (0..lead).map(|i| model.g()[i] * decay[i] / sd[i]).collect();
            (decay, sd.into_iter().chain(factor).collect(), w)
        })
        .collect();
    let rows: Vec<(f64, Vec<f64>)> = (0..count)
        .into_par_iter()
        .map(|node| {
            let x0 = probe.node_point(node);
            let mut x = x0.clone();
            let (mut v, mut grad) = (0.0, vec![0.0; lead]);
            for (decay, sdf, w) in &per_time {
                let (sd, factor) = sdf.split_at(lead);
                let (mut ev, mut ez) = (0.0, vec![0.0; lead]);
                for flat in 0..points {
                    let (mut rem, mut wt) = (flat, 1.0);
                    let mut z = [0.0; 8];
                    for i in (0..lead).rev() {
                        let j = rem % order;
                        rem /= order;
                        z[i] = rule.nodes[j];
                        x[i] = decay[i] * x0[i] + sd[i] * z[i];
                        wt *= rule.weights[j];
                    }
                    let l = wt * cost.eval(&x);
                    ev += l;
                    for i in 0..lead {
                        ez[i] += l * z[i];
                    }
                }
                v += w * ev;
                for i in 0..lead {
                    grad[i] += w * factor[i] * ez[i];
                }
            }
            (v, grad)
        })
        .collect();
    let values = rows.iter().map(|r| r.0).collect();
    let grads = rows.into_iter().flat_map(|r| r.1).collect();
    Ok((values, grads))
}

/// Largest number of grid modes supported by the tensor kernels.
pub const MAX_LEAD_MODES: usize = 8;

fn build_axes(model: &SpectralModel, config: &SolverConfig, points: usize) -> Result<Vec<GridAxis>> {
    let lead = config.lead_modes;
    let widths = match &config.half_width {
        Some(w) if w.len() == lead => w.clone(),
        Some(w) => return Err(Error::DimensionMismatch(format!("{} half-widths for {lead} grid modes", w.len()))),
        None => default_half_widths(model, lead, config.width_factor),
    };
    widths.iter().map(|&r| GridAxis::symmetric(r, points)).collect()
}

/// Solve on one grid without the refinement estimate.
fn solve_on(model: &SpectralModel, cost: &CostSpec, config: &SolverConfig, axes: Vec<GridAxis>) -> Result<ValueField> {
    let lead = config.lead_modes;
    let n_modes = model.n_modes();
    let count: usize = axes.iter().map(|a| a.n).product();
    let laplace = LaplaceRule::new(model.lambda(), config.laplace)?;
    let kappa = contraction_constant(model, cost, lead, config.laplace)?;
    if !(kappa < 1.0) {
        return Err(Error::NotContractive { constant: kappa });
    }
    let mut field = ValueField::new(axes.clone(), n_modes, vec![0.0; count], vec![0.0; count * lead])?;
    let (cost_v, cost_g) = state_cost_terms(model, &cost.state, &field, &laplace, config.cost_order)?;
    let operator = GridOperator::new(model, &axes, &laplace, config.scheme)?;

    // start from the uncontrolled part R_λ l₁
    let (mut v, mut dv) = (cost_v.clone(), cost_g.clone());
    let mut report = SolveReport { lambda: model.lambda(), contraction_constant: kappa, ..Default::default() };
    let mut prev_change = f64::NAN;
    for iter in 1..=config.max_iter {
        let hamiltonian: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|j| {
                let mut q = vec![0.0; n_modes];
                q[..lead].copy_from_slice(&dv[j * lead..(j + 1) * lead]);
                control_hamiltonian(cost, model, &q)
            })
            .collect::<Result<_>>()?;
        let (mut v_new, mut dv_new) = operator.apply(&hamiltonian);
        v_new.iter_mut().zip(&cost_v).for_each(|(a, b)| *a += b);
        dv_new.iter_mut().zip(&cost_g).for_each(|(a, b)| *a += b);

        let sup_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
        let change = sup_diff(&dv_new, &dv);
        let v_change = sup_diff(&v_new, &v);
        let scale = dv_new.iter().chain(&v_new).fold(1.0_f64, |m, x| m.max(x.abs()));
        if prev_change > 1e-12 * scale && change > 1e-12 * scale {
            report.ratios.push(change / prev_change);
        }
        v = v_new;
        dv = dv_new;
        report.iterations = iter;
        report.last_change = change.max(v_change);
        prev_change = change;
        log::debug!("hjb iteration {iter}: |ΔD^G v| = {change:.3e}, |Δv| = {v_change:.3e}");
        if change.max(v_change) <= config.tol {
            let c_f0 = lipschitz_constant(cost, model, lead);
            let remainder = v_change + c_f0 / model.lambda() * kappa / (1.0 - kappa) * change;
            report.lipschitz_f0 = c_f0;
            report.error_budget = remainder + laplace.tail_bound(cost.state.upper_bound().unwrap_or(0.0).abs());
            report.model_digest = model.digest();
            field = ValueField::new(axes, n_modes, v, dv)?;
            field.report = report;
            return Ok(field);
        }
    }
    Err(Error::MaxIterations { iterations: config.max_iter, change: report.last_change })
}

/// Solve the mild HJB equation by contraction on the leading-mode grid.
pub fn solve_mild_hjb(model: &SpectralModel, cost: &CostSpec, config: &SolverConfig) -> Result<ValueField> {
    let lead = config.lead_modes;
    if lead == 0 || lead > model.n_modes() || lead > MAX_LEAD_MODES {
        return Err(Error::InvalidParameter(format!("{lead} grid modes for a {}-mode model", model.n_modes())));
    }
    if cost.control_dim() != model.control_dim() {
        return Err(Error::DimensionMismatch("cost and model disagree on the control dimension".into()));
    }
    if cost.state.support() > lead {
        return Err(Error::InvalidParameter(format!(
            "state cost depends on {} modes but the grid covers {lead}",
            cost.state.support()
        )));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let axes = build_axes(model, config, config.grid_points)?;
    let mut field = solve_on(model, cost, config, axes.clone())?;
    let full = contraction_constant(model, cost, model.n_modes(), config.laplace);
    field.report.full_model_constant = full.unwrap_or(f64::INFINITY);

    if config.estimate_grid_error && config.grid_points % 2 == 1 && config.grid_points >= 5 {
        let coarse_n = config.grid_points.div_ceil(2);
        let coarse = solve_on(model, cost, config, build_axes(model, config, coarse_n)?)?;
        let mut err = 0.0_f64;
        for idx in 0..coarse.node_count() {
            let x = coarse.node_point(idx);
            err = err.max((field.eval(&x) - coarse.node_values()[idx]).abs());
        }
        field.report.grid_error = err;
        field.report.error_budget += err;
    }
    log::info!(
        "mild HJB solved: {} iterations, contraction constant {:.4}, budget {:.3e}",
        field.report.iterations,
        field.report.contraction_constant,
        field.report.error_budget
    );
    Ok(field)
}
