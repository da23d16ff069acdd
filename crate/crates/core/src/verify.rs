//! Monte Carlo checks of the Dynkin formula, the fundamental identity and the
//! verification theorem, plus cost-functional estimation.
//!
//! Every estimator integrates `e^{−λt} φ(t)` along exactly simulated paths with a
//! trapezoid rule whose exponential factor is integrated exactly, so constants are
//! integrated without error. Paths live on a fine grid (the coarse grid plus its
//! midpoints); controls change only at coarse nodes, so the coarse-grid trapezoid
//! on the same paths gives a Richardson estimate of the time-quadrature error.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cylinder::CylinderFunction;
use crate::dynamics::{merge_times, simulate_path, uniform_grid, ControlProcess, FeedbackPolicy, LinearControlSystem, SimPlan};
use crate::error::{ensure_len, Error, Result};
use crate::hjb::{hamiltonian_f0, hamiltonian_fcv, strict_form_residual, CostSpec, ValueField};
use crate::model::SpectralModel;
use crate::numerics::mean_and_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckId {
    Dynkin,
    FundamentalIdentity,
    ValueDominance,
    FeedbackOptimality,
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dynkin => "dynkin",
            Self::FundamentalIdentity => "fundamental-identity",
            Self::ValueDominance => "value-dominance",
            Self::FeedbackOptimality => "feedback-optimality",
        })
    }
}

/// Outcome of one check. For equalities `pass ⇔ |estimate| ≤ 3·SE + tolerance`;
/// for dominance `estimate` is `v(x) − Ĵ` and `pass ⇔ estimate ≤ 3·SE + tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check_id: CheckId,
    pub label: String,
    pub estimate: f64,
    pub standard_error: f64,
    /// Deterministic part of the allowance: quadrature, tail and solver budgets.
    pub tolerance: f64,
    pub pass: bool,
    pub inputs_digest: String,
}

impl VerificationReport {
    fn equality(check_id: CheckId, label: String, estimate: f64, se: f64, tolerance: f64, digest: String) -> Self {
        let pass = estimate.abs() <= 3.0 * se + tolerance;
        Self { check_id, label, estimate, standard_error: se, tolerance, pass, inputs_digest: digest }
    }

    fn upper(check_id: CheckId, label: String, estimate: f64, se: f64, tolerance: f64, digest: String) -> Self {
        let pass = estimate <= 3.0 * se + tolerance;
        Self { check_id, label, estimate, standard_error: se, tolerance, pass, inputs_digest: digest }
    }

    pub fn csv_header() -> &'static str {
        "check_id,label,estimate,standard_error,tolerance,pass,inputs_digest"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},\"{}\",{},{},{},{},{}",
            self.check_id,
            self.label.replace('"', "'"),
            self.estimate,
            self.standard_error,
            self.tolerance,
            self.pass,
            self.inputs_digest
        )
    }
}

pub fn write_verification_csv(path: impl AsRef<Path>, reports: &[VerificationReport]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", VerificationReport::csv_header())?;
    for r in reports {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Append reports to a CSV ledger with columns
/// `check_id,label,estimate,standard_error,tolerance,pass,seed,model_hash,inputs_digest`;
/// the header is written only when the file is new or empty.
pub fn append_ledger(path: impl AsRef<Path>, reports: &[VerificationReport], seed: u64, model_hash: &str) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "check_id,label,estimate,standard_error,tolerance,pass,seed,model_hash,inputs_digest")?;
    }
    for r in reports {
        writeln!(
            f,
            "{},\"{}\",{:e},{:e},{:e},{},{seed},{model_hash},{}",
            r.check_id, r.label, r.estimate, r.standard_error, r.tolerance, r.pass, r.inputs_digest
        )?;
    }
    Ok(())
}

/// Sampling effort shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct PathBudget {
    pub n_paths: usize,
    pub seed: u64,
    /// Coarse time step; jump times of simple controls are added to the coarse grid.
    pub step: f64,
}

impl Default for PathBudget {
    fn default() -> Self {
        Self { n_paths: 10_000, seed: 1, step: 0.01 }
    }
}

/// `∫_a^b e^{−λt} φ dt` for `φ` linear between its endpoint values: weights of `φ(a)`, `φ(b)`.
pub fn exp_trapezoid_weights(lambda: f64, a: f64, b: f64) -> (f64, f64) {
    let dt = b - a;
    let ea = (-lambda * a).exp();
    let x = lambda * dt;
    if x < 1e-4 {
        let wa = dt * (0.5 - x / 6.0 + x * x / 24.0);
        let wb = dt * (0.5 - x / 3.0 + x * x / 8.0);
        return (ea * wa, ea * wb);
    }
    let one_minus = -(-x).exp_m1();
    let wa = dt * (1.0 / x - one_minus / (x * x));
    let wb = dt * (one_minus / (x * x) - (-x).exp() / x);
    (ea * wa, ea * wb)
}

/// Per-path discounted integrals on the fine and the coarse grid, plus the terminal state.
struct PathIntegrals {
    fine: Vec<f64>,
    coarse: Vec<f64>,
    terminal: Vec<f64>,
}

/// Simulate `n_paths` paths on `[0, T]` and integrate `e^{−λt} integrand(x, u)`.
/// Controls update at coarse nodes only; `hold` > 1 keeps each value for `hold` coarse steps.
fn integrate_paths<S, F, G>(
    sys: &S,
    control: &ControlProcess,
    x: &[f64],
    lambda: f64,
    horizon: f64,
    budget: PathBudget,
    hold: usize,
    integrand: F,
    terminal: G,
) -> Result<PathIntegrals>
where
    S: LinearControlSystem + ?Sized,
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    if budget.n_paths < 2 {
        return Err(Error::InvalidParameter("at least 2 paths are needed for a standard error".into()));
    }
    if !(horizon > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter("horizon and discount must be positive".into()));
    }
    let coarse = merge_times(&uniform_grid(horizon, budget.step)?, control.jump_times());
    let mut times = Vec::with_capacity(2 * coarse.len());
    let mut update = Vec::with_capacity(2 * coarse.len());
    for (j, w) in coarse.windows(2).enumerate() {
        times.push(w[0]);
        update.push(j % hold.max(1) == 0 || control.jump_times().contains(&w[0]));
        times.push(0.5 * (w[0] + w[1]));
        update.push(false);
    }
    times.push(horizon);
    update.push(false);
    let plan = SimPlan::new(sys, times.clone(), update)?;
    let last = times.len() - 1;

    let rows: Vec<(f64, f64, f64)> = (0..budget.n_paths)
        .into_par_iter()
        .map(|p| {
            let (mut fine, mut coarse_sum) = (0.0, 0.0);
            let mut held = vec![0.0; sys.control_dim()];
            let mut prev: Option<(f64, f64)> = None; // (t, left value) under `held`
            let mut coarse_left = (0.0, 0.0); // (t, value)
            let mut end = 0.0;
            simulate_path(sys, &plan, control, x, budget.seed, p as u64, |i, state, u| {
                let t = times[i];
                let mut left_here = None;
                if let Some((tp, left)) = &prev {
                    let right = integrand(state, &held)?;
                    let (wa, wb) = exp_trapezoid_weights(lambda, *tp, t);
                    fine += wa * left + wb * right;
                    if i % 2 == 0 {
                        let (wa, wb) = exp_trapezoid_weights(lambda, coarse_left.0, t);
                        coarse_sum += wa * coarse_left.1 + wb * right;
                    }
                    if held.as_slice() == u {
                        left_here = Some(right);
                    }
                }
                if i == last {
                    end = terminal(state);
                    return Ok(());
                }
                let left = match left_here {
                    Some(v) => v,
                    None => integrand(state, u)?,
                };
                if i % 2 == 0 {
                    coarse_left = (t, left);
                }
                held.copy_from_slice(u);
                prev = Some((t, left));
                Ok(())
            })?;
            Ok((fine, coarse_sum, end))
        })
        .collect::<Result<_>>()?;
    let mut out = PathIntegrals { fine: vec![], coarse: vec![], terminal: vec![] };
    for (f, c, e) in rows {
        out.fine.push(f);
        out.coarse.push(c);
        out.terminal.push(e);
    }
    Ok(out)
}

/// `|mean(I_fine − I_coarse)|/3`: Richardson estimate for a second-order rule.
fn quadrature_error(p: &PathIntegrals) -> f64 {
    let d: Vec<f64> = p.fine.iter().zip(&p.coarse).map(|(a, b)| a - b).collect();
    mean_and_se(&d).0.abs() / 3.0
}

fn digest(parts: &[String]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Discounted cost estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `e^{−λT} sup|l| / λ`, `None` for an unbounded cost.
    pub tail_bound: Option<f64>,
    pub quadrature_error: f64,
}

impl CostEstimate {
    /// Deterministic error allowance: quadrature plus tail.
    pub fn bias_bound(&self) -> f64 {
        self.quadrature_error + self.tail_bound.unwrap_or(f64::INFINITY)
    }
}

/// Horizon with `e^{−λT} sup|l|/λ ≤ tail_tol`.
pub fn horizon_for_tail(cost: &CostSpec, lambda: f64, tail_tol: f64) -> Result<f64> {
    let sup = sup_running_cost(cost).ok_or_else(|| Error::InvalidParameter("unbounded cost needs an explicit horizon".into()))?;
    Ok(((sup / (lambda * tail_tol)).ln() / lambda).max(1.0 / lambda))
}

fn sup_running_cost(cost: &CostSpec) -> Option<f64> {
    let state = cost.state.upper_bound()?.abs().max(cost.state.lower_bound().abs());
    if !cost.admissible.is_bounded() {
        return None;
    }
    let control = cost.admissible.vertices().iter().map(|u| cost.control.eval(u).abs()).fold(0.0, f64::max);
    Some(state + control)
}

/// `Ĵ(x; u) ≈ E ∫₀^T e^{−λt} l(X_t, u_t) dt`.
pub fn estimate_j<S: LinearControlSystem + ?Sized>(
    sys: &S,
    cost: &CostSpec,
    lambda: f64,
    x: &[f64],
    control: &ControlProcess,
    horizon: f64,
    budget: PathBudget,
) -> Result<CostEstimate> {
    estimate_j_hold(sys, cost, lambda, x, control, horizon, budget, 1)
}

#[allow(clippy::too_many_arguments)]
fn estimate_j_hold<S: LinearControlSystem + ?Sized>(
    sys: &S,
    cost: &CostSpec,
    lambda: f64,
    x: &[f64],
    control: &ControlProcess,
    horizon: f64,
    budget: PathBudget,
    hold: usize,
) -> Result<CostEstimate> {
    ensure_len("control dimension", cost.control_dim(), sys.control_dim())?;
    let paths = integrate_paths(sys, control, x, lambda, horizon, budget, hold, |y, u| Ok(cost.running(y, u)), |_| 0.0)?;
    let (value, std_error) = mean_and_se(&paths.fine);
    Ok(CostEstimate {
        value,
        std_error,
        tail_bound: sup_running_cost(cost).map(|s| s * (-lambda * horizon).exp() / lambda),
        quadrature_error: quadrature_error(&paths),
    })
}

/// `E[e^{−λT} f(X_T)] − f(x) − E ∫₀^T e^{−λt}[(A − λ) f + ⟨L u, D^G f⟩](X_t) dt`.
#[allow(clippy::too_many_arguments)]
pub fn dynkin_residual<S: LinearControlSystem + ?Sized>(
    sys: &S,
    f: &CylinderFunction,
    lambda: f64,
    horizon: f64,
    x: &[f64],
    control: &ControlProcess,
    budget: PathBudget,
) -> Result<VerificationReport> {
    f.check_support(sys.state_dim())?;
    let id = digest(&[
        sys.digest(),
        format!("{f:?}"),
        format!("{lambda},{horizon},{x:?}"),
        control.label(),
        format!("{budget:?}"),
    ]);
    let label = format!("{} under {}", profile_label(f), control.label());
    if f.is_constant() {
        // both sides equal c·e^{−λT}: the cancellation is analytic
        return Ok(VerificationReport::equality(CheckId::Dynkin, label, 0.0, 0.0, 0.0, id));
    }
    // f depends on y through ⟨a, y⟩ only, so the integrand is
    // ½ f''·Σ q a² + f'·(⟨y, M*a⟩ + ⟨u, L*G*a⟩) − λ f with constant coefficients
    let n = sys.state_dim();
    let a: Vec<f64> = (0..n).map(|i| f.direction.get(i).copied().unwrap_or(0.0)).collect();
    let diffusion: f64 = a.iter().zip(sys.noise_variances()).map(|(a, q)| q * a * a).sum();
    let mut basis = vec![0.0; n];
    let drift_dual: Vec<f64> = (0..n)
        .map(|i| {
            basis[i] = 1.0;
            let d = crate::numerics::dot(&sys.drift(&basis), &a);
            basis[i] = 0.0;
            d
        })
        .collect();
    let ga = sys.g_adjoint(&a);
    let mut unit = vec![0.0; sys.control_dim()];
    let control_dual: Vec<f64> = (0..sys.control_dim())
        .map(|j| {
            unit[j] = 1.0;
            let c = crate::numerics::dot(&sys.control_to_k(&unit), &ga);
            unit[j] = 0.0;
            c
        })
        .collect();
    let paths = integrate_paths(
        sys,
        control,
        x,
        lambda,
        horizon,
        budget,
        1,
        |y, u| {
            let (p0, p1, p2) = f.profile.derivatives(f.ridge(y));
            let transport = crate::numerics::dot(y, &drift_dual) + crate::numerics::dot(u, &control_dual);
            Ok(0.5 * p2 * diffusion + p1 * transport - lambda * p0)
        },
        |y| f.value(y),
    )?;
    let e = (-lambda * horizon).exp();
    let fx = f.value(x);
    let resid: Vec<f64> = paths.terminal.iter().zip(&paths.fine).map(|(ft, i)| e * ft - fx - i).collect();
    let (mean, se) = mean_and_se(&resid);
    Ok(VerificationReport::equality(CheckId::Dynkin, label, mean, se, quadrature_error(&paths), id))
}

fn profile_label(f: &CylinderFunction) -> String {
    match f.profile {
        crate::cylinder::Profile::Cosine { .. } => "trig cylinder".into(),
        crate::cylinder::Profile::Bump { .. } => "bump cylinder".into(),
        crate::cylinder::Profile::Constant(c) => format!("constant {c}"),
    }
}

/// Sup of `|strict_form_residual|/λ` over interior grid nodes (every `stride`-th), the
/// solver's own error budget and the interpolation error of `v` and of `D^G v` (through
/// the Lipschitz constant of `F₀`): the allowance for identities that treat `v` as exact.
pub fn solver_budget(model: &SpectralModel, cost: &CostSpec, v: &ValueField, stride: usize) -> Result<f64> {
    let mut worst = 0.0_f64;
    for idx in (0..v.node_count()).step_by(stride.max(1)) {
        let x = v.node_point(idx);
        match strict_form_residual(model, cost, v, &x) {
            Ok(r) => worst = worst.max(r.abs()),
            Err(Error::OutsideGrid(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let lambda = model.lambda();
    let grad_interp = (0..v.lead()).map(|c| v.interpolation_error(Some(c))).fold(0.0, f64::max);
    let interp = v.interpolation_error(None) + v.report.lipschitz_f0 * grad_interp / lambda;
    Ok(worst / lambda + v.report.error_budget + interp)
}

/// Paired check of `v(x) = E[e^{−λT} v(X_T) + ∫₀^T e^{−λt}(l + F₀ − F_{0,CV}) dt]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundamentalIdentity {
    pub residual: VerificationReport,
    /// `E ∫ e^{−λt}(F₀ − F_{0,CV}) dt`, nonpositive in truth.
    pub correction: f64,
    pub correction_se: f64,
    pub cost: f64,
}

impl FundamentalIdentity {
    /// Correction minus three standard errors is nonpositive.
    pub fn sign_consistent(&self) -> bool {
        self.correction - 3.0 * self.correction_se <= 0.0
    }
}

#[allow(clippy::too_many_arguments)]
pub fn fundamental_identity_residual(
    model: &SpectralModel,
    cost: &CostSpec,
    v: &ValueField,
    x: &[f64],
    control: &ControlProcess,
    horizon: f64,
    budget: PathBudget,
    solver_allowance: f64,
) -> Result<FundamentalIdentity> {
    let lambda = model.lambda();
    let gap = |y: &[f64], u: &[f64]| -> Result<f64> {
        let q = v.g_gradient(y);
        Ok(hamiltonian_f0(cost, model, y, &q)? - hamiltonian_fcv(cost, model, y, &q, u)?)
    };
    let corr = integrate_paths(model, control, x, lambda, horizon, budget, 1, gap, |y| v.eval(y))?;
    let run = integrate_paths(model, control, x, lambda, horizon, budget, 1, |y, u| Ok(cost.running(y, u)), |_| 0.0)?;
    let e = (-lambda * horizon).exp();
    let vx = v.eval(x);
    let resid: Vec<f64> = (0..budget.n_paths)
        .map(|p| vx - e * corr.terminal[p] - run.fine[p] - corr.fine[p])
        .collect();
    let (mean, se) = mean_and_se(&resid);
    let (c, c_se) = mean_and_se(&corr.fine);
    let tol = quadrature_error(&corr) + quadrature_error(&run) + (1.0 + e) * solver_allowance;
    let id = digest(&[model.digest(), format!("{x:?},{horizon}"), control.label(), format!("{budget:?}")]);
    Ok(FundamentalIdentity {
        residual: VerificationReport::equality(CheckId::FundamentalIdentity, control.label(), mean, se, tol, id),
        correction: c,
        correction_se: c_se,
        cost: mean_and_se(&run.fine).0,
    })
}

/// Inputs of [`verification_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationBudget {
    pub paths: PathBudget,
    /// Tail tolerance fixing the cost horizon.
    pub tail_tol: f64,
    /// Allowance for the error in `v` (see [`solver_budget`]).
    pub solver_allowance: f64,
}

/// Dominance `v(x) ≤ Ĵ(x; u)` for every candidate and optimality `v(x) = Ĵ(x; u_φ)`
/// for the feedback; all costs use common random numbers.
pub fn verification_report(
    model: &SpectralModel,
    cost: &CostSpec,
    v: &ValueField,
    x: &[f64],
    candidates: &[ControlProcess],
    feedback: &FeedbackPolicy,
    budget: VerificationBudget,
) -> Result<Vec<VerificationReport>> {
    let lambda = model.lambda();
    let horizon = horizon_for_tail(cost, lambda, budget.tail_tol)?;
    let vx = v.eval(x);
    let base = [model.digest(), format!("{x:?},{horizon}"), format!("{:?}", budget.paths)];
    let mut out = Vec::with_capacity(candidates.len() + 1);
    for c in candidates {
        let j = estimate_j(model, cost, lambda, x, c, horizon, budget.paths)?;
        let id = digest(&[base.as_slice(), &[c.label()]].concat());
        let tol = j.bias_bound() + budget.solver_allowance;
        out.push(VerificationReport::upper(CheckId::ValueDominance, c.label(), vx - j.value, j.std_error, tol, id));
    }
    let fb = ControlProcess::Feedback(feedback.clone());
    let j = estimate_j(model, cost, lambda, x, &fb, horizon, budget.paths)?;
    // first-order bias of updating the feedback only at grid nodes: compare with twice the hold
    let j2 = estimate_j_hold(model, cost, lambda, x, &fb, horizon, budget.paths, 2)?;
    let tol = j.bias_bound() + budget.solver_allowance + (j.value - j2.value).abs();
    let id = digest(&[base.as_slice(), &[fb.label()]].concat());
    out.push(VerificationReport::equality(CheckId::FeedbackOptimality, fb.label(), vx - j.value, j.std_error, tol, id));
    Ok(out)
}
