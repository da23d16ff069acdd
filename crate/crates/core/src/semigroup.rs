//! Transition semigroup `P_t^{(k)}`, its generator on cylinder functions, the
//! resolvent and the G-gradient of `P_t f`.

use rayon::prelude::*;

use crate::conditions::check_smoothing;
use crate::cylinder::{CylinderFunction, Profile};
use crate::dynamics::law::{transition_law, GaussianLaw};
use crate::error::{ensure_len, Error, Result};
use crate::hjb::field::ValueField;
use crate::model::SpectralModel;
use crate::numerics::{decay_integral, dot, mean_and_se};
use crate::quadrature::{gauss_hermite_normal, LaplaceRule, LaplaceSpec};
use crate::rng::NormalStream;

/// How `E f(X_t)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    MonteCarlo { samples: usize, seed: u64 },
    GaussHermite { order: usize },
    /// Characteristic-function formula; trigonometric and constant cylinders only.
    ClosedForm,
}

/// Point estimate with its Monte-Carlo standard error (0 for deterministic schemes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }
}

/// Functions the semigroup can act on.
#[derive(Debug, Clone, Copy)]
pub enum Observable<'a> {
    Cylinder(&'a CylinderFunction),
    Field(&'a ValueField),
}

impl<'a> From<&'a CylinderFunction> for Observable<'a> {
    fn from(f: &'a CylinderFunction) -> Self {
        Self::Cylinder(f)
    }
}

impl<'a> From<&'a ValueField> for Observable<'a> {
    fn from(f: &'a ValueField) -> Self {
        Self::Field(f)
    }
}

impl Observable<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Cylinder(f) => f.value(x),
            Self::Field(v) => v.eval(x),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            Self::Cylinder(f) => f.profile.sup_abs(),
            Self::Field(v) => v.sup_abs(),
        }
    }
}

/// Extra constant drift of `P^{(k)}`.
#[derive(Debug, Clone, Copy)]
pub enum Drift<'a> {
    Zero,
    /// `k ∈ K` directly.
    Modes(&'a [f64]),
    /// A control value `u`, mapped to `k = L u`.
    Control(&'a [f64]),
}

impl Drift<'_> {
    pub fn resolve(&self, model: &SpectralModel) -> Result<Vec<f64>> {
        match *self {
            Self::Zero => Ok(vec![0.0; model.n_modes()]),
            Self::Modes(k) => {
                ensure_len("mode drift", k.len(), model.n_modes())?;
                Ok(k.to_vec())
            }
            Self::Control(u) => {
                ensure_len("control drift", u.len(), model.control_dim())?;
                Ok(model.control_to_k(u))
            }
        }
    }
}

/// Mean and variance of `⟨a, X⟩` under `law`.
fn ridge_moments(law: &GaussianLaw, a: &[f64]) -> (f64, f64) {
    let m = dot(a, &law.mean);
    let v = a.iter().zip(&law.cov_diag).map(|(a, c)| a * a * c).sum();
    (m, v)
}

/// `P_t^{(k)} f` for trigonometric or constant `f`, again a cylinder function:
/// direction `e^{tA*} a`, phase shifted by the drift, amplitude damped by `e^{-V/2}`.
pub fn propagate(model: &SpectralModel, f: &CylinderFunction, k: &[f64], t: f64) -> Result<CylinderFunction> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    f.check_support(model.n_modes())?;
    match f.profile {
        Profile::Constant(_) => Ok(f.clone()),
        Profile::Cosine { amplitude, phase } => {
            let mut dir = Vec::with_capacity(f.direction.len());
            let (mut shift, mut var) = (0.0, 0.0);
            for (i, &a) in f.direction.iter().enumerate().take(model.n_modes()) {
                let mu = model.mu()[i];
                dir.push(a * (-mu * t).exp());
                shift += a * model.g()[i] * k[i] * decay_integral(mu, t);
                var += a * a * model.q()[i] * crate::numerics::variance_factor(mu, t);
            }
            Ok(CylinderFunction::trig(dir, amplitude * (-0.5 * var).exp(), phase + shift))
        }
        Profile::Bump { .. } => Err(Error::UnsupportedScheme("closed form exists for trigonometric cylinders only".into())),
    }
}

/// `P_t^{(k)}[f](x) = E f(X^{(k)}(t; x))`.
pub fn apply_semigroup<'a>(
    model: &SpectralModel,
    drift: Drift<'_>,
    f: impl Into<Observable<'a>>,
    t: f64,
    x: &[f64],
    scheme: Scheme,
) -> Result<Estimate> {
    let f = f.into();
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    ensure_len("state", x.len(), model.n_modes())?;
    if let Observable::Cylinder(c) = f {
        c.check_support(model.n_modes())?;
    }
    let k = drift.resolve(model)?;
    if let (Scheme::ClosedForm, Observable::Cylinder(c)) = (scheme, f) {
        return Ok(Estimate::exact(propagate(model, c, &k, t)?.value(x)));
    }
    if let Scheme::ClosedForm = scheme {
        return Err(Error::UnsupportedScheme("closed form requested for a non-trigonometric function".into()));
    }
    if t == 0.0 {
        return Ok(Estimate::exact(f.eval(x)));
    }
    let law = transition_law(model, x, &k, t)?;
    expectation(&law, f, scheme)
}

/// `E f(Y)` for `Y ~ law`.
pub fn expectation(law: &GaussianLaw, f: Observable<'_>, scheme: Scheme) -> Result<Estimate> {
    if let Observable::Cylinder(CylinderFunction { profile: Profile::Constant(c), .. }) = f {
        return Ok(Estimate::exact(*c));
    }
    match scheme {
        Scheme::ClosedForm => Err(Error::UnsupportedScheme("closed form needs the model".into())),
        Scheme::GaussHermite { order } => {
            let rule = gauss_hermite_normal(order)?;
            Ok(Estimate::exact(match f {
                Observable::Cylinder(c) => {
                    let (m, v) = ridge_moments(law, &c.direction);
                    let sd = v.sqrt();
                    rule.integrate(|z| c.profile.value(m + sd * z))
                }
                Observable::Field(field) => tensor_hermite(law, field, &rule),
            }))
        }
        Scheme::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidParameter("Monte Carlo needs at least 2 samples".into()));
            }
            let n = law.mean.len();
            let sd: Vec<f64> = law.cov_diag.iter().map(|v| v.sqrt()).collect();
            let chunk = (100_000 / n.max(1)).clamp(1, 4096);
            let sums: Vec<(f64, f64)> = (0..samples.div_ceil(chunk))
                .into_par_iter()
                .map(|c| {
                    let mut rng = NormalStream::new(seed, c as u64, 0);
                    let mut y = vec![0.0; n];
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for _ in c * chunk..((c + 1) * chunk).min(samples) {
                        for i in 0..n {
                            y[i] = law.mean[i] + sd[i] * rng.next();
                        }
                        let v = f.eval(&y);
                        s1 += v;
                        s2 += v * v;
                    }
                    (s1, s2)
                })
                .collect();
            let (s1, s2) = sums.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
            let nn = samples as f64;
            let mean = s1 / nn;
            let var = ((s2 - nn * mean * mean) / (nn - 1.0)).max(0.0);
            Ok(Estimate { value: mean, std_error: (var / nn).sqrt() })
        }
    }
}

/// Tensor Gauss–Hermite over the grid modes of `field`; other modes do not enter.
fn tensor_hermite(law: &GaussianLaw, field: &ValueField, rule: &crate::quadrature::Rule) -> f64 {
    let lead = field.lead();
    let n = rule.len();
    let mut point = law.mean.clone();
    let mut total = 0.0;
    let count = n.pow(lead as u32);
    for flat in 0..count {
        let mut rem = flat;
        let mut w = 1.0;
        for i in (0..lead).rev() {
            let j = rem % n;
            rem /= n;
            point[i] = law.mean[i] + law.cov_diag[i].sqrt() * rule.nodes[j];
            w *= rule.weights[j];
        }
        total += w * field.eval(&point);
    }
    total
}

/// `A^{(k)} f(x)` for a cylinder `f`.
pub fn apply_generator(model: &SpectralModel, drift: Drift<'_>, f: &CylinderFunction, x: &[f64]) -> Result<f64> {
    ensure_len("state", x.len(), model.n_modes())?;
    let k = drift.resolve(model)?;
    f.generator(model, x, &k)
}

/// Resolvent value with its error accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `|R_full − R_half|`: difference against the rule with half the panels.
    pub quadrature_error: f64,
    /// `sup|g| e^{-λT}/λ` for the truncated horizon `T`.
    pub tail_bound: f64,
}

impl ResolventEstimate {
    pub fn error_budget(&self) -> f64 {
        self.quadrature_error + self.tail_bound
    }
}

/// `R_λ^{(k)}[g](x) = ∫₀^∞ e^{-λs} P_s^{(k)}[g](x) ds`.
pub fn resolvent<'a>(
    model: &SpectralModel,
    lambda: f64,
    drift: Drift<'_>,
    g: impl Into<Observable<'a>>,
    x: &[f64],
    laplace: LaplaceSpec,
    scheme: Scheme,
) -> Result<ResolventEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("resolvent needs lambda > 0, got {lambda}")));
    }
    let g = g.into();
    let run = |spec: LaplaceSpec| -> Result<(f64, f64, LaplaceRule)> {
        let rule = LaplaceRule::new(lambda, spec)?;
        let (mut v, mut var) = (0.0, 0.0);
        for (i, (s, w)) in rule.iter().enumerate() {
            let sch = match scheme {
                Scheme::MonteCarlo { samples, seed } => Scheme::MonteCarlo { samples, seed: seed.wrapping_add(i as u64 * 0x9E37_79B9) },
                other => other,
            };
            let e = apply_semigroup(model, drift, g, s, x, sch)?;
            v += w * e.value;
            var += (w * e.std_error).powi(2);
        }
        Ok((v, var.sqrt(), rule))
    };
    let (value, std_error, rule) = run(laplace)?;
    let quadrature_error = if laplace.panels >= 2 {
        let (coarse, _, _) = run(LaplaceSpec { panels: laplace.panels / 2, ..laplace })?;
        (value - coarse).abs()
    } else {
        0.0
    };
    Ok(ResolventEstimate { value, std_error, quadrature_error, tail_bound: rule.tail_bound(g.sup_abs()) })
}

/// The resolvent quadrature of a trigonometric `g` as an explicit weighted sum
/// of cylinder functions `Σ w_s P_s g`.
pub fn resolvent_expansion(
    model: &SpectralModel,
    lambda: f64,
    drift: Drift<'_>,
    g: &CylinderFunction,
    laplace: LaplaceSpec,
) -> Result<Vec<(f64, CylinderFunction)>> {
    let k = drift.resolve(model)?;
    LaplaceRule::new(lambda, laplace)?
        .iter()
        .map(|(s, w)| Ok((w, propagate(model, g, &k, s)?)))
        .collect()
}

/// Monte-Carlo G-gradient with per-component standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// `D^G P_t f(x)` by Gaussian integration by parts:
/// component `k` is `E[f(X) e^{-μ_k t} g_k (X_k − m_k) / Q_t(k)]`, sampled with antithetic pairs.
pub fn g_gradient_semigroup<'a>(
    model: &SpectralModel,
    f: impl Into<Observable<'a>>,
    t: f64,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Err(Error::ZeroTime);
    }
    let audit = check_smoothing(model)?;
    if !audit.satisfied {
        return Err(Error::AuditFailed(format!("smoothing condition: {}", audit.detail)));
    }
    let f = f.into();
    ensure_len("state", x.len(), model.n_modes())?;
    let pairs = n_samples / 2;
    if pairs < 2 {
        return Err(Error::InvalidParameter("need at least 4 samples".into()));
    }
    let n = model.n_modes();
    let law = transition_law(model, x, &vec![0.0; n], t)?;
    let sd: Vec<f64> = law.cov_diag.iter().map(|v| v.sqrt()).collect();
    let weight: Vec<f64> = (0..n).map(|k| (-model.mu()[k] * t).exp() * model.g()[k] / sd[k]).collect();
    let chunk = 2048;
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut rng = NormalStream::new(seed, c as u64, 0);
            let (mut z, mut yp, mut ym) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
            for _ in c * chunk..((c + 1) * chunk).min(pairs) {
                rng.fill(&mut z);
                for i in 0..n {
                    yp[i] = law.mean[i] + sd[i] * z[i];
                    ym[i] = law.mean[i] - sd[i] * z[i];
                }
                let half_diff = 0.5 * (f.eval(&yp) - f.eval(&ym));
                for i in 0..n {
                    let y = half_diff * weight[i] * z[i];
                    s1[i] += y;
                    s2[i] += y * y;
                }
            }
            (s1, s2)
        })
        .collect();
    let np = pairs as f64;
    let mut mean = vec![0.0; n];
    let mut std_error = vec![0.0; n];
    for i in 0..n {
        let s1: f64 = parts.iter().map(|p| p.0[i]).sum();
        let s2: f64 = parts.iter().map(|p| p.1[i]).sum();
        mean[i] = s1 / np;
        std_error[i] = (((s2 - np * mean[i] * mean[i]) / (np - 1.0)).max(0.0) / np).sqrt();
    }
    Ok(GradientEstimate { mean, std_error })
}

/// Closed-form `D^G P_t f(x)` for trigonometric or constant `f`.
pub fn g_gradient_closed_form(model: &SpectralModel, f: &CylinderFunction, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let p = propagate(model, f, &vec![0.0; model.n_modes()], t)?;
    Ok(p.g_gradient(model, x))
}

/// `|P_{s+t} f(x) − P_s[P_t f](x)|`.
pub fn semigroup_property_audit(
    model: &SpectralModel,
    f: &CylinderFunction,
    s: f64,
    t: f64,
    x: &[f64],
    scheme: Scheme,
) -> Result<Estimate> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::NegativeTime(s.min(t)));
    }
    ensure_len("state", x.len(), model.n_modes())?;
    let zero = vec![0.0; model.n_modes()];
    match scheme {
        Scheme::ClosedForm => {
            let lhs = propagate(model, f, &zero, s + t)?.value(x);
            let rhs = propagate(model, &propagate(model, f, &zero, t)?, &zero, s)?.value(x);
            Ok(Estimate::exact((lhs - rhs).abs()))
        }
        Scheme::GaussHermite { order } => {
            let rule = gauss_hermite_normal(order)?;
            let ridge_at = |time: f64, y: &[f64]| -> Result<(f64, f64)> {
                Ok(ridge_moments(&transition_law(model, y, &zero, time)?, &f.direction))
            };
            let (m, v) = ridge_at(s + t, x)?;
            let lhs = rule.integrate(|z| f.profile.value(m + v.sqrt() * z));
            // P_t f(y) depends on y through ⟨e^{tA*}a, y⟩ only
            let a_t: Vec<f64> = f.direction.iter().enumerate().map(|(i, a)| a * (-model.mu()[i] * t).exp()).collect();
            let (_, v_t) = ridge_at(t, &zero)?;
            let (m_s, v_s) = ridge_moments(&transition_law(model, x, &zero, s)?, &a_t);
            let rhs = rule.integrate(|z1| {
                let r = m_s + v_s.sqrt() * z1;
                rule.integrate(|z2| f.profile.value(r + v_t.sqrt() * z2))
            });
            Ok(Estimate::exact((lhs - rhs).abs()))
        }
        Scheme::MonteCarlo { samples, seed } => {
            let lhs = apply_semigroup(model, Drift::Zero, f, s + t, x, scheme)?;
            let n = model.n_modes();
            let inner = 4;
            let law_s = transition_law(model, x, &zero, s)?;
            let vals: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = NormalStream::new(seed.wrapping_add(1), i as u64, 0);
                    let y: Vec<f64> = (0..n).map(|k| law_s.mean[k] + law_s.cov_diag[k].sqrt() * rng.next()).collect();
                    let law_t = transition_law(model, &y, &zero, t)?;
                    let mut acc = 0.0;
                    for _ in 0..inner {
                        let z: Vec<f64> = (0..n).map(|k| law_t.mean[k] + law_t.cov_diag[k].sqrt() * rng.next()).collect();
                        acc += f.value(&z);
                    }
                    Ok(acc / inner as f64)
                })
                .collect::<Result<_>>()?;
            let (rhs, se) = mean_and_se(&vals);
            Ok(Estimate { value: (lhs.value - rhs).abs(), std_error: lhs.std_error.hypot(se) })
        }
    }
}
