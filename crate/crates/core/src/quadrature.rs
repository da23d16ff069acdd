//! Quadrature rules: Gauss–Legendre panels, Gauss–Hermite for standard normal
//! expectations, and a Laplace-transform rule for `∫₀^∞ e^{-λs} F(s) ds`.

use std::num::NonZeroUsize;

use gauss_quad::{hermite::GaussHermite, legendre::GaussLegendre};

use crate::error::{Error, Result};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

fn order(n: usize) -> Result<NonZeroUsize> {
    NonZeroUsize::new(n).ok_or_else(|| Error::InvalidParameter("quadrature order must be positive".into()))
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<Rule> {
    let rule = GaussLegendre::new(order(n)?);
    let (nodes, weights) = rule.as_node_weight_pairs().iter().copied().unzip();
    Ok(Rule { nodes, weights })
}

/// Rule for `E[f(Z)]`, `Z ~ N(0, 1)`. Weights sum to one; nodes are symmetric.
pub fn gauss_hermite_normal(n: usize) -> Result<Rule> {
    let rule = GaussHermite::new(order(n)?);
    let s = std::f64::consts::SQRT_2;
    let c = std::f64::consts::PI.sqrt();
    let (nodes, weights) = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (s * x, w / c))
        .unzip();
    Ok(Rule { nodes, weights })
}

/// Composite Gauss–Legendre on `[a, b]` with `panels` equal panels.
pub fn composite_legendre(a: f64, b: f64, panels: usize, n: usize) -> Result<Rule> {
    if panels == 0 {
        return Err(Error::InvalidParameter("at least one panel required".into()));
    }
    let base = gauss_legendre(n)?;
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * n);
    let mut weights = Vec::with_capacity(panels * n);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (x, w) in base.iter() {
            nodes.push(lo + 0.5 * h * (x + 1.0));
            weights.push(0.5 * h * w);
        }
    }
    Ok(Rule { nodes, weights })
}

/// Discretisation of `∫₀^T e^{-λs} F(s) ds` with the discount folded into the weights.
///
/// Substituting `s = r²` removes integrable `s^{-1/2}` singularities of `F` at the
/// origin; panels are uniform in `r`, i.e. graded in `s`.
#[derive(Debug, Clone)]
pub struct LaplaceRule {
    pub lambda: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Knobs for [`LaplaceRule::new`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LaplaceSpec {
    pub panels: usize,
    pub order: usize,
    /// Relative tail tolerance: `e^{-λT} <= tail_tol`.
    pub tail_tol: f64,
}

impl Default for LaplaceSpec {
    fn default() -> Self {
        Self { panels: 12, order: 8, tail_tol: 1e-12 }
    }
}

impl LaplaceRule {
    pub fn new(lambda: f64, spec: LaplaceSpec) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("discount must be positive, got {lambda}")));
        }
        if !(spec.tail_tol > 0.0 && spec.tail_tol < 1.0) {
            return Err(Error::InvalidParameter("tail tolerance must lie in (0, 1)".into()));
        }
        let horizon = (-spec.tail_tol.ln() / lambda).max(10.0 / lambda);
        let r = composite_legendre(0.0, horizon.sqrt(), spec.panels, spec.order)?;
        let (times, weights) = r
            .iter()
            .map(|(r, w)| {
                let s = r * r;
                (s, w * 2.0 * r * (-lambda * s).exp())
            })
            .unzip();
        Ok(Self { lambda, horizon, times, weights })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.weights.iter().copied())
    }

    /// `sup|F| · e^{-λT}/λ` for a bounded integrand.
    pub fn tail_bound(&self, sup_abs: f64) -> f64 {
        sup_abs * (-self.lambda * self.horizon).exp() / self.lambda
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(s, w)| w * f(s)).sum()
    }
}
