//! Running costs `l(x, u) = l₁(x) + l₂(u)` and the admissible box `Λ`.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::ControlBox;
use crate::error::{ensure_len, Error, Result};
use crate::numerics::dot;

type StateFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// State part `l₁`.
#[derive(Clone)]
pub enum StateCost {
    Constant(f64),
    /// `1 − exp(−⟨x, w⟩²)`: bounded in `[0, 1)`.
    GaussianWell { weights: Vec<f64> },
    /// `weight · x_mode²`: unbounded, for cost estimation only.
    Quadratic { mode: usize, weight: f64 },
    /// Arbitrary function of the first `support` coordinates with known bounds.
    Custom { name: String, f: Arc<StateFn>, support: usize, lower: f64, upper: Option<f64> },
}

impl fmt::Debug for StateCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::GaussianWell { weights } => write!(f, "GaussianWell({weights:?})"),
            Self::Quadratic { mode, weight } => write!(f, "Quadratic(mode {mode}, weight {weight})"),
            Self::Custom { name, support, .. } => write!(f, "Custom({name}, support {support})"),
        }
    }
}

impl StateCost {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::GaussianWell { weights } => {
                let s = dot(weights, x);
                -(-s * s).exp_m1()
            }
            Self::Quadratic { mode, weight } => weight * x[*mode] * x[*mode],
            Self::Custom { f, .. } => f(x),
        }
    }

    /// Number of leading coordinates the cost depends on.
    pub fn support(&self) -> usize {
        match self {
            Self::Constant(_) => 0,
            Self::GaussianWell { weights } => weights.iter().rposition(|w| *w != 0.0).map_or(0, |i| i + 1),
            Self::Quadratic { mode, .. } => mode + 1,
            Self::Custom { support, .. } => *support,
        }
    }

    pub fn lower_bound(&self) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::GaussianWell { .. } => 0.0,
            Self::Quadratic { weight, .. } => weight.min(0.0) * f64::INFINITY,
            Self::Custom { lower, .. } => *lower,
        }
    }

    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::GaussianWell { .. } => Some(1.0),
            Self::Quadratic { .. } => None,
            Self::Custom { upper, .. } => *upper,
        }
    }
}

/// Control part `l₂`, separable across control coordinates.
#[derive(Clone)]
pub enum ControlCost {
    Zero,
    /// `½ weight |u|²`.
    Quadratic { weight: f64 },
    /// `Σ_j f(u_j)` for a convex `f`; `superlinear` certifies coercivity.
    Separable { name: String, f: Arc<ScalarFn>, superlinear: bool },
}

impl fmt::Debug for ControlCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Quadratic { weight } => write!(f, "Quadratic({weight})"),
            Self::Separable { name, superlinear, .. } => write!(f, "Separable({name}, superlinear {superlinear})"),
        }
    }
}

impl ControlCost {
    pub fn coordinate(&self, u: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { weight } => 0.5 * weight * u * u,
            Self::Separable { f, .. } => f(u),
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        u.iter().map(|v| self.coordinate(*v)).sum()
    }

    fn is_coercive(&self) -> bool {
        match self {
            Self::Zero => false,
            Self::Quadratic { weight } => *weight > 0.0,
            Self::Separable { superlinear, .. } => *superlinear,
        }
    }

    /// Lexicographically smallest minimiser of `c u + l₂(u)` on `[lo, hi]`.
    pub fn argmin_coordinate(&self, c: f64, lo: f64, hi: f64) -> Result<f64> {
        match self {
            Self::Zero => {
                let u = if c > 0.0 || (c == 0.0) { lo } else { hi };
                if u.is_finite() {
                    Ok(u)
                } else {
                    Err(Error::UnboundedHamiltonian("linear cost on an unbounded control interval".into()))
                }
            }
            Self::Quadratic { weight } => Ok((-c / weight).clamp(lo, hi)),
            Self::Separable { f, .. } => {
                let obj = |u: f64| c * u + f(u);
                let (mut a, mut b) = (lo, hi);
                if !a.is_finite() || !b.is_finite() {
                    // expand a bracket around 0 until the convex objective turns up
                    let mut r: f64 = 1.0;
                    while r < 1e12 && (obj(r.min(hi)) < obj((r / 2.0).min(hi)) || obj((-r).max(lo)) < obj((-r / 2.0).max(lo))) {
                        r *= 2.0;
                    }
                    a = a.max(-r);
                    b = b.min(r);
                }
                Ok(golden_section(obj, a, b))
            }
        }
    }
}

/// Minimiser of a unimodal function on `[a, b]`, endpoints included.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let (lo, hi) = (a, b);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [lo, mid, hi].into_iter().fold(mid, |best, u| if f(u) < f(best) { u } else { best })
}

/// Full cost specification.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub state: StateCost,
    pub control: ControlCost,
    pub admissible: ControlBox,
}

impl CostSpec {
    pub fn new(state: StateCost, control: ControlCost, admissible: ControlBox) -> Result<Self> {
        if !admissible.is_bounded() && !control.is_coercive() {
            return Err(Error::UnboundedHamiltonian(
                "unbounded control set needs a superlinear control cost".into(),
            ));
        }
        if let ControlCost::Quadratic { weight } = control {
            if !(weight > 0.0) {
                return Err(Error::InvalidParameter("quadratic control weight must be positive".into()));
            }
        }
        Ok(Self { state, control, admissible })
    }

    pub fn control_dim(&self) -> usize {
        self.admissible.dim()
    }

    pub fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        self.state.eval(x) + self.control.eval(u)
    }

    /// Minimum of `l₂` over `Λ`.
    pub fn min_control_cost(&self) -> Result<f64> {
        let u = self.argmin_linear(&vec![0.0; self.control_dim()])?;
        Ok(self.control.eval(&u))
    }

    /// Lexicographically smallest minimiser of `⟨c, u⟩ + l₂(u)` over `Λ`.
    pub fn argmin_linear(&self, c: &[f64]) -> Result<Vec<f64>> {
        ensure_len("control covector", c.len(), self.control_dim())?;
        c.iter()
            .zip(self.admissible.lower.iter().zip(&self.admissible.upper))
            .map(|(c, (lo, hi))| self.control.argmin_coordinate(*c, *lo, *hi))
            .collect()
    }

    /// `inf l`: bounded below is a standing requirement.
    pub fn lower_bound(&self) -> Result<f64> {
        Ok(self.state.lower_bound() + self.min_control_cost()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_on_box_with_ties_picks_lower_bound() {
        let spec = CostSpec::new(StateCost::Constant(0.0), ControlCost::Zero, ControlBox::symmetric(2, 1.0).unwrap()).unwrap();
        assert_eq!(spec.argmin_linear(&[2.0, -3.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(spec.argmin_linear(&[0.0, 0.0]).unwrap(), vec![-1.0, -1.0]);
    }

    #[test]
    fn unbounded_linear_cost_rejected() {
        let r = CostSpec::new(StateCost::Constant(0.0), ControlCost::Zero, ControlBox::unbounded(1));
        assert!(matches!(r, Err(Error::UnboundedHamiltonian(_))));
    }

    #[test]
    fn separable_convex_minimiser_matches_quadratic() {
        let sep = ControlCost::Separable { name: "half-square".into(), f: Arc::new(|u| 0.5 * u * u), superlinear: true };
        for (c, lo, hi) in [(0.7, -1.0, 1.0), (-3.0, -1.0, 1.0), (2.5, f64::NEG_INFINITY, f64::INFINITY)] {
            let want = ControlCost::Quadratic { weight: 1.0 }.argmin_coordinate(c, lo, hi).unwrap();
            let got = sep.argmin_coordinate(c, lo, hi).unwrap();
            assert!((got - want).abs() < 1e-6, "{c}: {got} vs {want}");
        }
    }

    #[test]
    fn gaussian_well_bounds_and_support() {
        let l = StateCost::GaussianWell { weights: vec![1.0, 0.5, 0.0] };
        assert_eq!(l.support(), 2);
        assert_eq!(l.eval(&[0.0, 0.0, 9.0]), 0.0);
        assert!(l.eval(&[3.0, 0.0, 0.0]) < 1.0);
    }
}
