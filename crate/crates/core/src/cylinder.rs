//! Ridge-type cylinder functions `f(x) = p(⟨a, x⟩)` with analytic derivatives.

use crate::dynamics::LinearControlSystem;
use crate::error::{Error, Result};
use crate::numerics::dot;

/// One-dimensional profile `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `amplitude · cos(s + phase)`
    Cosine { amplitude: f64, phase: f64 },
    /// `amplitude · exp(-(s - center)²/2)`
    Bump { amplitude: f64, center: f64 },
    Constant(f64),
}

impl Profile {
    /// `(p, p', p'')` at `s`.
    pub fn derivatives(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Self::Cosine { amplitude, phase } => {
                let (sn, cs) = (s + phase).sin_cos();
                (amplitude * cs, -amplitude * sn, -amplitude * cs)
            }
            Self::Bump { amplitude, center } => {
                let d = s - center;
                let p = amplitude * (-0.5 * d * d).exp();
                (p, -d * p, (d * d - 1.0) * p)
            }
            Self::Constant(c) => (c, 0.0, 0.0),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.derivatives(s).0
    }

    pub fn sup_abs(&self) -> f64 {
        match *self {
            Self::Cosine { amplitude, .. } | Self::Bump { amplitude, .. } => amplitude.abs(),
            Self::Constant(c) => c.abs(),
        }
    }
}

/// `f(x) = profile(⟨direction, x⟩)`; coordinates beyond `direction.len()` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    pub direction: Vec<f64>,
    pub profile: Profile,
}

impl CylinderFunction {
    pub fn trig(direction: Vec<f64>, amplitude: f64, phase: f64) -> Self {
        Self { direction, profile: Profile::Cosine { amplitude, phase } }
    }

    pub fn bump(direction: Vec<f64>, amplitude: f64, center: f64) -> Self {
        Self { direction, profile: Profile::Bump { amplitude, center } }
    }

    pub fn constant(c: f64) -> Self {
        Self { direction: Vec::new(), profile: Profile::Constant(c) }
    }

    pub fn is_trig(&self) -> bool {
        matches!(self.profile, Profile::Cosine { .. })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.profile, Profile::Constant(_))
    }

    /// Errors when `direction` has weight on coordinates past `dim`.
    pub fn check_support(&self, dim: usize) -> Result<()> {
        match self.direction.iter().skip(dim).position(|a| *a != 0.0) {
            Some(i) => Err(Error::DimensionMismatch(format!(
                "cylinder direction has weight on coordinate {} beyond the truncation {dim}",
                dim + i
            ))),
            None => Ok(()),
        }
    }

    pub fn ridge(&self, x: &[f64]) -> f64 {
        dot(&self.direction, x)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile.value(self.ridge(x))
    }

    /// Full gradient `p'(s) a`, padded to `dim`.
    pub fn gradient(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let (_, p1, _) = self.profile.derivatives(self.ridge(x));
        (0..dim).map(|i| p1 * self.direction.get(i).copied().unwrap_or(0.0)).collect()
    }

    /// `D^G f(x) = G* ∇f(x)`.
    pub fn g_gradient<S: LinearControlSystem + ?Sized>(&self, sys: &S, x: &[f64]) -> Vec<f64> {
        sys.g_adjoint(&self.gradient(x, sys.state_dim()))
    }

    /// `A^{(k)} f(x) = ½ Σ q_i ∂_ii f + ⟨M x, ∇f⟩ + ⟨D^G f(x), k⟩`.
    pub fn generator<S: LinearControlSystem + ?Sized>(&self, sys: &S, x: &[f64], k: &[f64]) -> Result<f64> {
        self.check_support(sys.state_dim())?;
        if self.is_constant() {
            return Ok(0.0);
        }
        let (_, p1, p2) = self.profile.derivatives(self.ridge(x));
        let q = sys.noise_variances();
        let diffusion: f64 = self.direction.iter().zip(&q).map(|(a, q)| q * a * a).sum();
        let drift = dot(&sys.drift(x), &self.direction);
        let shift = if k.iter().any(|v| *v != 0.0) { dot(&self.g_gradient(sys, x), k) } else { 0.0 };
        Ok(0.5 * p2 * diffusion + p1 * drift + shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::heat_1d;

    #[test]
    fn derivatives_match_finite_differences() {
        for p in [
            Profile::Cosine { amplitude: 1.3, phase: 0.4 },
            Profile::Bump { amplitude: -0.7, center: 0.2 },
        ] {
            for s in [-1.1, 0.0, 0.35, 2.0] {
                let h = 1e-5;
                let (v, d1, d2) = p.derivatives(s);
                let fd1 = (p.value(s + h) - p.value(s - h)) / (2.0 * h);
                let fd2 = (p.value(s + h) - 2.0 * v + p.value(s - h)) / (h * h);
                assert!((d1 - fd1).abs() < 1e-8);
                assert!((d2 - fd2).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn generator_of_cosine_matches_symbolic_form() {
        let m = heat_1d(5, 0.0, 0.05);
        let a = vec![0.3, -0.5, 0.2, 0.0, 0.1];
        let f = CylinderFunction::trig(a.clone(), 1.0, 0.0);
        let x = [0.4, 0.1, -0.3, 0.2, 0.05];
        let s = dot(&a, &x);
        let ax: f64 = (0..5).map(|k| -m.mu()[k] * x[k] * a[k]).sum();
        let qa: f64 = (0..5).map(|k| m.q()[k] * a[k] * a[k]).sum();
        let want = -s.sin() * ax - 0.5 * s.cos() * qa;
        assert!((f.generator(&m, &x, &[0.0; 5]).unwrap() - want).abs() < 1e-14);
        assert_eq!(CylinderFunction::constant(2.0).generator(&m, &x, &[1.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn generator_matches_second_order_finite_differences() {
        let m = heat_1d(3, 0.0, 0.05);
        let f = CylinderFunction::bump(vec![0.4, 0.7, -0.2], 1.0, 0.1);
        let x = [0.2, -0.1, 0.3];
        let h = 1e-4;
        let mut fd = 0.0;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let d1 = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            let d2 = (f.value(&xp) - 2.0 * f.value(&x) + f.value(&xm)) / (h * h);
            fd += 0.5 * m.q()[i] * d2 - m.mu()[i] * x[i] * d1;
        }
        assert!((f.generator(&m, &x, &[0.0; 3]).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn support_outside_truncation_rejected() {
        let m = heat_1d(2, 0.0, 0.05);
        let f = CylinderFunction::trig(vec![1.0, 0.0, 0.5], 1.0, 0.0);
        assert!(f.generator(&m, &[0.0, 0.0], &[0.0, 0.0]).is_err());
        let g = CylinderFunction::trig(vec![1.0, 0.0, 0.0], 1.0, 0.0);
        assert!(g.generator(&m, &[0.0, 0.0], &[0.0, 0.0]).is_ok());
    }
}
