//! Closed-form Gaussian transition law of the diagonal model.

use crate::dynamics::control::SimpleControl;
use crate::error::{ensure_len, Error, Result};
use crate::model::SpectralModel;
use crate::numerics::{decay_integral, variance_factor};

/// Mean and diagonal covariance of `X(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

/// `Q_t = diag(σ_k² (1 - e^{-2μ_k t}) / (2μ_k))`, equal to `σ_k² t` when `μ_k = 0`.
pub fn covariance_qt(model: &SpectralModel, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(model.mu().iter().zip(model.q()).map(|(&mu, &q)| q * variance_factor(mu, t)).collect())
}

/// Law at time `t` under the constant mode-space drift `k` (i.e. `G k` in the dynamics).
pub fn transition_law(model: &SpectralModel, x: &[f64], k: &[f64], t: f64) -> Result<GaussianLaw> {
    ensure_len("state", x.len(), model.n_modes())?;
    ensure_len("drift", k.len(), model.n_modes())?;
    let cov_diag = covariance_qt(model, t)?;
    let mean = (0..model.n_modes())
        .map(|i| {
            let mu = model.mu()[i];
            (-mu * t).exp() * x[i] + model.g()[i] * k[i] * decay_integral(mu, t)
        })
        .collect();
    Ok(GaussianLaw { mean, cov_diag })
}

/// Exact mean `e^{tA}x + ∫₀ᵗ e^{(t-s)A} G L u(s) ds` under a simple control.
pub fn controlled_mean(model: &SpectralModel, x: &[f64], control: &SimpleControl, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    ensure_len("state", x.len(), model.n_modes())?;
    ensure_len("control", control.control_dim(), model.control_dim())?;
    let mut mean: Vec<f64> = x.iter().zip(model.mu()).map(|(x, mu)| (-mu * t).exp() * x).collect();
    for (a, b, u) in control.intervals() {
        if a >= t {
            break;
        }
        let b = b.min(t);
        let lu = model.control_to_k(u);
        for k in 0..model.n_modes() {
            let mu = model.mu()[k];
            // ∫_a^b e^{-μ(t-s)} ds = e^{-μ(t-b)} (1 - e^{-μ(b-a)})/μ
            mean[k] += model.g()[k] * lu[k] * (-mu * (t - b)).exp() * decay_integral(mu, b - a);
        }
    }
    Ok(mean)
}

pub fn controlled_law(model: &SpectralModel, x: &[f64], control: &SimpleControl, t: f64) -> Result<GaussianLaw> {
    Ok(GaussianLaw { mean: controlled_mean(model, x, control, t)?, cov_diag: covariance_qt(model, t)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite_legendre;
    use crate::testutil::{heat_1d, spectral};

    #[test]
    fn covariance_examples() {
        let one = spectral(&[1.0], &[1.0], 1);
        let oracle = composite_legendre(0.0, 0.5, 8, 10).unwrap().integrate(|s| (-2.0 * s).exp());
        let q = covariance_qt(&one, 0.5).unwrap()[0];
        assert!((q - oracle).abs() < 1e-15);
        assert!((q - 0.3160603).abs() < 1e-7);
        let flat = spectral(&[0.0], &[2f64.sqrt()], 1);
        assert!((covariance_qt(&flat, 3.0).unwrap()[0] - 6.0).abs() < 1e-14);
        assert!(covariance_qt(&one, 0.0).unwrap().iter().all(|v| *v == 0.0));
        assert!(matches!(covariance_qt(&one, -1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn controlled_mean_examples() {
        let heat = heat_1d(8, 0.0, 0.05);
        let x: Vec<f64> = (0..8).map(|k| 0.1 * k as f64).collect();
        let zero = SimpleControl::constant(vec![0.0, 0.0]);
        let m = controlled_mean(&heat, &x, &zero, 0.7).unwrap();
        for k in 0..8 {
            assert_eq!(m[k], (-heat.mu()[k] * 0.7).exp() * x[k]);
        }
        let flat = spectral(&[0.0], &[1.0], 1);
        let c = SimpleControl::constant(vec![1.5]);
        assert!((controlled_mean(&flat, &[0.0], &c, 2.0).unwrap()[0] - 3.0).abs() < 1e-15);
        let one = spectral(&[1.0], &[1.0], 1);
        let oracle = composite_legendre(0.0, 1.0, 8, 10).unwrap().integrate(|s| (-(1.0 - s)).exp());
        let got = controlled_mean(&one, &[0.0], &SimpleControl::constant(vec![1.0]), 1.0).unwrap()[0];
        assert!((got - oracle).abs() < 1e-15 && (got - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn controlled_mean_matches_quadrature_for_jumps() {
        let heat = heat_1d(6, 0.0, 0.05);
        let c = SimpleControl::new(vec![0.0, 0.3, 0.8], vec![vec![1.0, -0.5], vec![-1.0, 0.2], vec![0.4, 0.4]]).unwrap();
        let t = 1.1;
        let got = controlled_mean(&heat, &[0.0; 6], &c, t).unwrap();
        for k in 0..6 {
            let mut oracle = 0.0;
            for (a, b) in [(0.0, 0.3), (0.3, 0.8), (0.8, t)] {
                let u = c.value_at(a);
                let lu: f64 = heat.control_to_k(u)[k];
                let mu = heat.mu()[k];
                oracle += composite_legendre(a, b, 16, 10)
                    .unwrap()
                    .integrate(|s| (-mu * (t - s)).exp() * heat.g()[k] * lu);
            }
            assert!((got[k] - oracle).abs() < 1e-13, "mode {k}: {} vs {oracle}", got[k]);
        }
    }
}
