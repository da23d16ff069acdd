//! Differential-form check `(λ − A) v = F₀(x, D^G v)` for a solved field.

use crate::error::{Error, Result};
use crate::hjb::cost::CostSpec;
use crate::hjb::field::ValueField;
use crate::hjb::hamiltonian::hamiltonian_f0;
use crate::model::SpectralModel;

/// `lim_{h→0} (P_h v(x) − v(x))/h` for the local second-order reconstruction of `v`
/// at `x`: first derivatives from `D^G v / g`, curvature from central differences of
/// them one grid step apart. Only the grid modes enter since `v` depends on nothing else.
pub fn generator_estimate(model: &SpectralModel, v: &ValueField, x: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut y = x.to_vec();
    for (i, axis) in v.axes().iter().enumerate() {
        let (mu, q, g) = (model.mu()[i], model.q()[i], model.g()[i]);
        let step = axis.step();
        let slope_at = |p: &[f64]| if g != 0.0 { v.g_gradient(p)[i] / g } else { f64::NAN };
        let (d1, d2) = if g != 0.0 {
            y[i] = x[i] + step;
            let up = slope_at(&y);
            y[i] = x[i] - step;
            let down = slope_at(&y);
            (slope_at(x), (up - down) / (2.0 * step))
        } else {
            y[i] = x[i] + step;
            let up = v.eval(&y);
            y[i] = x[i] - step;
            let down = v.eval(&y);
            ((up - down) / (2.0 * step), (up - 2.0 * v.eval(x) + down) / (step * step))
        };
        y[i] = x[i];
        total += 0.5 * q * d2 - mu * x[i] * d1;
    }
    Ok(total)
}

/// `λ v(x) − A v(x) − F₀(x, D^G v(x))` at an interior grid point.
pub fn strict_form_residual(model: &SpectralModel, cost: &CostSpec, v: &ValueField, x: &[f64]) -> Result<f64> {
    crate::error::ensure_len("state", x.len(), model.n_modes())?;
    let interior = v.axes().iter().zip(x).all(|(a, xi)| *xi >= a.lo + a.step() * (1.0 - 1e-9) && *xi <= a.hi - a.step() * (1.0 - 1e-9));
    if !interior {
        return Err(Error::OutsideGrid(format!("{:?} is not interior to the grid", &x[..v.lead()])));
    }
    let av = generator_estimate(model, v, x)?;
    let f0 = hamiltonian_f0(cost, model, x, &v.g_gradient(x))?;
    Ok(model.lambda() * v.eval(x) - av - f0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ControlBox;
    use crate::hjb::cost::{ControlCost, StateCost};
    use crate::hjb::field::GridAxis;
    use crate::hjb::solver::{solve_mild_hjb, SolverConfig};
    use crate::testutil::spectral;

    #[test]
    fn constant_field_has_zero_residual() {
        let model = spectral(&[0.0, 1.0], &[1.0, 1.0], 1).with_lambda(2.0).unwrap();
        let cost = CostSpec::new(StateCost::Constant(3.0), ControlCost::Zero, ControlBox::symmetric(1, 0.0).unwrap()).unwrap();
        let v = solve_mild_hjb(&model, &cost, &SolverConfig { grid_points: 9, ..Default::default() }).unwrap();
        let r = strict_form_residual(&model, &cost, &v, &[0.1, -0.2]).unwrap();
        assert!(r.abs() < 1e-8, "{r}");
    }

    #[test]
    fn quadratic_field_generator_is_recovered() {
        // v = x₀² on a grid: A v = q₀ − 2 μ₀ x₀², exact for quadratics
        let model = spectral(&[0.5], &[1.0], 1);
        let axis = GridAxis::symmetric(6.0, 41).unwrap();
        let values: Vec<f64> = (0..41).map(|i| axis.node(i).powi(2)).collect();
        let grads: Vec<f64> = (0..41).map(|i| 2.0 * axis.node(i)).collect();
        let v = ValueField::new(vec![axis], 1, values, grads).unwrap();
        for x in [0.0, 0.7, -1.1] {
            let av = generator_estimate(&model, &v, &[x]).unwrap();
            let want = 1.0 - x * x;
            assert!((av - want).abs() < 1e-12, "{x}: {av} vs {want}");
        }
    }

    #[test]
    fn outside_grid_is_rejected() {
        let model = spectral(&[0.0], &[1.0], 1).with_lambda(4.0).unwrap();
        let cost = CostSpec::new(StateCost::Constant(1.0), ControlCost::Zero, ControlBox::symmetric(1, 0.0).unwrap()).unwrap();
        let config = SolverConfig { lead_modes: 1, grid_points: 9, ..Default::default() };
        let v = solve_mild_hjb(&model, &cost, &config).unwrap();
        assert!(matches!(strict_form_residual(&model, &cost, &v, &[100.0]), Err(Error::OutsideGrid(_))));
    }
}
