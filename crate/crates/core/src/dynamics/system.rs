//! Linear controlled systems with additive Gaussian noise and their exact
//! one-step transitions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SpectralModel;
use crate::numerics::{decay_integral, variance_factor};

/// `dX = (M X + G L u) dt + σ dW` in Euclidean coordinates.
pub trait LinearControlSystem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Dimension of the space `K` on which `L u` and `D^G` live.
    fn k_dim(&self) -> usize;
    /// Uncontrolled drift `M x`.
    fn drift(&self, x: &[f64]) -> Vec<f64>;
    /// Diagonal of `σσ*`.
    fn noise_variances(&self) -> Vec<f64>;
    fn control_to_k(&self, u: &[f64]) -> Vec<f64>;
    /// `G* p` for a state-space covector `p`: the G-directional part of a gradient.
    fn g_adjoint(&self, grad: &[f64]) -> Vec<f64>;
    /// Exact law of one step of length `dt` with constant `k`.
    fn transition(&self, dt: f64) -> Result<Transition>;
    /// Stable identifier of the system data.
    fn digest(&self) -> String;
}

/// `X' = Φ X + Ψ k + noise`, the noise given through a factor of its covariance.
#[derive(Debug, Clone)]
pub enum Transition {
    Diagonal { decay: Vec<f64>, gain: Vec<f64>, std: Vec<f64> },
    Dense { phi: DMatrix<f64>, forcing: DMatrix<f64>, noise: DMatrix<f64> },
}

impl Transition {
    /// Number of standard normals consumed by one step.
    pub fn noise_rank(&self) -> usize {
        match self {
            Self::Diagonal { std, .. } => std.len(),
            Self::Dense { noise, .. } => noise.ncols(),
        }
    }

    pub fn step(&self, x: &[f64], k: &[f64], z: &[f64], out: &mut [f64]) {
        match self {
            Self::Diagonal { decay, gain, std } => {
                for i in 0..out.len() {
                    out[i] = decay[i] * x[i] + gain[i] * k[i] + std[i] * z[i];
                }
            }
            Self::Dense { phi, forcing, noise } => {
                let next = phi * DVector::from_column_slice(x)
                    + forcing * DVector::from_column_slice(k)
                    + noise * DVector::from_column_slice(z);
                out.copy_from_slice(next.as_slice());
            }
        }
    }

    /// Mean part of [`Transition::step`].
    pub fn mean_step(&self, x: &[f64], k: &[f64], out: &mut [f64]) {
        let z = vec![0.0; self.noise_rank()];
        self.step(x, k, &z, out);
    }
}

/// Van Loan construction of the exact transition of `dX = (M X + B k) dt + σ dW`.
///
/// `noise_var` is the diagonal of `σσ*`; the returned factor keeps only
/// eigen-directions carrying more than `1e-14` of the total variance.
pub fn dense_transition(m: &DMatrix<f64>, b: &DMatrix<f64>, noise_var: &[f64], dt: f64) -> Result<Transition> {
    if !(dt > 0.0) {
        return Err(Error::TimeGrid(format!("step length must be positive, got {dt}")));
    }
    let n = m.nrows();
    let r = b.ncols();
    // exp([[M, B], [0, 0]] dt) = [[Φ, Ψ], [0, I]]
    let mut aug = DMatrix::zeros(n + r, n + r);
    aug.view_mut((0, 0), (n, n)).copy_from(&(m * dt));
    aug.view_mut((0, n), (n, r)).copy_from(&(b * dt));
    let e = aug.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let forcing = e.view((0, n), (n, r)).into_owned();
    // exp([[-M, Q], [0, M^T]] dt) = [[·, F12], [0, F22]], cov = F22^T F12
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(noise_var));
    let mut vl = DMatrix::zeros(2 * n, 2 * n);
    vl.view_mut((0, 0), (n, n)).copy_from(&(-m * dt));
    vl.view_mut((0, n), (n, n)).copy_from(&(q * dt));
    vl.view_mut((n, n), (n, n)).copy_from(&(m.transpose() * dt));
    let f = vl.exp();
    let f12 = f.view((0, n), (n, n)).into_owned();
    let f22 = f.view((n, n), (n, n)).into_owned();
    let cov = f22.transpose() * f12;
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = cov.symmetric_eigen();
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-14 * total.max(f64::MIN_POSITIVE)).collect();
    let mut noise = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        noise.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    Ok(Transition::Dense { phi, forcing, noise })
}

impl LinearControlSystem for SpectralModel {
    fn state_dim(&self) -> usize {
        self.n_modes()
    }

    fn control_dim(&self) -> usize {
        SpectralModel::control_dim(self)
    }

    fn k_dim(&self) -> usize {
        self.n_modes()
    }

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mu()).map(|(x, m)| -m * x).collect()
    }

    fn noise_variances(&self) -> Vec<f64> {
        self.q().to_vec()
    }

    fn control_to_k(&self, u: &[f64]) -> Vec<f64> {
        SpectralModel::control_to_k(self, u)
    }

    fn g_adjoint(&self, grad: &[f64]) -> Vec<f64> {
        grad.iter().zip(self.g()).map(|(p, g)| p * g).collect()
    }

    fn transition(&self, dt: f64) -> Result<Transition> {
        if !(dt > 0.0) {
            return Err(Error::TimeGrid(format!("step length must be positive, got {dt}")));
        }
        let (mut decay, mut gain, mut std) = (vec![], vec![], vec![]);
        for k in 0..self.n_modes() {
            let mu = self.mu()[k];
            decay.push((-mu * dt).exp());
            gain.push(self.g()[k] * decay_integral(mu, dt));
            std.push((self.q()[k] * variance_factor(mu, dt)).sqrt());
        }
        Ok(Transition::Diagonal { decay, gain, std })
    }

    fn digest(&self) -> String {
        SpectralModel::digest(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::heat_1d;

    #[test]
    fn dense_transition_reproduces_diagonal_one() {
        let model = heat_1d(4, 0.3, 0.05);
        let n = model.n_modes();
        let m = DMatrix::from_diagonal(&DVector::from_iterator(n, model.mu().iter().map(|v| -v)));
        let b = DMatrix::from_diagonal(&DVector::from_column_slice(model.g()));
        let Transition::Dense { phi, forcing, noise } = dense_transition(&m, &b, model.q(), 0.3).unwrap() else {
            unreachable!()
        };
        let Transition::Diagonal { decay, gain, std } = model.transition(0.3).unwrap() else { unreachable!() };
        let cov = &noise * noise.transpose();
        for i in 0..n {
            assert!((phi[(i, i)] - decay[i]).abs() < 1e-13);
            assert!((forcing[(i, i)] - gain[i]).abs() < 1e-13);
            assert!((cov[(i, i)] - std[i] * std[i]).abs() < 1e-13);
        }
    }
}
