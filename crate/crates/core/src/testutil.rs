//! Model fixtures shared by unit tests.

use crate::model::{ModelSpec, SpectralModel};

/// Generic model with `g ≡ 1` and a single control acting on every mode.
pub fn spectral(mu: &[f64], sigma: &[f64], d: usize) -> SpectralModel {
    let n = mu.len();
    SpectralModel::build(ModelSpec {
        n_modes: n,
        mu: mu.to_vec(),
        sigma_diag: sigma.to_vec(),
        g_diag: vec![1.0; n],
        control_map: vec![vec![1.0]; n],
        beta: 0.0,
        a_g: 0.0,
        c_g: 1.0,
        lambda: 1.0,
        p: 2.0,
        spatial_dim: d,
    })
    .unwrap()
}

pub trait WithG {
    fn with_g(&self, g: &[f64]) -> SpectralModel;
}

impl WithG for SpectralModel {
    fn with_g(&self, g: &[f64]) -> SpectralModel {
        let gmax = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        SpectralModel::build(ModelSpec {
            g_diag: g.to_vec(),
            beta: 0.49,
            c_g: gmax,
            p: 3.0,
            ..self.spec().clone()
        })
        .unwrap()
    }
}

/// One-dimensional heat model with Neumann boundary inputs (δ = 1).
pub fn heat_1d(n: usize, theta: f64, eps: f64) -> SpectralModel {
    let mu: Vec<f64> = (0..n).map(|k| (k * k) as f64).collect();
    let pi = std::f64::consts::PI;
    let basis = |k: usize, xi: f64| {
        if k == 0 { 1.0 / pi.sqrt() } else { (2.0 / pi).sqrt() * (k as f64 * xi).cos() }
    };
    SpectralModel::build(ModelSpec {
        n_modes: n,
        g_diag: mu.iter().map(|m| (1.0 + m).powf(0.25 + eps)).collect(),
        sigma_diag: (0..n).map(|k| if k == 0 { 1.0 } else { (k as f64).powf(-theta) }).collect(),
        control_map: (0..n)
            .map(|k| {
                let s = (1.0 + mu[k]).powf(-0.25 - eps);
                vec![s * basis(k, 0.0), s * basis(k, pi)]
            })
            .collect(),
        mu,
        beta: 0.25 + eps,
        a_g: 0.0,
        c_g: 1.0,
        lambda: 1.0,
        p: 1.0 / (0.75 - eps) + 1.0,
        spatial_dim: 1,
    })
    .unwrap()
}

/// The `n` smallest eigenvalues `i² + j²` of the Neumann Laplacian on the square.
pub fn square_eigenvalues(n: usize) -> Vec<f64> {
    let r = (n as f64).sqrt() as usize + 3;
    let mut v: Vec<f64> = (0..r * 2).flat_map(|i| (0..r * 2).map(move |j| (i * i + j * j) as f64)).collect();
    v.sort_by(f64::total_cmp);
    v.truncate(n);
    v
}
