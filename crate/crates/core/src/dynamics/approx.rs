//! Simple-control approximation of sampled control paths.

use crate::dynamics::control::SimpleControl;
use crate::error::{ensure_len, Error, Result};
use crate::quadrature::gauss_legendre;

/// How a sampled control path is read between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Linear between consecutive samples.
    Linear,
    /// Sample held until the next one (already càdlàg).
    Hold,
}

/// Control path known at increasing sample times starting at 0, defined on
/// `[0, times.last()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledControl {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub interpolation: Interpolation,
}

impl SampledControl {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, interpolation: Interpolation) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::TimeGrid("empty control sample grid".into()));
        }
        ensure_len("sampled control values", values.len(), times.len())?;
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::TimeGrid("sample times must start at 0 and increase strictly".into()));
        }
        let m = values[0].len();
        for v in &values {
            ensure_len("sampled control value", v.len(), m)?;
        }
        Ok(Self { times, values, interpolation })
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// Value at `t`, clamped to the sampled range.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        if self.interpolation == Interpolation::Hold || i + 1 >= self.times.len() {
            return self.values[i].clone();
        }
        let (a, b) = (self.times[i], self.times[i + 1]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        self.values[i].iter().zip(&self.values[i + 1]).map(|(x, y)| x + w * (y - x)).collect()
    }
}

/// Partition of `[0, T]` for the approximation.
#[derive(Debug, Clone, PartialEq)]
pub enum Mesh {
    Uniform(f64),
    Points(Vec<f64>),
}

/// Left-endpoint simple approximation on `mesh` and its `L^p` distance to `control`.
pub fn approximate_by_simple(control: &SampledControl, mesh: &Mesh, p: f64) -> Result<(SimpleControl, f64)> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("L^p distance needs p >= 1, got {p}")));
    }
    let horizon = control.horizon();
    let mut pts = match mesh {
        Mesh::Uniform(h) => {
            if !(*h > 0.0) {
                return Err(Error::InvalidParameter("mesh width must be positive".into()));
            }
            let n = (horizon / h).ceil().max(1.0) as usize;
            (0..n).map(|i| i as f64 * h).filter(|t| *t < horizon).collect()
        }
        Mesh::Points(v) => v.iter().copied().filter(|t| *t >= 0.0 && *t < horizon.max(f64::MIN_POSITIVE)).collect::<Vec<_>>(),
    };
    if pts.first() != Some(&0.0) {
        pts.insert(0, 0.0);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let values: Vec<Vec<f64>> = pts.iter().map(|&t| control.value_at(t)).collect();
    let simple = SimpleControl::new(pts.clone(), values)?;

    let mut breaks: Vec<f64> = pts.iter().chain(&control.times).copied().filter(|t| *t <= horizon).collect();
    breaks.push(horizon);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let gl = gauss_legendre(16)?;
    let mut integral = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let held = simple.value_at(a).to_vec();
        // input is affine on (a, b); evaluate at interior points only (càdlàg ends)
        integral += 0.5 * (b - a)
            * gl.iter()
                .map(|(z, wt)| {
                    let t = a + 0.5 * (b - a) * (z + 1.0);
                    let u = control.value_at(t);
                    let d = u.iter().zip(&held).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    wt * d.powf(p)
                })
                .sum::<f64>();
    }
    Ok((simple, integral.powf(1.0 / p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_input_reproduced_exactly() {
        let c = SampledControl::new(vec![0.0, 0.3, 0.7, 1.0], vec![vec![1.0], vec![-2.0], vec![0.5], vec![0.5]], Interpolation::Hold).unwrap();
        let (s, d) = approximate_by_simple(&c, &Mesh::Points(vec![0.0, 0.3, 0.7]), 2.0).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(s.jump_times(), &[0.0, 0.3, 0.7]);
        assert_eq!(s.values(), &[vec![1.0], vec![-2.0], vec![0.5]]);
    }

    #[test]
    fn ramp_distance_matches_exact_integral() {
        let ramp = SampledControl::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]], Interpolation::Linear).unwrap();
        let mut last = f64::INFINITY;
        for n in [1, 2, 4, 8, 16] {
            let (_, d) = approximate_by_simple(&ramp, &Mesh::Uniform(1.0 / n as f64), 2.0).unwrap();
            // Σ_cells ∫₀^{1/n} s² ds = 1/(3n²)
            let exact = 1.0 / (n as f64 * 3f64.sqrt());
            assert!((d - exact).abs() < 1e-14, "n = {n}: {d} vs {exact}");
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(SampledControl::new(vec![], vec![], Interpolation::Linear).is_err());
    }
}
