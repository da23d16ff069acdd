//! Scalar kernels of the diagonal Ornstein–Uhlenbeck flow, stable at `mu * t -> 0`.

/// Below this `|mu * t|` the closed forms switch to their Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-8;

/// `(1 - e^{-mu t}) / mu`, equal to `t` in the limit `mu -> 0`.
pub fn decay_integral(mu: f64, t: f64) -> f64 {
    let z = mu * t;
    if z.abs() < SERIES_THRESHOLD {
        t * (1.0 - 0.5 * z + z * z / 6.0)
    } else {
        -(-z).exp_m1() / mu
    }
}

/// `(1 - e^{-2 mu t}) / (2 mu)`: variance of a unit-noise mode after time `t`.
pub fn variance_factor(mu: f64, t: f64) -> f64 {
    decay_integral(2.0 * mu, t)
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `n` points geometrically spaced on `[lo, hi]`, both ends included.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Ordinary least squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit `y ≈ c x^e` on positive data; returns `(e, c)`.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    let (e, lc) = linear_fit(&lx, &ly)?;
    Some((e, lc.exp()))
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_integral_matches_closed_form_and_limit() {
        assert!((decay_integral(1.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(decay_integral(0.0, 2.5), 2.5);
        // both branches agree with the exact value around the switch
        for mu in [0.99e-8, 1.01e-8] {
            let exact = -(-mu as f64).exp_m1() / mu;
            assert!((decay_integral(mu, 1.0) - exact).abs() < 1e-16);
        }
    }

    #[test]
    fn variance_factor_limit_and_saturation() {
        assert_eq!(variance_factor(0.0, 3.0), 3.0);
        assert!((variance_factor(2.0, 50.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let x: Vec<f64> = (1..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|k| 3.0 * k.powf(-0.7)).collect();
        let (e, c) = power_law_fit(&x, &y).unwrap();
        assert!((e + 0.7).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_and_se_of_constant_is_exact() {
        let (m, se) = mean_and_se(&[2.0; 10]);
        assert_eq!((m, se), (2.0, 0.0));
    }
}
