//! Property tests for the invariants each module promises.

use proptest::prelude::*;

use mildhjb_core::apps::{boundary_input, build_delay_instance, build_neumann_instance, cosine_mode, neumann_map_1d, DelayParams, NeumannParams};
use mildhjb_core::conditions::{audit_model, check_noise_trace, gamma_norm, theta_window};
use mildhjb_core::dynamics::{covariance_qt, sample_paths, transition_law, uniform_grid, Transition};
use mildhjb_core::hjb::{
    hamiltonian_f0, hamiltonian_fcv, lipschitz_constant, minimizer, solve_mild_hjb, ControlCost, CostSpec, SolverConfig,
    StateCost,
};
use mildhjb_core::semigroup::{apply_generator, propagate, semigroup_property_audit};
use mildhjb_core::verify::{dynkin_residual, exp_trapezoid_weights, PathBudget};
use mildhjb_core::{
    ControlBox, ControlProcess, CylinderFunction, Drift, Error, LinearControlSystem, ModelSpec, Scheme, SimpleControl,
    SpectralModel,
};

/// Diagonal model with sorted `μ`, `g ≡ 1` and a dense random control map.
fn model_from(mut mu: Vec<f64>, sigma: Vec<f64>, control: Vec<Vec<f64>>, lambda: f64) -> SpectralModel {
    mu.sort_by(f64::total_cmp);
    let n = mu.len();
    SpectralModel::build(ModelSpec {
        n_modes: n,
        mu,
        sigma_diag: sigma,
        g_diag: vec![1.0; n],
        control_map: control,
        beta: 0.0,
        a_g: 0.0,
        c_g: 1.0,
        lambda,
        p: 2.0,
        spatial_dim: 1,
    })
    .unwrap()
}

fn arb_model(n: std::ops::RangeInclusive<usize>, m: usize) -> impl Strategy<Value = SpectralModel> {
    n.prop_flat_map(move |n| {
        (
            prop::collection::vec(0.0..20.0f64, n),
            prop::collection::vec(0.2..2.0f64, n),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, m), n),
            0.5..20.0f64,
        )
    })
    .prop_map(|(mu, sigma, control, lambda)| model_from(mu, sigma, control, lambda))
}

fn heat(n: usize, delta: f64, epsilon: f64, theta: f64) -> SpectralModel {
    build_neumann_instance(&NeumannParams { n_modes: n, delta, epsilon, theta, allow_override: true, ..Default::default() })
        .unwrap()
        .model
}

fn boxed_cost(weights: Vec<f64>, m: usize, radius: f64, w: f64) -> CostSpec {
    CostSpec::new(StateCost::GaussianWell { weights }, ControlCost::Quadratic { weight: w }, ControlBox::symmetric(m, radius).unwrap())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn admissibility_exponent_is_enforced(beta in 0.0..0.95f64, p in 1.0..25.0f64) {
        let spec = ModelSpec { beta, p, c_g: 10.0, ..heat(3, 1.0, 0.05, 0.0).spec().clone() };
        let built = SpectralModel::build(spec);
        if p > 1.0 / (1.0 - beta) {
            let exponent_error = matches!(built, Err(Error::AdmissibilityExponent { .. }));
            prop_assert!(!exponent_error);
        } else {
            let rejected = matches!(built, Err(Error::AdmissibilityExponent { .. }));
            prop_assert!(rejected);
        }
    }

    #[test]
    fn unsorted_eigenvalues_are_rejected(mu in prop::collection::vec(0.0..10.0f64, 2..6)) {
        let n = mu.len();
        let spec = ModelSpec { n_modes: n, mu: mu.clone(), sigma_diag: vec![1.0; n], g_diag: vec![1.0; n], control_map: vec![vec![1.0]; n],
            beta: 0.0, a_g: 0.0, c_g: 1.0, lambda: 1.0, p: 2.0, spatial_dim: 1 };
        let sorted = mu.windows(2).all(|w| w[0] <= w[1]);
        prop_assert_eq!(SpectralModel::build(spec).is_ok(), sorted);
    }

    #[test]
    fn satisfied_reports_carry_finite_witnesses(theta in 0.0..0.24f64, eps in 0.01..0.2f64, gamma in 0.01..0.45f64) {
        for r in audit_model(&heat(8, 1.0, eps, theta), gamma).unwrap() {
            prop_assert!(!r.satisfied || r.witness.is_finite(), "{:?}", r);
        }
    }

    #[test]
    fn theta_window_is_empty_exactly_from_three_dimensions(d in 1usize..40) {
        prop_assert_eq!(theta_window(d).unwrap().is_empty(), d >= 3);
    }

    #[test]
    fn noise_trace_verdict_is_monotone_in_theta(t0 in 0.0..1.0f64, dt in 0.0..1.0f64, d in 1usize..3, gamma in 0.01..0.49f64) {
        let mk = |theta: f64| {
            let base = heat(16, 1.0, 0.05, 0.0);
            let sigma = (0..16).map(|k| if k == 0 { 1.0 } else { (k as f64).powf(-theta) }).collect();
            SpectralModel::build(ModelSpec { sigma_diag: sigma, spatial_dim: d, ..base.spec().clone() }).unwrap()
        };
        let low = check_noise_trace(&mk(t0), gamma).unwrap().satisfied;
        let high = check_noise_trace(&mk(t0 + dt), gamma).unwrap().satisfied;
        prop_assert!(!low || high);
    }

    #[test]
    fn gamma_norm_decreases_beyond_slowest_relaxation(model in arb_model(1..=6, 1), s in 0.0..5.0f64, ds in 0.0..5.0f64) {
        let mu_min = model.mu()[0];
        prop_assume!(mu_min > 0.05);
        let t0 = 1.0 / mu_min + s;
        let a = gamma_norm(&model, t0).unwrap();
        let b = gamma_norm(&model, t0 + ds).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12), "{a} -> {b}");
    }

    #[test]
    fn covariance_grows_to_stationary_variance(model in arb_model(1..=6, 1), t in 0.0..3.0f64, dt in 0.0..3.0f64) {
        let a = covariance_qt(&model, t).unwrap();
        let b = covariance_qt(&model, t + dt).unwrap();
        let far = covariance_qt(&model, 1e4).unwrap();
        for i in 0..model.n_modes() {
            prop_assert!(a[i] >= 0.0 && b[i] >= a[i] * (1.0 - 1e-14));
            let mu = model.mu()[i];
            if mu > 0.01 {
                let stationary = model.q()[i] / (2.0 * mu);
                prop_assert!((far[i] - stationary).abs() <= 1e-12 * stationary);
                prop_assert!(b[i] <= stationary * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn two_step_law_equals_one_step_law(model in arb_model(1..=5, 2), s in 0.0..1.0f64, t in 0.0..1.0f64,
                                        x in prop::collection::vec(-2.0..2.0f64, 5), k in prop::collection::vec(-1.0..1.0f64, 5)) {
        let n = model.n_modes();
        let (x, k) = (&x[..n], &k[..n]);
        let direct = transition_law(&model, x, k, s + t).unwrap();
        let mid = transition_law(&model, x, k, s).unwrap();
        let then = transition_law(&model, &mid.mean, k, t).unwrap();
        for i in 0..n {
            let decay = (-2.0 * model.mu()[i] * t).exp();
            let cov = decay * mid.cov_diag[i] + then.cov_diag[i];
            prop_assert!((then.mean[i] - direct.mean[i]).abs() <= 1e-12 * (1.0 + direct.mean[i].abs()));
            prop_assert!((cov - direct.cov_diag[i]).abs() <= 1e-12 * (1e-300 + direct.cov_diag[i]));
        }
    }

    #[test]
    fn simple_controls_need_increasing_jumps(times in prop::collection::vec(0.0..2.0f64, 1..5)) {
        let mut t = times.clone();
        t[0] = 0.0;
        let values = vec![vec![0.0]; t.len()];
        let increasing = t.windows(2).all(|w| w[0] < w[1]);
        prop_assert_eq!(SimpleControl::new(t, values).is_ok(), increasing);
    }

    #[test]
    fn closed_form_semigroup_is_positive_and_contractive(model in arb_model(2..=5, 1), t in 0.0..2.0f64,
                                                         a in prop::collection::vec(-1.5..1.5f64, 5), phase in 0.0..6.3f64,
                                                         x in prop::collection::vec(-2.0..2.0f64, 5)) {
        let n = model.n_modes();
        // f = 1 + cos(⟨a, x⟩ + φ) ≥ 0 with |f|∞ = 2
        let f = CylinderFunction::trig(a[..n].to_vec(), 1.0, phase);
        let pf = propagate(&model, &f, &vec![0.0; n], t).unwrap().value(&x[..n]);
        prop_assert!(1.0 + pf >= -1e-15);
        prop_assert!((1.0 + pf).abs() <= 2.0 + 1e-15);
    }

    #[test]
    fn generator_splits_off_the_drift(model in arb_model(1..=6, 2), a in prop::collection::vec(-1.0..1.0f64, 6),
                                      x in prop::collection::vec(-2.0..2.0f64, 6), k in prop::collection::vec(-2.0..2.0f64, 6),
                                      bump in any::<bool>()) {
        let n = model.n_modes();
        let f = if bump { CylinderFunction::bump(a[..n].to_vec(), 1.3, 0.2) } else { CylinderFunction::trig(a[..n].to_vec(), 0.7, 0.4) };
        let (x, k) = (&x[..n], &k[..n]);
        let with = apply_generator(&model, Drift::Modes(k), &f, x).unwrap();
        let without = apply_generator(&model, Drift::Zero, &f, x).unwrap();
        let shift: f64 = f.g_gradient(&model, x).iter().zip(k).map(|(d, k)| d * k).sum();
        prop_assert!((with - without - shift).abs() <= 1e-13 * (1.0 + with.abs() + without.abs()));
    }

    #[test]
    fn semigroup_time_derivative_is_the_generator(model in arb_model(1..=4, 1), t in 0.05..1.0f64,
                                                  a in prop::collection::vec(-1.0..1.0f64, 4), x in prop::collection::vec(-1.0..1.0f64, 4)) {
        let n = model.n_modes();
        let f = CylinderFunction::trig(a[..n].to_vec(), 1.0, 0.3);
        let zero = vec![0.0; n];
        let at = |s: f64| propagate(&model, &f, &zero, s).unwrap().value(&x[..n]);
        let h = 1e-4 / (1.0 + model.mu()[n - 1]);
        let dt = (at(t + h) - at(t - h)) / (2.0 * h);
        let apf = apply_generator(&model, Drift::Zero, &propagate(&model, &f, &zero, t).unwrap(), &x[..n]).unwrap();
        prop_assert!((dt - apf).abs() <= 1e-3 * apf.abs().max(1e-3), "{dt} vs {apf}");
    }

    #[test]
    fn closed_form_composition_is_exact(model in arb_model(1..=5, 1), s in 0.0..1.0f64, t in 0.0..1.0f64,
                                        a in prop::collection::vec(-1.0..1.0f64, 5), x in prop::collection::vec(-1.0..1.0f64, 5)) {
        let n = model.n_modes();
        let f = CylinderFunction::trig(a[..n].to_vec(), 1.0, 0.1);
        let r = semigroup_property_audit(&model, &f, s, t, &x[..n], Scheme::ClosedForm).unwrap();
        prop_assert!(r.value < 1e-12);
    }

    #[test]
    fn hamiltonian_is_concave_lipschitz_and_below_fcv(model in arb_model(2..=4, 2), q1 in prop::collection::vec(-3.0..3.0f64, 4),
                                                       q2 in prop::collection::vec(-3.0..3.0f64, 4), u in prop::collection::vec(-1.0..1.0f64, 2),
                                                       radius in 0.1..2.0f64, w in 0.1..3.0f64) {
        let n = model.n_modes();
        let cost = boxed_cost(vec![1.0], 2, radius, w);
        let x = vec![0.3; n];
        let (q1, q2) = (&q1[..n], &q2[..n]);
        let mid: Vec<f64> = q1.iter().zip(q2).map(|(a, b)| 0.5 * (a + b)).collect();
        let f = |q: &[f64]| hamiltonian_f0(&cost, &model, &x, q).unwrap();
        prop_assert!(f(&mid) >= 0.5 * (f(q1) + f(q2)) - 1e-12);
        let c = lipschitz_constant(&cost, &model, n);
        let dist = q1.iter().zip(q2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((f(q1) - f(q2)).abs() <= c * dist * (1.0 + 1e-9) + 1e-12);
        let u: Vec<f64> = u.iter().map(|v| v * radius).collect();
        prop_assert!(f(q1) <= hamiltonian_fcv(&cost, &model, &x, q1, &u).unwrap() + 1e-12);
    }

    #[test]
    fn argmin_ignores_the_state_cost(model in arb_model(1..=4, 2), q in prop::collection::vec(-3.0..3.0f64, 4), shift in -5.0..5.0f64) {
        let n = model.n_modes();
        let control = ControlCost::Quadratic { weight: 1.5 };
        let admissible = ControlBox::symmetric(2, 1.0).unwrap();
        let a = CostSpec::new(StateCost::GaussianWell { weights: vec![1.0] }, control.clone(), admissible.clone()).unwrap();
        let b = CostSpec::new(StateCost::Constant(shift), control, admissible).unwrap();
        prop_assert_eq!(minimizer(&a, &model, &q[..n]).unwrap(), minimizer(&b, &model, &q[..n]).unwrap());
    }

    #[test]
    fn dynkin_residual_of_constants_is_exactly_zero(model in arb_model(1..=4, 1), c in -5.0..5.0f64, lambda in 0.1..10.0f64,
                                                    horizon in 0.1..3.0f64, u in -1.0..1.0f64) {
        let x = vec![0.1; model.n_modes()];
        let control = ControlProcess::Simple(SimpleControl::constant(vec![u]));
        let r = dynkin_residual(&model, &CylinderFunction::constant(c), lambda, horizon, &x, &control, PathBudget::default()).unwrap();
        prop_assert_eq!(r.estimate, 0.0);
        prop_assert!(r.pass);
    }

    #[test]
    fn exponential_trapezoid_integrates_affine_functions(lambda in 0.0..30.0f64, a in 0.0..2.0f64, len in 1e-6..1.0f64,
                                                          c0 in -2.0..2.0f64, c1 in -2.0..2.0f64) {
        prop_assume!(lambda > 0.0);
        let b = a + len;
        let (wa, wb) = exp_trapezoid_weights(lambda, a, b);
        let got = wa * (c0 + c1 * a) + wb * (c0 + c1 * b);
        // ∫ₐᵇ e^{−λt}(c₀ + c₁t) dt in closed form
        let prim = |t: f64| -(-lambda * t).exp() * (c0 + c1 * t) / lambda - c1 * (-lambda * t).exp() / (lambda * lambda);
        let want = prim(b) - prim(a);
        prop_assert!((got - want).abs() <= 1e-10 * (want.abs() + len * (-lambda * a).exp()), "{got} vs {want}");
    }

    #[test]
    fn boundary_input_is_independent_of_delta_and_epsilon(delta in 0.1..5.0f64, eps in 0.001..0.7f64,
                                                         a0 in -2.0..2.0f64, a1 in -2.0..2.0f64) {
        let model = build_neumann_instance(&NeumannParams { n_modes: 10, delta, epsilon: eps, allow_override: true, ..Default::default() })
            .unwrap()
            .model;
        for (k, v) in boundary_input(&model, &[a0, a1]).iter().enumerate() {
            let want = a0 * cosine_mode(k, 0.0) + a1 * cosine_mode(k, std::f64::consts::PI);
            let scale = (a0 * cosine_mode(k, 0.0)).abs() + (a1 * cosine_mode(k, std::f64::consts::PI)).abs();
            prop_assert!((v - want).abs() <= 8.0 * f64::EPSILON * scale, "mode {k}: {v} vs {want}");
        }
    }

    #[test]
    fn neumann_map_is_linear(delta in 0.1..5.0f64, a in prop::collection::vec(-2.0..2.0f64, 4), s in -3.0..3.0f64) {
        let x = neumann_map_1d(delta, [a[0], a[1]], 12).unwrap();
        let y = neumann_map_1d(delta, [a[2], a[3]], 12).unwrap();
        let z = neumann_map_1d(delta, [a[0] + s * a[2], a[1] + s * a[3]], 12).unwrap();
        for i in 0..12 {
            prop_assert!((z[i] - x[i] - s * y[i]).abs() <= 1e-12 * (1.0 + z[i].abs()));
        }
    }

    #[test]
    fn delay_transport_conserves_mass(n_d in 2usize..40, delay in 0.2..3.0f64, dt in 0.001..0.5f64,
                                      b1 in prop::collection::vec(-1.0..1.0f64, 40), y0 in -1.0..1.0f64) {
        let params = DelayParams { a0: 0.0, b0: 1.0, sigma0: 1.0, delay, b1: b1[..n_d].to_vec() };
        let inst = build_delay_instance(params).unwrap();
        let h = inst.cell_width();
        let x = inst.initial_state(y0, |s| (3.0 * s).cos());
        let mut next = vec![0.0; x.len()];
        inst.transition(dt).unwrap().mean_step(&x, &[0.0], &mut next);
        let total = |s: &[f64]| s[0] + h * s[1..].iter().sum::<f64>();
        prop_assert!((total(&next) - total(&x)).abs() <= 1e-11 * (1.0 + total(&x).abs()));
        let b = inst.direction();
        let norm = b[0] * b[0] + h * b[1..].iter().map(|v| v * v).sum::<f64>();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solved_values_respect_cost_bounds(mu in 0.0..3.0f64, lambda in 8.0..20.0f64, w in 0.5..2.0f64, radius in 0.2..1.0f64) {
        let model = model_from(vec![mu, mu + 1.0], vec![0.5, 0.5], vec![vec![1.0], vec![0.5]], lambda);
        let cost = boxed_cost(vec![w], 1, radius, 1.0);
        let config = SolverConfig { lead_modes: 1, grid_points: 11, estimate_grid_error: false, ..Default::default() };
        let v = match solve_mild_hjb(&model, &cost, &config) {
            Ok(v) => v,
            Err(Error::NotContractive { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        // l₁ ∈ [0, 1) and the zero control costs nothing beyond l₁
        for &value in v.node_values() {
            prop_assert!(value >= -1e-12 && value <= 1.0 / lambda + 1e-12, "{value}");
        }
    }

    #[test]
    fn paths_are_bit_for_bit_reproducible(seed in any::<u64>(), model in arb_model(1..=3, 1)) {
        let grid = uniform_grid(0.5, 0.1).unwrap();
        let x = vec![0.2; model.n_modes()];
        let control = ControlProcess::Simple(SimpleControl::new(vec![0.0, 0.23], vec![vec![1.0], vec![-0.5]]).unwrap());
        let a = sample_paths(&model, &x, &control, &grid, 7, seed).unwrap();
        let b = sample_paths(&model, &x, &control, &grid, 7, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn diagonal_transition_has_full_noise_rank() {
    let model = heat(4, 1.0, 0.05, 0.0);
    let tr: Transition = model.transition(0.1).unwrap();
    assert_eq!(tr.noise_rank(), 4);
}
