//! Path simulation with exact Gaussian steps and per-(path, step) random streams.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::control::ControlProcess;
use crate::dynamics::system::{LinearControlSystem, Transition};
use crate::error::{ensure_len, Error, Result};
use crate::rng::NormalStream;

/// Grid must start at 0 and increase strictly.
pub fn validate_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::TimeGrid("at least two grid points required".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::TimeGrid("grid must start at t = 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::TimeGrid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `0, h, 2h, ..., T` with `ceil(T/h)` equal steps.
pub fn uniform_grid(horizon: f64, max_step: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && max_step > 0.0) {
        return Err(Error::TimeGrid("horizon and step must be positive".into()));
    }
    let n = (horizon / max_step).ceil().max(1.0) as usize;
    Ok((0..=n).map(|i| horizon * i as f64 / n as f64).collect())
}

/// Sorted union of `grid` and the points of `extra` strictly inside it.
pub fn merge_times(grid: &[f64], extra: &[f64]) -> Vec<f64> {
    let end = *grid.last().unwrap_or(&0.0);
    let mut all: Vec<f64> = grid.iter().copied().chain(extra.iter().copied().filter(|&t| t > 0.0 && t < end)).collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs().max(1.0));
    all
}

/// Grid, control-update schedule and cached transitions of a simulation.
#[derive(Debug, Clone)]
pub struct SimPlan {
    pub times: Vec<f64>,
    /// Control is re-evaluated at node `i` iff `update[i]` (always at node 0).
    pub update: Vec<bool>,
    step_kind: Vec<usize>,
    table: Vec<Transition>,
}

impl SimPlan {
    pub fn new<S: LinearControlSystem + ?Sized>(sys: &S, times: Vec<f64>, update: Vec<bool>) -> Result<Self> {
        validate_grid(&times)?;
        ensure_len("update mask", update.len(), times.len())?;
        let mut cache: HashMap<i64, usize> = HashMap::new();
        let mut table = Vec::new();
        let mut step_kind = Vec::with_capacity(times.len() - 1);
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            // steps equal up to rounding share one transition
            let key = (dt * 1e13).round() as i64;
            let idx = match cache.get(&key) {
                Some(&i) => i,
                None => {
                    table.push(sys.transition(dt)?);
                    cache.insert(key, table.len() - 1);
                    table.len() - 1
                }
            };
            step_kind.push(idx);
        }
        Ok(Self { times, update, step_kind, table })
    }

    /// Control re-evaluated at every node.
    pub fn every_step<S: LinearControlSystem + ?Sized>(sys: &S, times: Vec<f64>) -> Result<Self> {
        let n = times.len();
        Self::new(sys, times, vec![true; n])
    }

    pub fn transition(&self, step: usize) -> &Transition {
        &self.table[self.step_kind[step]]
    }

    pub fn n_steps(&self) -> usize {
        self.step_kind.len()
    }
}

/// Simulate one path, calling `visit(node, state, control)` at every node; the
/// control passed is the one held on `[t_node, t_node+1)`.
pub fn simulate_path<S, F>(
    sys: &S,
    plan: &SimPlan,
    control: &ControlProcess,
    x0: &[f64],
    seed: u64,
    path: u64,
    mut visit: F,
) -> Result<()>
where
    S: LinearControlSystem + ?Sized,
    F: FnMut(usize, &[f64], &[f64]) -> Result<()>,
{
    let n = sys.state_dim();
    ensure_len("initial state", x0.len(), n)?;
    ensure_len("control dimension", control.control_dim(), sys.control_dim())?;
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut z = Vec::new();
    let mut u = control.value(0.0, &x)?;
    let mut k = sys.control_to_k(&u);
    for (i, &t) in plan.times.iter().enumerate() {
        if i > 0 && plan.update[i] {
            u = control.value(t, &x)?;
            k = sys.control_to_k(&u);
        }
        visit(i, &x, &u)?;
        if i == plan.n_steps() {
            break;
        }
        let tr = plan.transition(i);
        z.resize(tr.noise_rank(), 0.0);
        NormalStream::new(seed, path, i as u64).fill(&mut z);
        tr.step(&x, &k, &z, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(())
}

/// Paths recorded on an output grid; layout `[path][time][coordinate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub time_grid: Vec<f64>,
    pub state_dim: usize,
    pub control_dim: usize,
    pub n_paths: usize,
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub seed: u64,
    pub system_digest: String,
}

impl PathEnsemble {
    pub fn state(&self, path: usize, ti: usize) -> &[f64] {
        let o = (path * self.time_grid.len() + ti) * self.state_dim;
        &self.states[o..o + self.state_dim]
    }

    pub fn control(&self, path: usize, ti: usize) -> &[f64] {
        let o = (path * self.time_grid.len() + ti) * self.control_dim;
        &self.controls[o..o + self.control_dim]
    }

    /// Long-format CSV: `path_id, t, mode_0.., u_0..`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let modes = (0..self.state_dim).map(|i| format!("mode_{i}"));
        let us = (0..self.control_dim).map(|j| format!("u_{j}"));
        let header: Vec<String> = ["path_id".to_string(), "t".to_string()].into_iter().chain(modes).chain(us).collect();
        writeln!(f, "{}", header.join(","))?;
        for p in 0..self.n_paths {
            for (ti, t) in self.time_grid.iter().enumerate() {
                write!(f, "{p},{t}")?;
                for v in self.state(p, ti).iter().chain(self.control(p, ti)) {
                    write!(f, ",{v}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Sample `n_paths` paths of any linear system on `time_grid`. Jumps of simple
/// controls inside a step are resolved exactly by internal sub-steps.
pub fn sample_paths_system<S: LinearControlSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    control: &ControlProcess,
    time_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    validate_grid(time_grid)?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let internal = merge_times(time_grid, control.jump_times());
    let mut output = Vec::with_capacity(time_grid.len());
    let mut j = 0;
    for (i, t) in internal.iter().enumerate() {
        if j < time_grid.len() && (t - time_grid[j]).abs() <= 1e-13 * t.abs().max(1.0) {
            output.push(i);
            j += 1;
        }
    }
    debug_assert_eq!(output.len(), time_grid.len());
    let plan = SimPlan::every_step(sys, internal)?;
    let (n, m, nt) = (sys.state_dim(), sys.control_dim(), time_grid.len());
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut s = Vec::with_capacity(nt * n);
            let mut c = Vec::with_capacity(nt * m);
            let mut next_out = 0;
            simulate_path(sys, &plan, control, x, seed, p as u64, |i, state, u| {
                if next_out < output.len() && output[next_out] == i {
                    s.extend_from_slice(state);
                    c.extend_from_slice(u);
                    next_out += 1;
                }
                Ok(())
            })?;
            Ok((s, c))
        })
        .collect::<Result<_>>()?;
    let (states, controls): (Vec<_>, Vec<_>) = per_path.into_iter().unzip();
    Ok(PathEnsemble {
        time_grid: time_grid.to_vec(),
        state_dim: n,
        control_dim: m,
        n_paths,
        states: states.concat(),
        controls: controls.concat(),
        seed,
        system_digest: sys.digest(),
    })
}

/// [`sample_paths_system`] for a spectral model.
pub fn sample_paths(
    model: &crate::model::SpectralModel,
    x: &[f64],
    control: &ControlProcess,
    time_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    sample_paths_system(model, x, control, time_grid, n_paths, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::control::{ControlBox, FeedbackPolicy, SimpleControl};
    use crate::dynamics::law::{controlled_mean, covariance_qt};
    use crate::numerics::mean_and_se;
    use crate::testutil::{heat_1d, spectral};

    #[test]
    fn noiseless_paths_follow_the_flow() {
        let m = spectral(&[0.0, 1.0, 4.0], &[0.0; 3], 1);
        let x = [1.0, -2.0, 0.5];
        let grid = uniform_grid(1.0, 0.1).unwrap();
        let e = sample_paths(&m, &x, &ControlProcess::zero(1), &grid, 3, 1).unwrap();
        for p in 0..3 {
            for (ti, t) in grid.iter().enumerate() {
                for k in 0..3 {
                    let want = (-m.mu()[k] * t).exp() * x[k];
                    assert!((e.state(p, ti)[k] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn variance_of_single_mode_matches_closed_form() {
        let m = spectral(&[1.0], &[1.0], 1);
        let e = sample_paths(&m, &[0.0], &ControlProcess::zero(1), &[0.0, 0.5, 1.0], 100_000, 11).unwrap();
        let x2: Vec<f64> = (0..e.n_paths).map(|p| e.state(p, 2)[0].powi(2)).collect();
        let (var, se) = mean_and_se(&x2);
        let target = covariance_qt(&m, 1.0).unwrap()[0];
        assert!((target - 0.432332).abs() < 1e-6);
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target} (se {se})");
    }

    #[test]
    fn ensemble_mean_matches_controlled_mean_with_jumps() {
        let m = heat_1d(4, 0.0, 0.05);
        let c = SimpleControl::new(vec![0.0, 0.35, 0.62], vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -1.0]]).unwrap();
        let grid = [0.0, 0.5, 1.0];
        let x = [0.2, -0.1, 0.3, 0.0];
        let e = sample_paths(&m, &x, &c.clone().into(), &grid, 40_000, 5).unwrap();
        let want = controlled_mean(&m, &x, &c, 1.0).unwrap();
        for k in 0..4 {
            let v: Vec<f64> = (0..e.n_paths).map(|p| e.state(p, 2)[k]).collect();
            let (mean, se) = mean_and_se(&v);
            assert!((mean - want[k]).abs() < 3.0 * se + 1e-12, "mode {k}: {mean} vs {}", want[k]);
        }
        assert_eq!(e.control(0, 1), &[-1.0, 0.5]);
    }

    #[test]
    fn ensembles_are_reproducible() {
        let m = heat_1d(4, 0.0, 0.05);
        let fb = FeedbackPolicy::new("lin", 2, |x| vec![-x[0], x[1]]).with_box(ControlBox::symmetric(2, 1.0).unwrap());
        let grid = uniform_grid(1.0, 0.05).unwrap();
        let a = sample_paths(&m, &[0.1; 4], &fb.clone().into(), &grid, 64, 9).unwrap();
        let b = sample_paths(&m, &[0.1; 4], &fb.into(), &grid, 64, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_grids_rejected() {
        let m = heat_1d(2, 0.0, 0.05);
        let z = ControlProcess::zero(2);
        assert!(sample_paths(&m, &[0.0; 2], &z, &[0.0, 0.5, 0.5], 1, 0).is_err());
        assert!(sample_paths(&m, &[0.0; 2], &z, &[0.1, 0.5], 1, 0).is_err());
        assert!(sample_paths(&m, &[0.0; 2], &z, &[0.0, 0.5], 0, 0).is_err());
    }
}
