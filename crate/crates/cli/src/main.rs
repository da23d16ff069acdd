//! `mildhjb`: simulate, audit, solve and verify spectral control problems from the shell.
//!
//! Exit codes: 0 when every check passes, 2 when a verification check fails,
//! 1 for usage, configuration and numerical errors.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mildhjb_core::apps::{build_delay_instance, build_neumann_instance, NeumannParams};
use mildhjb_core::conditions::{audit_model, write_reports_csv};
use mildhjb_core::dynamics::{sample_paths, sample_paths_system, uniform_grid};
use mildhjb_core::hjb::{feedback_map, feedback_policy, solve_mild_hjb, CostSpec, SolverConfig};
use mildhjb_core::verify::{
    append_ledger, dynkin_residual, estimate_j, horizon_for_tail, solver_budget, verification_report,
    write_verification_csv, PathBudget, VerificationBudget, VerificationReport,
};
use mildhjb_core::{ControlProcess, CylinderFunction, FeedbackPolicy, LinearControlSystem, SimpleControl, SpectralModel, ValueField};

use config::RunConfig;
use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "mildhjb", version, about = "Spectral stochastic control: simulation, HJB solving and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Model file (TOML).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Run configuration: cost, solver and verification budgets (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Number of Monte-Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Grid modes of the HJB solver; model modes for `run-example`.
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Fixed-point tolerance of the HJB solver.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Time horizon of simulations and identities.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Enable the HJB solve for the delay example (scalar reduction only).
    #[arg(long, global = true)]
    experimental: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample controlled paths and write them as long-format CSV.
    Simulate {
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Constant control value, comma separated; zero when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        control: Vec<f64>,
    },
    /// Solve the mild HJB equation on a grid over the leading modes.
    SolveHjb,
    /// Audit the standing assumptions of a model.
    CheckAssumptions {
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
    },
    /// Monte-Carlo check of the generalized Dynkin formula; appends a ledger row.
    VerifyDynkin {
        #[arg(long, value_enum, default_value_t = DynkinControl::TwoJump)]
        control: DynkinControl,
    },
    /// Solve, build the argmin feedback and run the verification checks.
    SynthesizeFeedback,
    /// Build and exercise one of the two worked applications.
    RunExample {
        #[command(subcommand)]
        example: Example,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DynkinControl {
    Zero,
    TwoJump,
    Feedback,
}

#[derive(Debug, Subcommand)]
enum Example {
    /// Heat equation with Neumann boundary control on the interval or the square.
    Neumann {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 16.0)]
        lambda: f64,
        /// Keep going when audits fail (logged as a warning).
        #[arg(long)]
        allow_override: bool,
        /// Also solve the HJB equation and run the verification checks.
        #[arg(long)]
        solve: bool,
    },
    /// Scalar SDE with delay in the control, lifted to a product space.
    Delay {
        /// Cells on the delay interval.
        #[arg(long, default_value_t = 64)]
        n_delay: usize,
    },
}

/// Whether every check of a command passed.
type Verdict = bool;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Verdict> {
    let (config, config_text) = RunConfig::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Simulate { step, control } => simulate(cli, &config, *step, control),
        Command::SolveHjb => solve(cli, &config, &config_text),
        Command::CheckAssumptions { gamma } => check_assumptions(cli, *gamma),
        Command::VerifyDynkin { control } => verify_dynkin(cli, &config, &config_text, *control),
        Command::SynthesizeFeedback => synthesize(cli, &config, &config_text),
        Command::RunExample { example: Example::Neumann { dim, theta, epsilon, delta, lambda, allow_override, solve } } => {
            let params = NeumannParams {
                spatial_dim: *dim,
                n_modes: cli.modes.unwrap_or(if *dim == 2 { 24 } else { 8 }),
                delta: *delta,
                epsilon: epsilon.unwrap_or(if *dim == 2 { 0.01 } else { 0.05 }),
                theta: theta.unwrap_or(if *dim == 2 { 0.1 } else { 0.0 }),
                lambda: *lambda,
                allow_override: *allow_override,
                ..Default::default()
            };
            run_neumann(cli, &config, &config_text, &params, *solve)
        }
        Command::RunExample { example: Example::Delay { n_delay } } => run_delay(cli, &config, &config_text, *n_delay),
    }
}

fn load_model(cli: &Cli) -> Result<(SpectralModel, String)> {
    let path = cli.model.as_deref().context("this command needs --model <file>")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let model = SpectralModel::from_toml_str(&text).with_context(|| format!("malformed model {}", path.display()))?;
    Ok((model, text))
}

fn solver_config(cli: &Cli, config: &RunConfig) -> SolverConfig {
    let mut solver = config.solver.clone();
    if let Some(m) = cli.modes {
        solver.lead_modes = m;
    }
    if let Some(t) = cli.tol {
        solver.tol = t;
    }
    solver
}

fn finish(cli: &Cli, manifest: &Manifest) -> Result<Verdict> {
    let path = manifest.write(&cli.out)?;
    println!("{} {} -> {}", manifest.command, if manifest.passed { "passed" } else { "FAILED" }, path.display());
    Ok(manifest.passed)
}

fn simulate(cli: &Cli, config: &RunConfig, step: f64, control: &[f64]) -> Result<Verdict> {
    let (model, text) = load_model(cli)?;
    let u = if control.is_empty() { vec![0.0; model.control_dim()] } else { control.to_vec() };
    if u.len() != model.control_dim() {
        bail!("--control has {} entries, the model has {} controls", u.len(), model.control_dim());
    }
    let x = config.verification.initial_state(model.n_modes())?;
    let grid = uniform_grid(cli.horizon.unwrap_or(1.0), step)?;
    let paths = cli.paths.unwrap_or(100);
    let ensemble = sample_paths(&model, &x, &ControlProcess::Simple(SimpleControl::constant(u.clone())), &grid, paths, cli.seed)?;
    let mut manifest = Manifest::new("simulate", &[&text, &format!("{u:?},{step},{paths},{x:?}")]);
    ensemble.write_csv(manifest.output(&cli.out.join("paths.csv")))?;
    manifest.model_digest = Some(model.digest());
    manifest.seed = Some(cli.seed);
    manifest.summary = json!({ "paths": paths, "steps": grid.len() - 1, "control": u });
    finish(cli, &manifest)
}

fn solve(cli: &Cli, config: &RunConfig, config_text: &str) -> Result<Verdict> {
    let (model, text) = load_model(cli)?;
    let cost = config.cost.build(&model)?;
    let solver = solver_config(cli, config);
    let v = solve_mild_hjb(&model, &cost, &solver)?;
    let mut manifest = Manifest::new("solve-hjb", &[&text, config_text, &format!("{solver:?}")]);
    v.write_csv(manifest.output(&cli.out.join("value_field.csv")))?;
    manifest.model_digest = Some(model.digest());
    manifest.summary = solve_summary(&v, &solver);
    finish(cli, &manifest)
}

fn solve_summary(v: &ValueField, solver: &SolverConfig) -> serde_json::Value {
    let r = &v.report;
    json!({
        "solver": solver,
        "contraction_constant": r.contraction_constant,
        "full_model_constant": r.full_model_constant,
        "lipschitz_f0": r.lipschitz_f0,
        "iterations": r.iterations,
        "ratios": r.ratios,
        "last_change": r.last_change,
        "error_budget": r.error_budget,
        "grid_error": r.grid_error,
        "sup_value": v.sup_abs(),
    })
}

fn check_assumptions(cli: &Cli, gamma: f64) -> Result<Verdict> {
    let (model, text) = load_model(cli)?;
    let reports = audit_model(&model, gamma)?;
    let mut manifest = Manifest::new("check-assumptions", &[&text, &gamma.to_string()]);
    write_reports_csv(manifest.output(&cli.out.join("conditions.csv")), &reports)?;
    for r in &reports {
        println!("{:<12} {:<5} {}", r.condition_id.to_string(), r.satisfied, r.detail);
    }
    manifest.model_digest = Some(model.digest());
    manifest.passed = reports.iter().all(|r| r.satisfied);
    manifest.summary = json!({ "failed": reports.iter().filter(|r| !r.satisfied).map(|r| r.condition_id.to_string()).collect::<Vec<_>>() });
    finish(cli, &manifest)
}

fn two_jump(m: usize, radius: f64) -> ControlProcess {
    let level = |s: f64| vec![s * radius; m];
    let values = vec![level(1.0), level(-1.0), level(0.5)];
    ControlProcess::Simple(SimpleControl::new(vec![0.0, 0.3, 0.7], values).expect("increasing jump times"))
}

fn verify_dynkin(cli: &Cli, config: &RunConfig, config_text: &str, which: DynkinControl) -> Result<Verdict> {
    let (model, text) = load_model(cli)?;
    let d = &config.dynkin;
    let mut direction = d.direction.clone();
    direction.resize(model.n_modes(), 0.0);
    let f = CylinderFunction::trig(direction, d.amplitude, d.phase);
    let radius = config.cost.radius;
    let m = model.control_dim();
    let control = match which {
        DynkinControl::Zero => ControlProcess::zero(m),
        DynkinControl::TwoJump => two_jump(m, radius),
        DynkinControl::Feedback => ControlProcess::Feedback(FeedbackPolicy::new("tanh", m, move |x: &[f64]| {
            (0..m).map(|j| radius * x[j % x.len()].tanh()).collect()
        })),
    };
    let budget = PathBudget { n_paths: cli.paths.unwrap_or(config.verification.paths), seed: cli.seed, step: config.verification.step };
    let lambda = d.lambda.unwrap_or(model.lambda());
    let x = config.verification.initial_state(model.n_modes())?;
    let report = dynkin_residual(&model, &f, lambda, cli.horizon.unwrap_or(1.0), &x, &control, budget)?;
    println!("{}", report.csv_row());
    let mut manifest = Manifest::new("verify-dynkin", &[&text, config_text, &format!("{which:?},{budget:?}")]);
    append_ledger(manifest.output(&cli.out.join("ledger.csv")), std::slice::from_ref(&report), cli.seed, &model.digest())?;
    manifest.model_digest = Some(model.digest());
    manifest.seed = Some(cli.seed);
    manifest.passed = report.pass;
    manifest.summary = json!({ "estimate": report.estimate, "standard_error": report.standard_error, "tolerance": report.tolerance });
    finish(cli, &manifest)
}

/// Zero control plus two random simple controls inside the box.
fn random_candidates(m: usize, radius: f64, seed: u64) -> Result<Vec<ControlProcess>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![ControlProcess::zero(m)];
    for _ in 0..2 {
        let mut times: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
        times.sort_by(f64::total_cmp);
        times.insert(0, 0.0);
        let values = times.iter().map(|_| (0..m).map(|_| rng.random_range(-radius..=radius)).collect()).collect();
        out.push(ControlProcess::Simple(SimpleControl::new(times, values)?));
    }
    Ok(out)
}

/// Solve, synthesize the feedback, verify, and write everything under `cli.out`.
fn solve_and_verify(cli: &Cli, config: &RunConfig, model: &SpectralModel, cost: &CostSpec, manifest: &mut Manifest) -> Result<Vec<VerificationReport>> {
    let solver = solver_config(cli, config);
    let v = Arc::new(solve_mild_hjb(model, cost, &solver)?);
    v.write_csv(manifest.output(&cli.out.join("value_field.csv")))?;
    write_feedback_csv(&manifest.output(&cli.out.join("feedback.csv")), model, cost, &v)?;
    let ver = &config.verification;
    let budget = VerificationBudget {
        paths: PathBudget { n_paths: cli.paths.unwrap_or(ver.paths), seed: cli.seed, step: ver.step },
        tail_tol: ver.tail_tol,
        solver_allowance: solver_budget(model, cost, &v, ver.residual_stride)?,
    };
    let x = ver.initial_state(model.n_modes())?;
    let candidates = random_candidates(model.control_dim(), config.cost.radius, cli.seed)?;
    let policy = feedback_policy(cost, model, v.clone());
    let reports = verification_report(model, cost, &v, &x, &candidates, &policy, budget)?;
    write_verification_csv(manifest.output(&cli.out.join("verification.csv")), &reports)?;
    append_ledger(manifest.output(&cli.out.join("ledger.csv")), &reports, cli.seed, &model.digest())?;
    for r in &reports {
        println!("{}", r.csv_row());
    }
    manifest.summary = json!({
        "solve": solve_summary(&v, &solver),
        "solver_allowance": budget.solver_allowance,
        "value_at_x0": v.eval(&x),
        "checks": reports.len(),
        "failed": reports.iter().filter(|r| !r.pass).count(),
    });
    manifest.passed = reports.iter().all(|r| r.pass);
    Ok(reports)
}

fn write_feedback_csv(path: &Path, model: &SpectralModel, cost: &CostSpec, v: &ValueField) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let coords = (0..v.lead()).map(|i| format!("x_{i}"));
    let us = (0..model.control_dim()).map(|j| format!("u_{j}"));
    writeln!(f, "{}", coords.chain(us).collect::<Vec<_>>().join(","))?;
    for idx in 0..v.node_count() {
        let x = v.node_point(idx);
        let u = feedback_map(cost, model, v, &x)?;
        let row: Vec<String> = x[..v.lead()].iter().chain(&u).map(|c| c.to_string()).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

fn synthesize(cli: &Cli, config: &RunConfig, config_text: &str) -> Result<Verdict> {
    let (model, text) = load_model(cli)?;
    let cost = config.cost.build(&model)?;
    let mut manifest = Manifest::new("synthesize-feedback", &[&text, config_text, &format!("{:?}", cli.paths)]);
    manifest.model_digest = Some(model.digest());
    manifest.seed = Some(cli.seed);
    solve_and_verify(cli, config, &model, &cost, &mut manifest)?;
    finish(cli, &manifest)
}

fn run_neumann(cli: &Cli, config: &RunConfig, config_text: &str, params: &NeumannParams, solve: bool) -> Result<Verdict> {
    let instance = build_neumann_instance(params)?;
    let mut manifest = Manifest::new("run-example neumann", &[&serde_json::to_string(params)?, config_text]);
    let model_path = manifest.output(&cli.out.join("model.toml"));
    std::fs::write(&model_path, instance.model.to_toml_string())?;
    write_reports_csv(manifest.output(&cli.out.join("conditions.csv")), &instance.reports)?;
    for r in &instance.reports {
        println!("{:<12} {:<5} {}", r.condition_id.to_string(), r.satisfied, r.detail);
    }
    manifest.model_digest = Some(instance.model.digest());
    let audits = instance.all_audits_pass();
    if solve {
        manifest.seed = Some(cli.seed);
        let cost = config.cost.build(&instance.model)?;
        solve_and_verify(cli, config, &instance.model, &cost, &mut manifest)?;
        let checks = manifest.summary.take();
        manifest.summary = json!({ "window": [instance.window.lower, instance.window.upper], "overridden": instance.overridden, "verification": checks });
    } else {
        manifest.summary = json!({ "window": [instance.window.lower, instance.window.upper], "overridden": instance.overridden });
    }
    manifest.passed &= audits;
    finish(cli, &manifest)
}

fn run_delay(cli: &Cli, config: &RunConfig, config_text: &str, n_delay: usize) -> Result<Verdict> {
    let dc = &config.delay;
    let instance = build_delay_instance(dc.params(n_delay))?;
    let mut manifest = Manifest::new("run-example delay", &[config_text, &n_delay.to_string()]);
    manifest.model_digest = Some(instance.digest());
    manifest.seed = Some(cli.seed);
    if cli.experimental && !(dc.b1_scale == 0.0 && dc.a0 <= 0.0) {
        bail!("--experimental solves the delay example only for b1 = 0 and a0 <= 0 (set delay.b1_scale = 0)");
    }

    let horizon = cli.horizon.unwrap_or(1.0);
    let past = dc.past_control;
    let x = instance.initial_state(dc.y0, move |_| past);
    let control = ControlProcess::Simple(SimpleControl::constant(vec![instance.normalized_control(dc.control)]));
    let grid = uniform_grid(horizon, config.verification.step.max(horizon / 1000.0))?;
    let n_paths = cli.paths.unwrap_or(config.verification.paths);
    let paths = sample_paths_system(&instance, &x, &control, &grid, n_paths, cli.seed)?;
    {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(manifest.output(&cli.out.join("delay_mean.csv")))?);
        writeln!(f, "t,mean_x0,std_error_x0")?;
        for (ti, t) in grid.iter().enumerate() {
            let col: Vec<f64> = (0..n_paths).map(|p| paths.state(p, ti)[0]).collect();
            let (m, se) = mildhjb_core::numerics::mean_and_se(&col);
            writeln!(f, "{t},{m},{se}")?;
        }
    }

    // Dynkin on the product space with a test function of the present state x₀
    let mut direction = vec![0.0; instance.state_dim()];
    direction[0] = 0.8;
    let f = CylinderFunction::trig(direction, 1.0, 0.3);
    let budget = PathBudget { n_paths, seed: cli.seed, step: config.verification.step };
    let lambda = dc.lambda;
    let dynkin = dynkin_residual(&instance, &f, lambda, horizon, &x, &control, budget)?;

    // discounted cost of the constant control, `l = 1 − exp(−x₀²) + ½u²` in normalized units
    let cost = CostSpec::new(
        mildhjb_core::hjb::StateCost::GaussianWell { weights: vec![1.0] },
        mildhjb_core::hjb::ControlCost::Quadratic { weight: 1.0 },
        mildhjb_core::ControlBox::symmetric(1, instance.normalized_control(dc.control.abs().max(1.0)))?,
    )?;
    let cost_horizon = horizon_for_tail(&cost, lambda, config.verification.tail_tol)?;
    let j = estimate_j(&instance, &cost, lambda, &x, &control, cost_horizon, budget)?;
    append_ledger(manifest.output(&cli.out.join("ledger.csv")), std::slice::from_ref(&dynkin), cli.seed, &instance.digest())?;
    println!("{}", dynkin.csv_row());
    println!("discounted cost {:.6e} (SE {:.1e}, horizon {cost_horizon:.2})", j.value, j.std_error);
    let mut summary = json!({
        "n_delay": n_delay,
        "b_scale": instance.b_scale,
        "dynkin": { "estimate": dynkin.estimate, "standard_error": dynkin.standard_error, "pass": dynkin.pass },
        "cost": { "value": j.value, "standard_error": j.std_error },
    });
    manifest.passed = dynkin.pass;

    if cli.experimental {
        let model = instance.scalar_reduction(dc.lambda)?;
        let solver = SolverConfig { lead_modes: 1, ..solver_config(cli, config) };
        let scalar_cost = CostSpec::new(
            mildhjb_core::hjb::StateCost::GaussianWell { weights: vec![1.0] },
            mildhjb_core::hjb::ControlCost::Quadratic { weight: 1.0 },
            mildhjb_core::ControlBox::symmetric(1, config.cost.radius)?,
        )?;
        let v = solve_mild_hjb(&model, &scalar_cost, &solver)?;
        v.write_csv(manifest.output(&cli.out.join("value_field.csv")))?;
        summary["hjb"] = solve_summary(&v, &solver);
    }
    manifest.summary = summary;
    finish(cli, &manifest)
}
