use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mildhjb"))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn heat_model() -> PathBuf {
    workspace().join("configs/heat1d.toml")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mildhjb-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn check_assumptions_writes_condition_csv() {
    let out = scratch("assumptions");
    let o = run(&["check-assumptions", "--model", heat_model().to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("conditions.csv")).unwrap();
    assert!(csv.starts_with("condition_id,satisfied,witness,detail"));
    assert_eq!(csv.lines().count(), 7);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    assert!(manifest["inputs_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn three_dimensional_neumann_is_refused() {
    let out = scratch("dim3");
    let o = run(&["run-example", "neumann", "--dim", "3"], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("d <= 2"));
}

#[test]
fn failed_audits_exit_with_two() {
    let out = scratch("override");
    let o = run(&["run-example", "neumann", "--dim", "2", "--theta", "0", "--allow-override"], &out);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["check-assumptions", "--model", out.join("model.toml").to_str().unwrap()], &out.join("recheck"));
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_with_one() {
    let out = scratch("usage");
    assert_eq!(code(&run(&["no-such-command"], &out)), 1);
    assert_eq!(code(&run(&["check-assumptions"], &out)), 1);
    assert_eq!(code(&run(&["simulate", "--model", heat_model().to_str().unwrap(), "--control", "1"], &out)), 1);
    std::fs::create_dir_all(&out).unwrap();
    let bad = out.join("bad.toml");
    std::fs::write(&bad, "[cost]\nradius = \"wide\"\n").unwrap();
    let o = run(&["solve-hjb", "--model", heat_model().to_str().unwrap(), "--config", bad.to_str().unwrap()], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("malformed config"));
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn dynkin_appends_ledger_rows() {
    let out = scratch("dynkin");
    let model = heat_model();
    let args = ["verify-dynkin", "--model", model.to_str().unwrap(), "--paths", "20000", "--seed", "7"];
    assert_eq!(code(&run(&args, &out)), 0);
    assert_eq!(code(&run(&args, &out)), 0);
    let ledger = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    let lines: Vec<&str> = ledger.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("check_id,"));
    assert_eq!(lines[1], lines[2], "same seed, same row");
    assert!(lines[1].starts_with("dynkin,") && lines[1].contains(",true,7,"));
}

#[test]
fn simulation_is_reproducible() {
    let (a, b) = (scratch("sim-a"), scratch("sim-b"));
    let model = heat_model();
    let args = ["simulate", "--model", model.to_str().unwrap(), "--paths", "20", "--seed", "3", "--control", "0.5,-0.5"];
    assert_eq!(code(&run(&args, &a)), 0);
    assert_eq!(code(&run(&args, &b)), 0);
    let read = |d: &Path| std::fs::read(d.join("paths.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(String::from_utf8(read(&a)).unwrap().lines().count(), 1 + 20 * 101);
}

#[test]
fn solve_and_synthesize_on_a_small_grid() {
    let out = scratch("solve");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("run.toml");
    std::fs::write(&cfg, "[solver]\ngrid_points = 21\n[verification]\npaths = 4000\nx0 = [0.4, -0.3]\n").unwrap();
    let model = heat_model();
    let o = run(&["synthesize-feedback", "--model", model.to_str().unwrap(), "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    for f in ["value_field.csv", "feedback.csv", "verification.csv", "ledger.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let kappa = manifest["summary"]["solve"]["contraction_constant"].as_f64().unwrap();
    assert!(kappa > 0.0 && kappa < 1.0);
    assert_eq!(manifest["summary"]["failed"], 0);
}

#[test]
fn delay_experimental_is_gated() {
    let out = scratch("delay");
    let o = run(&["run-example", "delay", "--experimental", "--paths", "2000"], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("b1 = 0"));
    let o = run(&["run-example", "delay", "--paths", "2000", "--n-delay", "16"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("delay_mean.csv").exists());
}
