use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phasefield_control::config::RunConfig;
use phasefield_control::export::{field_csv, sha256_hex};
use phasefield_control::grid::Bc;

const BASE: &str = r#"
seed = 7

[grid]
lengths = [1.0]
cells = [16]
time_steps = 16
final_time = 0.5

[potential]
kind = "logarithmic"
c = 1.0

[problem]
ell = 1.0
m = { kind = "constant", value = 1.0 }
theta0 = { kind = "constant", value = 0.0 }
phi0 = { kind = "trig", function = "cos", amplitude = 0.4, kx = 1.0 }

[objective]
kappa = 0.5
eps_g = 0.1
lambda_g = 1e-2
chi = { kind = "box", x = [0.25, 0.75], inside = 1.0 }

[control]
u_min = { kind = "constant", value = -2.0 }
u_max = { kind = "constant", value = 2.0 }
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pfcontrol"))
        .arg(args[0])
        .arg("--config")
        .arg(&path)
        .args(&args[1..])
        .env("PFCONTROL_LOG", "error")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn simulate_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = run(
        tmp.path(),
        BASE,
        &["simulate", "--out", out.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "simulate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"], BASE);
    assert_eq!(manifest["status"], "ok");
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().any(|a| a["path"] == "phi.csv"));
    for a in artifacts {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = run(
        tmp.path(),
        BASE,
        &["simulate", "--out", out.to_str().unwrap(), "--seed", "99"],
    );
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            BASE.replace("kappa = 0.5", "kappa = -1.0"),
            "objective.kappa",
        ),
        (BASE.replace("kappa = 0.5", "kapa = 0.5"), "kapa"),
        (BASE.replace("value = 2.0", "value = -3.0"), "control.u_min"),
        (BASE.replace("lambda_g = 1e-2\n", ""), "lambda_g"),
    ];
    for (config, key) in cases {
        let o = run(
            tmp.path(),
            &config,
            &["simulate", "--out", tmp.path().join("x").to_str().unwrap()],
        );
        assert_eq!(code(&o), 2, "{key}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(key), "{key} not in {err}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_pfcontrol"))
        .args(["simulate", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn solver_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = BASE.to_string() + "\n[newton]\nmax_iter = 1\ntol_residual = 1e-14\n";
    let o = run(
        tmp.path(),
        &config,
        &["simulate", "--out", tmp.path().join("x").to_str().unwrap()],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn audit_failure_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    let pass = BASE.to_string() + "\n[audit]\nchecks = [\"duality\", \"dependence\"]\n";
    let o = run(
        tmp.path(),
        &pass,
        &["audit", "--out", out.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(out.join("audit_report.csv")).unwrap();
    assert!(report.starts_with("check,measured,threshold,pass\n"));
    assert_eq!(report.lines().count(), 1 + 2);

    // A tolerance no floating-point run can meet.
    let fail = BASE.to_string()
        + "\n[audit]\nchecks = [\"duality\"]\nduality_tol = 0.0\nduality_directions = 3\n";
    let o = run(
        tmp.path(),
        &fail,
        &["audit", "--out", out.to_str().unwrap()],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn gradient_check_mode_reports_each_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let config = BASE.replace(
        "value = 2.0 }",
        "value = 2.0 }\nu_init = { kind = \"constant\", value = 1.0 }",
    );
    let o = run(
        tmp.path(),
        &config,
        &["gradient-check", "--out", out.to_str().unwrap()],
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    assert!(
        lines[0].starts_with("gradient") && lines[0].contains("PASS"),
        "{stdout}"
    );
    assert!(lines[1].starts_with("richardson"));
    // Exit status follows the verdicts.
    assert_eq!(code(&o), if stdout.contains("FAIL") { 4 } else { 0 });
    let table = fs::read_to_string(out.join("gradient_check.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("s,fd,adjoint,rel_error,failure"));
    assert_eq!(table.lines().count(), 1 + 4);
}

#[test]
fn optimize_never_leaves_the_box() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let config = BASE.to_string() + "\n[optimizer]\nmax_iter = 15\n";
    let o = run(
        tmp.path(),
        &config,
        &["optimize", "--out", out.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let control = fs::read_to_string(out.join("control.csv")).unwrap();
    for line in control.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((-2.0..=2.0).contains(&v), "{v}");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    let costs: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]), "{costs:?}");
}

/// A target written to CSV and read back through the config gives exactly
/// the field sampled from the analytic description.
#[test]
fn csv_target_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse_str(BASE, tmp.path()).unwrap();
    let grid = cfg.grid().unwrap();
    let analytic = cfg.build(&grid).unwrap();
    fs::write(
        tmp.path().join("chi.csv"),
        field_csv(&grid, &analytic.objective.chi).unwrap(),
    )
    .unwrap();

    let text = BASE.replace(
        r#"chi = { kind = "box", x = [0.25, 0.75], inside = 1.0 }"#,
        r#"chi = { kind = "csv", path = "chi.csv" }"#,
    );
    let from_file = RunConfig::parse_str(&text, tmp.path())
        .unwrap()
        .build(&grid)
        .unwrap();
    assert_eq!(from_file.objective.chi, analytic.objective.chi);
    assert_eq!(from_file.objective.chi.bc(), Bc::Neumann);

    // A file for another grid is a configuration error.
    let coarse = BASE.replace("cells = [16]", "cells = [8]");
    let err = RunConfig::parse_str(
        &coarse.replace(
            r#"chi = { kind = "box", x = [0.25, 0.75], inside = 1.0 }"#,
            r#"chi = { kind = "csv", path = "chi.csv" }"#,
        ),
        tmp.path(),
    )
    .and_then(|c| {
        let g = c.grid()?;
        c.build(&g)
    });
    assert!(err.is_err());
}
