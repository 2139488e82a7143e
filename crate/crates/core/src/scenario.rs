//! Run orchestration for the command-line modes.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::export::{
    field_csv, gnuplot_matrix, records_csv, static_field_csv, Manifest, OutputDir,
};
use crate::grid::{Bc, Grid, SpaceTime, Trajectory};
use crate::optimizer::{classify_bang_bang, optimize, ControlBox, OptimizeResult, OptimizeStatus};
use crate::potentials::{PotentialKind, PotentialSpec};
use crate::state::{solve_state, StateProblem};
use crate::verify::{
    self, dependence_family, duality_residual, energy_audit, energy_refinement, fd_gradient_oracle,
    mms_convergence, ratio_variation, separation_audit, theta_linf_refinement, yosida_continuation,
    AuditConfig, AuditReport, Check, CheckOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Optimize,
    Audit,
    GradientCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Optimize => "optimize",
            Mode::Audit => "audit",
            Mode::GradientCheck => "gradient-check",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Mode::Simulate,
            "optimize" => Mode::Optimize,
            "audit" => Mode::Audit,
            "gradient-check" => Mode::GradientCheck,
            other => return Err(Error::config("mode", format!("unknown mode `{other}`"))),
        })
    }
}

/// How a completed run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Checks ran but at least one failed; the names are listed.
    AuditFailed(Vec<String>),
}

/// Result of [`run_scenario`]: the outcome and the output directory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub out_dir: PathBuf,
}

/// Seeded generator shared by every randomized part of a run.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random field in `[−1, 1]` on the control layout, level 0 zero.
pub fn random_direction(grid: &Grid, rng: &mut ChaCha8Rng) -> SpaceTime {
    let mut h = SpaceTime::from_fn(grid, Bc::Dirichlet, |_, _| rng.gen_range(-1.0..=1.0));
    h.levels[0].values.iter_mut().for_each(|v| *v = 0.0);
    h
}

/// Default direction of the finite-difference check: a smooth wave with
/// amplitude half the width of the control box. Node-wise noise makes the
/// second-order remainder too small to resolve at the tested step sizes.
pub fn smooth_direction(grid: &Grid, bx: &ControlBox) -> SpaceTime {
    let width = bx.u_max.zip_map(&bx.u_min, |a, b| a - b);
    let amp = 0.5
        * width
            .levels
            .iter()
            .flat_map(|l| l.values.iter())
            .fold(0.0f64, |m, v| m.max(*v));
    let amp = if amp > 0.0 && amp.is_finite() {
        amp
    } else {
        1.0
    };
    let mut h = SpaceTime::from_fn(grid, Bc::Dirichlet, |t, x| {
        amp * ((3.0 * t + 5.0 * x[0] + 2.0 * x[1]).sin() + 0.5)
    });
    h.levels[0].values.iter_mut().for_each(|v| *v = 0.0);
    h
}

/// Runs one mode and writes its artifacts and manifest under `out_dir`.
pub fn run_scenario(
    cfg: &RunConfig,
    config_text: &str,
    mode: Mode,
    out_dir: &Path,
) -> Result<RunSummary> {
    let grid = cfg.grid()?;
    let scenario = cfg.build(&grid)?;
    let mut out = OutputDir::create(out_dir, Manifest::new(mode.name(), cfg.seed, config_text))?;
    let outcome = match mode {
        Mode::Simulate => simulate(cfg, &scenario, &mut out)?,
        Mode::Optimize => run_optimize(cfg, &scenario, &mut out)?,
        Mode::GradientCheck => gradient_check(cfg, &scenario, &mut out)?,
        Mode::Audit => {
            let report = run_audit(cfg, &scenario)?;
            out.write("audit_report.csv", &report.to_csv())?;
            // Timings make the summary nondeterministic, so it stays out of the manifest.
            std::fs::write(out.dir.join("audit_summary.txt"), report.summary())?;
            print!("{}", report.summary());
            outcome_of(&report)
        }
    };
    let status = match &outcome {
        Outcome::Ok => "ok".to_string(),
        Outcome::AuditFailed(names) => format!("failed: {}", names.join(", ")),
    };
    out.finish(&status)?;
    Ok(RunSummary {
        outcome,
        out_dir: out_dir.to_path_buf(),
    })
}

fn outcome_of(report: &AuditReport) -> Outcome {
    let failed: Vec<String> = report
        .outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| o.name.clone())
        .collect();
    if failed.is_empty() {
        Outcome::Ok
    } else {
        Outcome::AuditFailed(failed)
    }
}

fn write_trajectory(
    cfg: &RunConfig,
    grid: &Grid,
    traj: &Trajectory,
    out: &mut OutputDir,
) -> Result<()> {
    if cfg.output.formats.contains(&OutputFormat::Csv) {
        out.write("theta.csv", &field_csv(grid, &traj.theta)?)?;
        out.write("phi.csv", &field_csv(grid, &traj.phi)?)?;
        out.write("xi.csv", &field_csv(grid, &traj.xi)?)?;
    }
    if cfg.output.formats.contains(&OutputFormat::Gnuplot) && grid.dim() == 1 {
        out.write("phi.dat", &gnuplot_matrix(grid, &traj.phi)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CostRow {
    total: f64,
    interface: f64,
    temperature: f64,
    sharp_interface: f64,
}

fn simulate(cfg: &RunConfig, sc: &Scenario, out: &mut OutputDir) -> Result<Outcome> {
    let g = &sc.problem.grid;
    let traj = solve_state(&sc.problem, &sc.u_init)?;
    info!(
        "forward solve: {} Newton iterations",
        traj.newton_iterations.iter().sum::<usize>()
    );
    write_trajectory(cfg, g, &traj, out)?;
    out.write("control.csv", &field_csv(g, &sc.u_init)?)?;
    out.write(
        "energy.csv",
        &records_csv(&energy_audit(&sc.problem, &traj, &sc.u_init)?)?,
    )?;
    let c = sc.objective.eval_cost(g, &traj)?;
    out.write(
        "cost.csv",
        &records_csv(&[CostRow {
            total: c.total,
            interface: c.interface,
            temperature: c.temperature,
            sharp_interface: c.sharp_interface,
        }])?,
    )?;
    Ok(Outcome::Ok)
}

fn run_optimize(cfg: &RunConfig, sc: &Scenario, out: &mut OutputDir) -> Result<Outcome> {
    let g = &sc.problem.grid;
    let res = optimize(
        &sc.problem,
        &sc.objective,
        &sc.control_box,
        &cfg.optimizer,
        Some(&sc.u_init),
    )?;
    match res.status {
        OptimizeStatus::Converged => info!("converged in {} iterations", res.history.len()),
        s => warn!("optimizer stopped with status {s:?}"),
    }
    out.write("history.csv", &records_csv(&res.history)?)?;
    out.write("control.csv", &field_csv(g, &res.control)?)?;
    out.write("gradient.csv", &field_csv(g, &res.evaluation.gradient)?)?;
    write_trajectory(cfg, g, &res.evaluation.trajectory, out)?;
    out.write("m.csv", &static_field_csv(g, &sc.problem.m)?)?;
    let bb = classify_bang_bang(
        &sc.control_box,
        &res.control,
        &res.evaluation.adjoint,
        &sc.problem.m_interior(),
        cfg.optimizer.tol_p,
        cfg.audit.bang_bang_tol_u,
    );
    info!(
        "bang-bang: {} determined nodes, {} violations",
        bb.determined, bb.violations
    );
    Ok(Outcome::Ok)
}

fn gradient_base_and_direction(cfg: &RunConfig, sc: &Scenario) -> Result<(SpaceTime, SpaceTime)> {
    let g = &sc.problem.grid;
    let base = match &cfg.gradient_check.base {
        Some(spec) => spec.sample(g, Bc::Dirichlet, &cfg.base_dir, "gradient_check.base")?,
        None => sc.u_init.clone(),
    };
    let h = match &cfg.gradient_check.direction {
        Some(spec) => spec.sample(g, Bc::Dirichlet, &cfg.base_dir, "gradient_check.direction")?,
        None => smooth_direction(g, &sc.control_box),
    };
    Ok((base, h))
}

fn gradient_check(cfg: &RunConfig, sc: &Scenario, out: &mut OutputDir) -> Result<Outcome> {
    let (base, h) = gradient_base_and_direction(cfg, sc)?;
    let table = fd_gradient_oracle(&sc.problem, &sc.objective, &base, &h, &cfg.audit.fd_steps)?;
    out.write("gradient_check.csv", &records_csv(&table.rows)?)?;
    let outcomes = gradient_outcomes(&cfg.audit, &table);
    for o in &outcomes {
        println!(
            "{:<12} {}  measured {:.3e}  threshold {:.3e}",
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.measured,
            o.threshold
        );
    }
    Ok(outcome_of(&AuditReport {
        seed: cfg.seed,
        outcomes,
    }))
}

fn gradient_outcomes(a: &AuditConfig, table: &verify::FdTable) -> Vec<CheckOutcome> {
    let rel = table.row(a.fd_step).and_then(|r| r.rel_error);
    let ratio = table.richardson_ratio(a.fd_step);
    let [lo, hi] = a.richardson_range;
    vec![
        match rel {
            Some(e) => {
                CheckOutcome::at_most("gradient", e, a.fd_rel_tol, format!("s = {:e}", a.fd_step))
            }
            None => CheckOutcome::failed(
                "gradient",
                a.fd_rel_tol,
                format!("no finite-difference row for s = {:e}", a.fd_step),
            ),
        },
        match ratio {
            Some(r) => CheckOutcome {
                pass: (lo..=hi).contains(&r),
                ..CheckOutcome::at_most(
                    "richardson",
                    r,
                    hi,
                    format!("ratio s/(s/2), accepted range [{lo}, {hi}]"),
                )
            },
            None => CheckOutcome::failed("richardson", hi, "ratio unavailable".into()),
        },
    ]
}

/// Runs every configured audit on the scenario. A check whose solves fail
/// is reported as failed; only configuration problems abort the audit.
pub fn run_audit(cfg: &RunConfig, sc: &Scenario) -> Result<AuditReport> {
    let mut report = AuditReport {
        seed: cfg.seed,
        outcomes: Vec::new(),
    };
    let mut optimized: Option<OptimizeResult> = None;
    for &check in &cfg.audit.checks {
        let start = Instant::now();
        let mut outcomes = match audit_check(check, cfg, sc, &mut optimized) {
            Ok(o) => o,
            Err(e @ Error::Config { .. }) => return Err(e),
            Err(e) => vec![CheckOutcome::failed(check.name(), f64::NAN, e.to_string())],
        };
        let share = start.elapsed() / outcomes.len().max(1) as u32;
        for o in &mut outcomes {
            o.runtime = share;
        }
        for o in &outcomes {
            info!(
                "{} {} measured {:.3e}",
                o.name,
                if o.pass { "PASS" } else { "FAIL" },
                o.measured
            );
        }
        report.outcomes.extend(outcomes);
    }
    Ok(report)
}

/// Same problem with another potential.
fn with_potential(p: &StateProblem, potential: PotentialSpec) -> StateProblem {
    let mut q = p.clone();
    q.potential = potential;
    q
}

/// The `c` of the configured potential when it has one.
fn configured_c(p: &PotentialSpec) -> f64 {
    match p.kind {
        PotentialKind::Logarithmic { c } | PotentialKind::Obstacle { c, .. } => c,
        _ => 1.0,
    }
}

fn optimized<'a>(
    cfg: &RunConfig,
    sc: &Scenario,
    cache: &'a mut Option<OptimizeResult>,
) -> Result<&'a OptimizeResult> {
    if cache.is_none() {
        *cache = Some(optimize(
            &sc.problem,
            &sc.objective,
            &sc.control_box,
            &cfg.optimizer,
            Some(&sc.u_init),
        )?);
    }
    Ok(cache.as_ref().expect("just filled"))
}

/// One audit, returning its verdicts.
pub fn audit_check(
    check: Check,
    cfg: &RunConfig,
    sc: &Scenario,
    cache: &mut Option<OptimizeResult>,
) -> Result<Vec<CheckOutcome>> {
    let a = &cfg.audit;
    let p = &sc.problem;
    let g = &p.grid;
    let name = check.name();
    Ok(match check {
        Check::Duality => {
            let mut r = rng(cfg.seed);
            let mut worst = 0.0f64;
            let c = configured_c(&p.potential);
            for potential in [PotentialSpec::regular(), PotentialSpec::logarithmic(c)?] {
                let q = with_potential(p, potential);
                let base = solve_state(&q, &sc.u_init)?;
                for _ in 0..a.duality_directions {
                    let h = random_direction(g, &mut r);
                    worst = worst.max(duality_residual(&q, &sc.objective, &base, &h)?);
                }
            }
            vec![CheckOutcome::at_most(
                name,
                worst,
                a.duality_tol,
                format!(
                    "{} directions, regular and logarithmic",
                    a.duality_directions
                ),
            )]
        }
        Check::Gradient => {
            let (base, h) = gradient_base_and_direction(cfg, sc)?;
            gradient_outcomes(
                a,
                &fd_gradient_oracle(p, &sc.objective, &base, &h, &a.fd_steps)?,
            )
        }
        Check::Optimizer => {
            let res = optimized(cfg, sc, cache)?;
            let increase = res
                .history
                .windows(2)
                .fold(0.0f64, |m, w| m.max(w[1].cost - w[0].cost));
            let last = res
                .history
                .last()
                .expect("optimizer records at least one iteration");
            let rel = last.residual / (1.0 + last.cost.abs());
            vec![
                CheckOutcome::at_most(
                    "optimizer_monotone",
                    increase,
                    0.0,
                    format!("{} iterations, status {:?}", res.history.len(), res.status),
                ),
                CheckOutcome::at_most(
                    "optimizer_stationarity",
                    rel,
                    a.stationarity_tol,
                    format!("J = {:.6e}", last.cost),
                ),
            ]
        }
        Check::BangBang => {
            let res = optimized(cfg, sc, cache)?;
            let bb = classify_bang_bang(
                &sc.control_box,
                &res.control,
                &res.evaluation.adjoint,
                &p.m_interior(),
                a.bang_bang_tol_p,
                a.bang_bang_tol_u,
            );
            vec![CheckOutcome::at_most(
                name,
                bb.violation_fraction(),
                a.bang_bang_fraction,
                format!(
                    "{} of {} determined nodes off their bound",
                    bb.violations, bb.determined
                ),
            )]
        }
        Check::Separation => {
            let q = with_potential(p, PotentialSpec::logarithmic(configured_c(&p.potential))?);
            let bx = &sc.control_box;
            let mut controls = vec![bx.u_min.clone(), bx.u_max.clone(), bx.midpoint()];
            let mut r = rng(cfg.seed);
            for k in 0..a.separation_samples {
                // Alternate random bang-bang controls and uniform samples of the box.
                let mut u = bx.u_min.clone();
                for (level, hi) in u.levels.iter_mut().zip(&bx.u_max.levels) {
                    for (v, &hi) in level.values.iter_mut().zip(&hi.values) {
                        let s: f64 = if k % 2 == 0 {
                            f64::from(u8::from(r.gen_bool(0.5)))
                        } else {
                            r.gen_range(0.0..=1.0)
                        };
                        *v = (*v + s * (hi - *v)).min(hi);
                    }
                }
                controls.push(u);
            }
            let b = separation_audit(&q, &controls)?;
            let max_abs = b.phi_hi.max(-b.phi_lo);
            vec![CheckOutcome::at_most(
                name,
                max_abs,
                1.0 - a.separation_margin,
                format!(
                    "{} controls, phi in [{:.6}, {:.6}]",
                    controls.len(),
                    b.phi_lo,
                    b.phi_hi
                ),
            )]
        }
        Check::Energy => {
            let u0 = SpaceTime::zeros(g, Bc::Dirichlet);
            let rec = energy_audit(p, &solve_state(p, &u0)?, &u0)?;
            let defect = verify::energy::max_defect(&rec);
            let increase = verify::energy::max_energy_increase(&rec);
            let refinement = energy_refinement(p, &a.energy_time_steps)?;
            vec![
                CheckOutcome {
                    pass: defect <= a.energy_defect_tol && increase <= a.energy_defect_tol,
                    ..CheckOutcome::at_most(
                        "energy_defect",
                        defect,
                        a.energy_defect_tol,
                        format!("largest energy increase {increase:.3e}"),
                    )
                },
                CheckOutcome::at_least(
                    "energy_order",
                    refinement.order,
                    a.energy_order,
                    format!("max defects {:?}", refinement.max_defect),
                ),
            ]
        }
        Check::Dependence => {
            let h = random_direction(g, &mut rng(cfg.seed));
            let rows = dependence_family(p, &sc.u_init, &h, &a.dependence_scales)?;
            let bounds = rows.iter().all(|r| r.antiderivative_bounds_hold);
            let var = ratio_variation(&rows);
            let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
            vec![CheckOutcome {
                pass: var <= a.dependence_variation && bounds,
                ..CheckOutcome::at_most(
                    name,
                    var,
                    a.dependence_variation,
                    format!("ratios {ratios:?}, antiderivative bounds hold: {bounds}"),
                )
            }]
        }
        Check::Yosida => {
            let eps0 = a.yosida_eps.first().copied().unwrap_or(0.1);
            let q = with_potential(
                p,
                PotentialSpec::obstacle(configured_c(&p.potential), eps0)?,
            );
            let table = yosida_continuation(&q, &a.yosida_eps, &sc.u_init)?;
            let worst = |v: Vec<Option<f64>>| {
                if v.is_empty() || v.iter().any(Option::is_none) {
                    f64::NAN
                } else {
                    v.into_iter().flatten().fold(f64::NEG_INFINITY, f64::max)
                }
            };
            let ratio = worst(table.diff_ratios());
            let growth = worst(table.xi_growth());
            let xi: Vec<Option<f64>> = table.rows.iter().map(|r| r.max_xi).collect();
            vec![
                CheckOutcome::at_most(
                    "yosida_ratio",
                    ratio,
                    a.yosida_ratio,
                    format!("max|xi| per eps {xi:?}"),
                ),
                CheckOutcome::at_most("yosida_xi_growth", growth, a.yosida_growth, String::new()),
            ]
        }
        Check::Mms => {
            let potential = if p.potential.supports_adjoint() {
                p.potential
            } else {
                PotentialSpec::regular()
            };
            let r = mms_convergence(
                &potential,
                p.ell,
                &a.mms_cells,
                &a.mms_steps,
                g.final_time(),
            )?;
            vec![
                CheckOutcome::at_least(
                    "mms_time",
                    r.time.order,
                    a.mms_time_order,
                    format!("errors {:?}", r.time.errors),
                ),
                CheckOutcome::at_least(
                    "mms_space",
                    r.space.order,
                    a.mms_space_order,
                    format!(
                        "errors {:?}, stencil-exact error {:.3e}",
                        r.space.errors, r.exact_error
                    ),
                ),
            ]
        }
        Check::Linf => {
            let coarse = solve_state(p, &sc.u_init)?;
            let mut fine_cfg = cfg.grid.clone();
            fine_cfg.cells = fine_cfg.cells.iter().map(|c| 2 * c).collect();
            fine_cfg.time_steps *= 2;
            let fine_sc = cfg.build(&Grid::new(&fine_cfg)?)?;
            let fine = solve_state(&fine_sc.problem, &fine_sc.u_init)?;
            let r = theta_linf_refinement(&coarse, &fine);
            vec![CheckOutcome::at_most(
                name,
                r.relative_change,
                a.linf_change,
                format!("max|theta| {:.6} -> {:.6}", r.coarse, r.fine),
            )]
        }
        Check::Determinism => {
            let render = || -> Result<String> {
                let traj = solve_state(p, &sc.u_init)?;
                Ok(field_csv(g, &traj.theta)? + &field_csv(g, &traj.phi)?)
            };
            let (first, second) = (render()?, render()?);
            let differing = first
                .bytes()
                .zip(second.bytes())
                .filter(|(a, b)| a != b)
                .count()
                + first.len().abs_diff(second.len());
            vec![CheckOutcome::at_most(
                name,
                differing as f64,
                0.0,
                "differing bytes between two runs".into(),
            )]
        }
    })
}
