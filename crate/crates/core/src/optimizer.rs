//! Projected gradient descent over the control box with Armijo backtracking,
//! and extraction of the bang-bang structure of a converged control.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::adjoint::{gradient_from_adjoint, solve_adjoint, AdjointPair};
use crate::error::{Error, Result};
use crate::grid::{norm_q, Bc, Field, Grid, SpaceTime, Trajectory};
use crate::objective::{CostBreakdown, ObjectiveSpec};
use crate::state::{solve_state, StateProblem};

/// Admissible set `u_min ≤ u ≤ u_max` (Dirichlet layout, all levels).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub u_min: SpaceTime,
    pub u_max: SpaceTime,
}

impl ControlBox {
    pub fn new(grid: &Grid, u_min: SpaceTime, u_max: SpaceTime) -> Result<Self> {
        let b = ControlBox { u_min, u_max };
        b.validate(grid)?;
        Ok(b)
    }

    pub fn constant(grid: &Grid, lo: f64, hi: f64) -> Result<Self> {
        ControlBox::new(
            grid,
            SpaceTime::constant(grid, Bc::Dirichlet, lo),
            SpaceTime::constant(grid, Bc::Dirichlet, hi),
        )
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        self.u_min.check(grid, Bc::Dirichlet, "control.u_min")?;
        self.u_max.check(grid, Bc::Dirichlet, "control.u_max")?;
        for (lo, hi) in self.u_min.levels.iter().zip(&self.u_max.levels) {
            for (&a, &b) in lo.values.iter().zip(&hi.values) {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::config("control", "bounds must be finite"));
                }
                if a > b {
                    return Err(Error::config(
                        "control.u_min",
                        format!("u_min = {a} exceeds u_max = {b}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn midpoint(&self) -> SpaceTime {
        self.u_min.zip_map(&self.u_max, |a, b| 0.5 * (a + b))
    }

    pub fn contains(&self, u: &SpaceTime) -> bool {
        self.u_min
            .levels
            .iter()
            .zip(&self.u_max.levels)
            .zip(&u.levels)
            .all(|((lo, hi), f)| {
                lo.values
                    .iter()
                    .zip(&hi.values)
                    .zip(&f.values)
                    .all(|((a, b), v)| a <= v && v <= b)
            })
    }
}

/// Pointwise clamp of `u` onto the box.
pub fn project_box(bx: &ControlBox, u: &SpaceTime) -> Result<SpaceTime> {
    let shapes_match = u.levels.len() == bx.u_min.levels.len()
        && u.levels
            .iter()
            .zip(&bx.u_min.levels)
            .all(|(a, b)| a.bc == b.bc && a.len() == b.len());
    if !shapes_match {
        return Err(Error::Shape("control does not match the box layout".into()));
    }
    let levels = u
        .levels
        .iter()
        .zip(bx.u_min.levels.iter().zip(&bx.u_max.levels))
        .map(|(f, (lo, hi))| Field {
            bc: f.bc,
            values: f
                .values
                .iter()
                .zip(lo.values.iter().zip(&hi.values))
                .map(|(&v, (&a, &b))| v.max(a).min(b))
                .collect(),
        })
        .collect();
    Ok(SpaceTime { levels })
}

/// `P(u − s ∇J)`.
pub fn projected_step(
    bx: &ControlBox,
    u: &SpaceTime,
    grad: &SpaceTime,
    step: f64,
) -> Result<SpaceTime> {
    let mut trial = u.clone();
    trial.axpy(-step, grad);
    project_box(bx, &trial)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PGSettings {
    /// Step `s₀` of the stationarity residual and the first trial step.
    pub initial_step: f64,
    pub armijo_slope: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub max_iter: usize,
    pub tol_stat: f64,
    pub tol_p: f64,
    /// The first trial step of an iteration is the last accepted step times
    /// this factor, capped at `max_step`.
    pub step_growth: f64,
    pub max_step: f64,
}

impl Default for PGSettings {
    fn default() -> Self {
        PGSettings {
            initial_step: 1.0,
            armijo_slope: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            max_iter: 200,
            tol_stat: 1e-6,
            tol_p: 1e-8,
            step_growth: 2.0,
            max_step: 1e6,
        }
    }
}

impl PGSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("optimizer.initial_step", self.initial_step),
            ("optimizer.tol_stat", self.tol_stat),
            ("optimizer.tol_p", self.tol_p),
            ("optimizer.max_step", self.max_step),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return Err(Error::config(
                "optimizer.armijo_slope",
                "must lie in (0, 1)",
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::config(
                "optimizer.backtrack_factor",
                "must lie in (0, 1)",
            ));
        }
        if !(self.step_growth >= 1.0 && self.step_growth.is_finite()) {
            return Err(Error::config("optimizer.step_growth", "must be at least 1"));
        }
        if self.max_step < self.initial_step {
            return Err(Error::config(
                "optimizer.max_step",
                "must be at least initial_step",
            ));
        }
        if self.max_backtracks == 0 || self.max_iter == 0 {
            return Err(Error::config(
                "optimizer",
                "iteration limits must be positive",
            ));
        }
        Ok(())
    }
}

/// Cost, state, adjoint and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: CostBreakdown,
    pub trajectory: Trajectory,
    pub adjoint: AdjointPair,
    pub gradient: SpaceTime,
}

pub fn evaluate_cost(
    problem: &StateProblem,
    objective: &ObjectiveSpec,
    u: &SpaceTime,
) -> Result<(CostBreakdown, Trajectory)> {
    let traj = solve_state(problem, u)?;
    let cost = objective.eval_cost(&problem.grid, &traj)?;
    Ok((cost, traj))
}

pub fn evaluate_gradient(
    problem: &StateProblem,
    objective: &ObjectiveSpec,
    u: &SpaceTime,
) -> Result<Evaluation> {
    let (cost, trajectory) = evaluate_cost(problem, objective, u)?;
    let adjoint = solve_adjoint(problem, &trajectory, objective)?;
    let gradient = gradient_from_adjoint(problem, &adjoint);
    Ok(Evaluation {
        cost,
        trajectory,
        adjoint,
        gradient,
    })
}

/// One row of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub interface: f64,
    pub temperature: f64,
    /// Step accepted to reach the next iterate, zero on the final row.
    pub step: f64,
    /// Projected-gradient residual `‖u − P(u − s₀∇J(u))‖_Q`.
    pub residual: f64,
    pub backtracks: usize,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeStatus {
    Converged,
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub control: SpaceTime,
    pub status: OptimizeStatus,
    pub history: Vec<IterationRecord>,
    /// Everything evaluated at the returned control.
    pub evaluation: Evaluation,
}

impl OptimizeResult {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }
}

/// Projected gradient descent from `u_init` (box midpoint when `None`).
///
/// Stops when the projected-gradient residual drops below
/// `tol_stat · (1 + |J|)`, when the line search is exhausted (`Stalled`) or
/// after `max_iter` gradient evaluations.
pub fn optimize(
    problem: &StateProblem,
    objective: &ObjectiveSpec,
    bx: &ControlBox,
    settings: &PGSettings,
    u_init: Option<&SpaceTime>,
) -> Result<OptimizeResult> {
    problem.potential.require_smooth("optimize")?;
    settings.validate()?;
    let g = &problem.grid;
    bx.validate(g)?;
    let mut u = match u_init {
        Some(u0) => {
            u0.check(g, Bc::Dirichlet, "control.u_init")?;
            project_box(bx, u0)?
        }
        None => bx.midpoint(),
    };
    let mut eval = evaluate_gradient(problem, objective, &u)?;
    let mut history = Vec::new();
    let mut step = settings.initial_step;
    let newton_total = |t: &Trajectory| t.newton_iterations.iter().sum::<usize>();

    for iter in 0..settings.max_iter {
        let j = eval.cost.total;
        let stationary = projected_step(bx, &u, &eval.gradient, settings.initial_step)?;
        let residual = norm_q(g, &stationary.zip_map(&u, |a, b| a - b))?;
        let mut record = IterationRecord {
            iter,
            cost: j,
            interface: eval.cost.interface,
            temperature: eval.cost.temperature,
            step: 0.0,
            residual,
            backtracks: 0,
            newton_iterations: newton_total(&eval.trajectory),
        };
        debug!("iter {iter}: J = {j:.10e}, residual = {residual:.3e}");
        if residual <= settings.tol_stat * (1.0 + j.abs()) {
            history.push(record);
            info!("converged after {iter} iterations, J = {j:.10e}");
            return Ok(OptimizeResult {
                control: u,
                status: OptimizeStatus::Converged,
                history,
                evaluation: eval,
            });
        }
        if iter + 1 == settings.max_iter {
            history.push(record);
            break;
        }

        let mut trial_step = (step * settings.step_growth).min(settings.max_step);
        let mut accepted = None;
        for backtrack in 0..=settings.max_backtracks {
            let trial = projected_step(bx, &u, &eval.gradient, trial_step)?;
            let moved = norm_q(g, &trial.zip_map(&u, |a, b| a - b))?;
            // A failed forward solve at a trial point counts as a rejected step.
            let cost = match evaluate_cost(problem, objective, &trial) {
                Ok((c, _)) => Some(c.total),
                Err(Error::StepFailure { .. }) | Err(Error::Domain { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some(c) = cost {
                if c <= j - settings.armijo_slope / trial_step * moved * moved {
                    accepted = Some((trial, backtrack));
                    break;
                }
            }
            trial_step *= settings.backtrack_factor;
        }
        let Some((next, backtracks)) = accepted else {
            history.push(record);
            info!("line search exhausted at iteration {iter}, J = {j:.10e}");
            return Ok(OptimizeResult {
                control: u,
                status: OptimizeStatus::Stalled,
                history,
                evaluation: eval,
            });
        };
        record.step = trial_step;
        record.backtracks = backtracks;
        history.push(record);
        step = trial_step;
        u = next;
        eval = evaluate_gradient(problem, objective, &u)?;
    }
    info!("iteration limit reached, J = {:.10e}", eval.cost.total);
    Ok(OptimizeResult {
        control: u,
        status: OptimizeStatus::MaxIterations,
        history,
        evaluation: eval,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BangBangLabel {
    AtMin,
    AtMax,
    Undetermined,
}

/// Labels on levels `1..=N` of the control layout (level 0 is left empty).
#[derive(Debug, Clone, PartialEq)]
pub struct BangBangReport {
    pub labels: Vec<Vec<BangBangLabel>>,
    /// Nodes labeled `AtMin` or `AtMax`.
    pub determined: usize,
    /// Determined nodes where the control is not at the predicted bound.
    pub violations: usize,
}

impl BangBangReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.determined == 0 {
            0.0
        } else {
            self.violations as f64 / self.determined as f64
        }
    }
}

/// Reads off `u = u_min` where `m p > 0` and `u = u_max` where `m p < 0`,
/// treating `|p| ≤ tol_p` or `m = 0` as undetermined, and counts the nodes
/// whose control sits farther than `tol_u` from the predicted bound.
pub fn classify_bang_bang(
    bx: &ControlBox,
    u: &SpaceTime,
    adj: &AdjointPair,
    m_interior: &Field,
    tol_p: f64,
    tol_u: f64,
) -> BangBangReport {
    let mut labels = vec![Vec::new()];
    let (mut determined, mut violations) = (0, 0);
    for n in 1..u.levels.len() {
        let p = adj.p_for_control(n);
        let row = p
            .values
            .iter()
            .zip(&m_interior.values)
            .enumerate()
            .map(|(i, (&p, &m))| {
                let label = if m <= 0.0 || p.abs() <= tol_p {
                    BangBangLabel::Undetermined
                } else if p > 0.0 {
                    BangBangLabel::AtMin
                } else {
                    BangBangLabel::AtMax
                };
                let target = match label {
                    BangBangLabel::AtMin => bx.u_min.levels[n].values[i],
                    BangBangLabel::AtMax => bx.u_max.levels[n].values[i],
                    BangBangLabel::Undetermined => return label,
                };
                determined += 1;
                if (u.levels[n].values[i] - target).abs() > tol_u {
                    violations += 1;
                }
                label
            })
            .collect();
        labels.push(row);
    }
    BangBangReport {
        labels,
        determined,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::inner_product_q;
    use crate::potentials::PotentialSpec;

    fn grid() -> Grid {
        Grid::interval(1.0, 8, 6, 0.5).unwrap()
    }

    fn problem(g: &Grid, m: f64) -> StateProblem {
        StateProblem::new(
            g.clone(),
            PotentialSpec::regular(),
            1.0,
            Field::constant(g, Bc::Neumann, m),
            Field::zeros(g, Bc::Dirichlet),
            Field::from_fn(g, Bc::Neumann, |x| {
                0.6 * (std::f64::consts::PI * x[0]).cos()
            }),
        )
        .unwrap()
    }

    #[test]
    fn clamp_and_idempotence() {
        let g = grid();
        let bx = ControlBox::constant(&g, -1.0, 1.0).unwrap();
        let u = SpaceTime::constant(&g, Bc::Dirichlet, 10.0);
        let pu = project_box(&bx, &u).unwrap();
        assert_eq!(pu, SpaceTime::constant(&g, Bc::Dirichlet, 1.0));
        assert_eq!(project_box(&bx, &pu).unwrap(), pu);
        assert!(bx.contains(&pu));
    }

    #[test]
    fn bad_boxes_are_rejected() {
        let g = grid();
        assert!(matches!(
            ControlBox::constant(&g, 1.0, -1.0),
            Err(Error::Config { .. })
        ));
        assert!(ControlBox::constant(&g, f64::NEG_INFINITY, 1.0).is_err());
        let other = Grid::interval(1.0, 4, 6, 0.5).unwrap();
        let bx = ControlBox::constant(&g, -1.0, 1.0).unwrap();
        assert!(matches!(
            project_box(&bx, &SpaceTime::zeros(&other, Bc::Dirichlet)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn settings_validation() {
        assert!(PGSettings::default().validate().is_ok());
        let bad = PGSettings {
            armijo_slope: 1.5,
            ..PGSettings::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_weight_returns_initial_control() {
        let g = grid();
        let p = problem(&g, 0.0);
        let obj = ObjectiveSpec::constant_targets(&g, 1.0, 0.1, 1e-3, 1.0, 2.0).unwrap();
        let bx = ControlBox::constant(&g, -2.0, 3.0).unwrap();
        let res = optimize(&p, &obj, &bx, &PGSettings::default(), None).unwrap();
        assert_eq!(res.status, OptimizeStatus::Converged);
        assert_eq!(res.history.len(), 1);
        assert_eq!(res.final_residual(), 0.0);
        assert_eq!(res.control, bx.midpoint());
    }

    #[test]
    fn attained_target_is_optimal() {
        let g = grid();
        let p = problem(&g, 1.0);
        let u0 = SpaceTime::constant(&g, Bc::Dirichlet, 0.5);
        let traj = solve_state(&p, &u0).unwrap();
        let mut obj = ObjectiveSpec::constant_targets(&g, 0.0, 0.1, 1e-3, 0.0, 0.0).unwrap();
        obj.chi = traj.phi.map(|r| obj.g(r));
        let bx = ControlBox::constant(&g, -1.0, 1.0).unwrap();
        let res = optimize(&p, &obj, &bx, &PGSettings::default(), Some(&u0)).unwrap();
        assert_eq!(res.status, OptimizeStatus::Converged);
        assert_eq!(res.history[0].cost, 0.0);
        assert_eq!(res.history.len(), 1);
    }

    #[test]
    fn descent_is_monotone_and_stationary() {
        let g = grid();
        let p = problem(&g, 1.0);
        let obj = ObjectiveSpec::constant_targets(&g, 1.0, 0.1, 1e-3, 0.0, 0.8).unwrap();
        let bx = ControlBox::constant(&g, -1.0, 1.0).unwrap();
        let res = optimize(&p, &obj, &bx, &PGSettings::default(), None).unwrap();
        assert_eq!(
            res.status,
            OptimizeStatus::Converged,
            "{:?}",
            res.history.last()
        );
        for w in res.history.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
        assert!(bx.contains(&res.control));
        // Variational inequality against random admissible controls.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let us = &res.control;
        for _ in 0..50 {
            let v = SpaceTime::from_fn(&g, Bc::Dirichlet, |_, _| rng.gen_range(-1.0..=1.0));
            let d = v.zip_map(us, |a, b| a - b);
            let lhs = inner_product_q(&g, &res.evaluation.gradient, &d).unwrap();
            assert!(lhs >= -10.0 * 1e-6 * norm_q(&g, &d).unwrap(), "{lhs}");
        }
    }

    #[test]
    fn gradient_scaling_leaves_step_unchanged() {
        let g = grid();
        let bx = ControlBox::constant(&g, -1.0, 1.0).unwrap();
        let u = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| (t + x[0]).sin());
        let grad = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| 3.0 * (t * x[0]).cos() - 1.0);
        let a = projected_step(&bx, &u, &grad, 0.75).unwrap();
        let b = projected_step(&bx, &u, &grad.scaled(4.0), 0.75 / 4.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bang_bang_labels() {
        let g = grid();
        let bx = ControlBox::constant(&g, -1.0, 2.0).unwrap();
        let n = g.node_count(Bc::Dirichlet);
        let mut p = SpaceTime::zeros(&g, Bc::Dirichlet);
        for (k, level) in p.levels.iter_mut().enumerate() {
            for (i, v) in level.values.iter_mut().enumerate() {
                *v = if i % 3 == 0 {
                    1.0
                } else if i % 3 == 1 {
                    -1.0
                } else {
                    0.0
                } * (k as f64 + 1.0);
            }
        }
        let adj = AdjointPair {
            p: p.clone(),
            q: SpaceTime::zeros(&g, Bc::Neumann),
        };
        let mut u = SpaceTime::zeros(&g, Bc::Dirichlet);
        for level in 1..=g.time_steps() {
            for i in 0..n {
                u.levels[level].values[i] = match i % 3 {
                    0 => -1.0,
                    1 => 2.0,
                    _ => 0.3,
                };
            }
        }
        let m = Field::constant(&g, Bc::Dirichlet, 1.0);
        let rep = classify_bang_bang(&bx, &u, &adj, &m, 1e-8, 1e-6);
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.labels[1][0], BangBangLabel::AtMin);
        assert_eq!(rep.labels[1][1], BangBangLabel::AtMax);
        assert_eq!(rep.labels[1][2], BangBangLabel::Undetermined);

        let none = classify_bang_bang(&bx, &u, &adj, &m.scaled(0.0), 1e-8, 1e-6);
        assert_eq!(none.determined, 0);
        assert!(none.labels[1..]
            .iter()
            .flatten()
            .all(|&l| l == BangBangLabel::Undetermined));

        u.levels[2].values[0] = 0.0;
        let rep = classify_bang_bang(&bx, &u, &adj, &m, 1e-8, 1e-6);
        assert_eq!(rep.violations, 1);
    }
}
