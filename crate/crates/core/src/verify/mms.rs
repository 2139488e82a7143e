//! Manufactured-solution convergence study on the unit interval.
//!
//! The θ-source enters through the control (with `m ≡ 1`), the φ-source
//! through the manufactured right-hand side of the state problem. Both are
//! sampled at the new time level, like the scheme itself.
//!
//! * space: `θ = t sin(πx)`, `φ = ½ cos(πx)`; linear in time, so implicit
//!   Euler is exact in time and only the stencil error remains.
//! * time: `θ = sin(t) x(1 − x)`, `φ = ½ cos(t)`; the 3-point stencil is
//!   exact for both, so only the time error remains.
//! * exact: `θ = t x(1 − x)`, `φ = ⅕ + t/10`; reproduced to solver tolerance.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::Result;
use crate::grid::{Bc, Field, Grid, SpaceTime};
use crate::potentials::PotentialSpec;
use crate::state::{solve_state, StateProblem};

use super::observed_order;

/// A manufactured pair with its derivatives, `f(t, x)`.
struct Manufactured {
    theta: fn(f64, f64) -> f64,
    theta_t: fn(f64, f64) -> f64,
    theta_xx: fn(f64, f64) -> f64,
    phi: fn(f64, f64) -> f64,
    phi_t: fn(f64, f64) -> f64,
    phi_xx: fn(f64, f64) -> f64,
}

const SPACE: Manufactured = Manufactured {
    theta: |t, x| t * (PI * x).sin(),
    theta_t: |_, x| (PI * x).sin(),
    theta_xx: |t, x| -PI * PI * t * (PI * x).sin(),
    phi: |_, x| 0.5 * (PI * x).cos(),
    phi_t: |_, _| 0.0,
    phi_xx: |_, x| -0.5 * PI * PI * (PI * x).cos(),
};

const TIME: Manufactured = Manufactured {
    theta: |t, x| t.sin() * x * (1.0 - x),
    theta_t: |t, x| t.cos() * x * (1.0 - x),
    theta_xx: |t, _| -2.0 * t.sin(),
    phi: |t, _| 0.5 * t.cos(),
    phi_t: |t, _| -0.5 * t.sin(),
    phi_xx: |_, _| 0.0,
};

const EXACT: Manufactured = Manufactured {
    theta: |t, x| t * x * (1.0 - x),
    theta_t: |_, x| x * (1.0 - x),
    theta_xx: |t, _| -2.0 * t,
    phi: |t, _| 0.2 + 0.1 * t,
    phi_t: |_, _| 0.1,
    phi_xx: |_, _| 0.0,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    /// Mesh size `h` or time step `dt` of each run.
    pub sizes: Vec<f64>,
    /// Max-norm error over all nodes and levels, θ and φ combined.
    pub errors: Vec<f64>,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmsReport {
    pub space: ConvergenceTable,
    pub time: ConvergenceTable,
    /// Error of the stencil-exact case on the coarsest space grid.
    pub exact_error: f64,
}

fn solve_manufactured(
    ms: &Manufactured,
    potential: &PotentialSpec,
    ell: f64,
    cells: usize,
    steps: usize,
    final_time: f64,
) -> Result<f64> {
    let g = Grid::interval(1.0, cells, steps, final_time)?;
    let mut p = StateProblem::new(
        g.clone(),
        *potential,
        ell,
        Field::constant(&g, Bc::Neumann, 1.0),
        Field::from_fn(&g, Bc::Dirichlet, |x| (ms.theta)(0.0, x[0])),
        Field::from_fn(&g, Bc::Neumann, |x| (ms.phi)(0.0, x[0])),
    )?;
    p.newton.tol_residual = 1e-12;
    let u = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| {
        let x = x[0];
        (ms.theta_t)(t, x) - (ms.theta_xx)(t, x) + ell * (ms.phi_t)(t, x)
    });
    let mut src_err = None;
    let source = SpaceTime::from_fn(&g, Bc::Neumann, |t, x| {
        let x = x[0];
        let phi = (ms.phi)(t, x);
        let gamma = potential.gamma(phi).unwrap_or_else(|e| {
            src_err.get_or_insert(e);
            0.0
        });
        (ms.phi_t)(t, x) - (ms.phi_xx)(t, x) + gamma - ell * (ms.theta)(t, x)
    });
    if let Some(e) = src_err {
        return Err(e);
    }
    p.mms_source_phi = Some(source);
    p.validate()?;
    let traj = solve_state(&p, &u)?;
    let theta_ex = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| (ms.theta)(t, x[0]));
    let phi_ex = SpaceTime::from_fn(&g, Bc::Neumann, |t, x| (ms.phi)(t, x[0]));
    let et = traj.theta.zip_map(&theta_ex, |a, b| a - b).max_abs();
    let ep = traj.phi.zip_map(&phi_ex, |a, b| a - b).max_abs();
    Ok(et.max(ep))
}

/// Space refinement over `cells` (time-exact solution, `time_steps` fixed)
/// and time refinement over `steps` (space-exact solution, `cells[0]` cells).
pub fn mms_convergence(
    potential: &PotentialSpec,
    ell: f64,
    cells: &[usize],
    steps: &[usize],
    final_time: f64,
) -> Result<MmsReport> {
    let coarse_steps = steps.first().copied().unwrap_or(8);
    let coarse_cells = cells.first().copied().unwrap_or(8);
    let mut space = ConvergenceTable {
        sizes: Vec::new(),
        errors: Vec::new(),
        order: f64::NAN,
    };
    for &n in cells {
        space.sizes.push(1.0 / n as f64);
        space.errors.push(solve_manufactured(
            &SPACE,
            potential,
            ell,
            n,
            coarse_steps,
            final_time,
        )?);
    }
    space.order = observed_order(&space.sizes, &space.errors);
    let mut time = ConvergenceTable {
        sizes: Vec::new(),
        errors: Vec::new(),
        order: f64::NAN,
    };
    for &n in steps {
        time.sizes.push(final_time / n as f64);
        time.errors.push(solve_manufactured(
            &TIME,
            potential,
            ell,
            coarse_cells,
            n,
            final_time,
        )?);
    }
    time.order = observed_order(&time.sizes, &time.errors);
    let exact_error = solve_manufactured(
        &EXACT,
        potential,
        ell,
        coarse_cells,
        coarse_steps,
        final_time,
    )?;
    Ok(MmsReport {
        space,
        time,
        exact_error,
    })
}
