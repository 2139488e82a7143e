//! Discrete energy balance of the state scheme.
//!
//! Testing the θ-equation with `θⁿ⁺¹` and the φ-equation with
//! `φⁿ⁺¹ − φⁿ` gives, up to `O(dt²)` per step,
//!
//! ```text
//! Eⁿ⁺¹ − Eⁿ + dt ‖∇θⁿ⁺¹‖² + ‖φⁿ⁺¹ − φⁿ‖² / dt = dt ⟨m uⁿ⁺¹, θⁿ⁺¹⟩
//! E = ½‖θ‖² + ½‖∇φ‖² + ∫ (β̂ + π̂)(φ)
//! ```

use serde::Serialize;

use crate::error::Result;
use crate::grid::{
    inner_product, laplacian_apply, restrict_to_interior, Bc, Field, Grid, SpaceTime, Trajectory,
};
use crate::potentials::PotentialSpec;
use crate::state::{solve_state, StateProblem};

use super::observed_order;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    /// Step from level `step − 1` to `step`.
    pub step: usize,
    pub energy: f64,
    /// `dt ‖∇θⁿ⁺¹‖² + ‖φⁿ⁺¹ − φⁿ‖² / dt`
    pub dissipation: f64,
    /// `dt ⟨m uⁿ⁺¹, θⁿ⁺¹⟩`
    pub work: f64,
    /// Left-hand side minus right-hand side of the balance.
    pub defect: f64,
}

/// `‖∇f‖² = −⟨Δf, f⟩` in the layout of `f`.
fn grad_norm_sq(grid: &Grid, f: &Field) -> Result<f64> {
    Ok(-inner_product(grid, &laplacian_apply(grid, f), f)?)
}

pub fn energy(grid: &Grid, potential: &PotentialSpec, theta: &Field, phi: &Field) -> Result<f64> {
    let density = phi
        .values
        .iter()
        .map(|&r| potential.energy_density(r))
        .collect::<Result<Vec<_>>>()?;
    let w = grid.weights(Bc::Neumann);
    let bulk: f64 = density.iter().zip(&w).map(|(d, w)| d * w).sum();
    Ok(0.5 * inner_product(grid, theta, theta)? + 0.5 * grad_norm_sq(grid, phi)? + bulk)
}

/// Energy at level 0 followed by one record per step (record 0 has zero
/// dissipation, work and defect).
pub fn energy_audit(
    problem: &StateProblem,
    traj: &Trajectory,
    u: &SpaceTime,
) -> Result<Vec<EnergyRecord>> {
    let g = &problem.grid;
    let dt = g.dt();
    let m = restrict_to_interior(g, &problem.m);
    let mut records = Vec::with_capacity(g.time_steps() + 1);
    let mut prev = energy(
        g,
        &problem.potential,
        &traj.theta.levels[0],
        &traj.phi.levels[0],
    )?;
    records.push(EnergyRecord {
        step: 0,
        energy: prev,
        dissipation: 0.0,
        work: 0.0,
        defect: 0.0,
    });
    for n in 1..=g.time_steps() {
        let theta = &traj.theta.levels[n];
        let phi = &traj.phi.levels[n];
        let e = energy(g, &problem.potential, theta, phi)?;
        let dphi = phi.zip_map(&traj.phi.levels[n - 1], |a, b| a - b);
        let dissipation = dt * grad_norm_sq(g, theta)? + inner_product(g, &dphi, &dphi)? / dt;
        let mu = u.levels[n].zip_map(&m, |u, m| u * m);
        let work = dt * inner_product(g, &mu, theta)?;
        records.push(EnergyRecord {
            step: n,
            energy: e,
            dissipation,
            work,
            defect: e - prev + dissipation - work,
        });
        prev = e;
    }
    Ok(records)
}

pub fn max_defect(records: &[EnergyRecord]) -> f64 {
    records.iter().fold(0.0, |m, r| m.max(r.defect.abs()))
}

/// Largest single-step energy increase (zero for a dissipative run).
pub fn max_energy_increase(records: &[EnergyRecord]) -> f64 {
    records
        .windows(2)
        .fold(0.0, |m, w| m.max(w[1].energy - w[0].energy))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRefinement {
    pub time_steps: Vec<usize>,
    pub max_defect: Vec<f64>,
    pub max_increase: Vec<f64>,
    /// Least-squares slope of `log max_defect` against `log dt`.
    pub order: f64,
}

/// Uncontrolled relaxation runs at `problem`'s grid with each step count.
pub fn energy_refinement(problem: &StateProblem, time_steps: &[usize]) -> Result<EnergyRefinement> {
    let mut dts = Vec::new();
    let mut defects = Vec::new();
    let mut increases = Vec::new();
    for &n in time_steps {
        let mut p = problem.clone();
        p.grid = problem.grid.with_time_steps(n)?;
        p.mms_source_phi = None;
        let u = SpaceTime::zeros(&p.grid, Bc::Dirichlet);
        let traj = solve_state(&p, &u)?;
        let rec = energy_audit(&p, &traj, &u)?;
        dts.push(p.grid.dt());
        defects.push(max_defect(&rec));
        increases.push(max_energy_increase(&rec));
    }
    Ok(EnergyRefinement {
        time_steps: time_steps.to_vec(),
        order: observed_order(&dts, &defects),
        max_defect: defects,
        max_increase: increases,
    })
}
