//! Continuous dependence of the state on the control, measured in the norms
//!
//! ```text
//! ‖θ₁ − θ₂‖_{L²(H)} + ‖1*(θ₁ − θ₂)‖_{L∞(V₀)} + ‖φ₁ − φ₂‖_{L∞(H) ∩ L²(V)}
//!     ≤ C' ‖1*(u₁ − u₂)‖_{L²(H)} ≤ C'' ‖u₁ − u₂‖_{L²(H)}
//! ```

use serde::Serialize;

use crate::error::Result;
use crate::grid::{
    inner_product, laplacian_apply, norm_q, time_antiderivative, Field, Grid, SpaceTime,
};
use crate::state::{solve_state, StateProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DependenceRow {
    pub scale: f64,
    pub lhs: f64,
    /// `‖1*(u₁ − u₂)‖_{L²(H)}`
    pub rhs_integrated: f64,
    /// `‖u₁ − u₂‖_{L²(H)}`
    pub rhs_plain: f64,
    /// `lhs / rhs_integrated`, zero when both vanish.
    pub ratio: f64,
    /// `‖1*(u₁ − u₂)‖_{L∞(H)} ≤ √T ‖u₁ − u₂‖_{L²(H)}` and the matching
    /// rectangle-rule bound `‖1*v‖_{L²(H)} ≤ √(T(T + dt)/2) ‖v‖_{L²(H)}`.
    pub antiderivative_bounds_hold: bool,
}

fn h1_sq(grid: &Grid, f: &Field) -> Result<f64> {
    Ok(inner_product(grid, f, f)? - inner_product(grid, &laplacian_apply(grid, f), f)?)
}

fn l2_sq(grid: &Grid, f: &Field) -> Result<f64> {
    inner_product(grid, f, f)
}

pub fn continuous_dependence_check(
    problem: &StateProblem,
    u1: &SpaceTime,
    u2: &SpaceTime,
) -> Result<DependenceRow> {
    let g = &problem.grid;
    let a = solve_state(problem, u1)?;
    let b = solve_state(problem, u2)?;
    let dtheta = a.theta.zip_map(&b.theta, |x, y| x - y);
    let dphi = a.phi.zip_map(&b.phi, |x, y| x - y);
    let du = u1.zip_map(u2, |x, y| x - y);
    let dt = g.dt();

    let theta_l2 = norm_q(g, &dtheta)?;
    let int_theta = time_antiderivative(g, &dtheta);
    let mut int_theta_linf = 0.0f64;
    let mut phi_linf = 0.0f64;
    let mut phi_l2v = 0.0;
    for n in 0..=g.time_steps() {
        int_theta_linf = int_theta_linf.max(h1_sq(g, &int_theta.levels[n])?.sqrt());
        phi_linf = phi_linf.max(l2_sq(g, &dphi.levels[n])?.sqrt());
        if n > 0 {
            phi_l2v += dt * h1_sq(g, &dphi.levels[n])?;
        }
    }
    let lhs = theta_l2 + int_theta_linf + phi_linf + phi_l2v.sqrt();

    let int_u = time_antiderivative(g, &du);
    let rhs_integrated = norm_q(g, &int_u)?;
    let rhs_plain = norm_q(g, &du)?;
    let int_u_linf = int_u
        .levels
        .iter()
        .map(|f| l2_sq(g, f).map(f64::sqrt))
        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
    let t = g.final_time();
    let slack = 1.0 + 1e-12;
    let antiderivative_bounds_hold = int_u_linf <= slack * t.sqrt() * rhs_plain
        && rhs_integrated <= slack * (t * (t + dt) / 2.0).sqrt() * rhs_plain;
    let ratio = if rhs_integrated > 0.0 {
        lhs / rhs_integrated
    } else {
        0.0
    };
    Ok(DependenceRow {
        scale: 1.0,
        lhs,
        rhs_integrated,
        rhs_plain,
        ratio,
        antiderivative_bounds_hold,
    })
}

/// `continuous_dependence_check(u, u + s h)` for each `s`.
pub fn dependence_family(
    problem: &StateProblem,
    u: &SpaceTime,
    h: &SpaceTime,
    scales: &[f64],
) -> Result<Vec<DependenceRow>> {
    scales
        .iter()
        .map(|&s| {
            let mut v = u.clone();
            v.axpy(s, h);
            let mut row = continuous_dependence_check(problem, u, &v)?;
            row.scale = s;
            Ok(row)
        })
        .collect()
}

/// `max ratio / min ratio − 1` over the family.
pub fn ratio_variation(rows: &[DependenceRow]) -> f64 {
    let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r.ratio), hi.max(r.ratio))
    });
    if lo > 0.0 {
        hi / lo - 1.0
    } else {
        f64::INFINITY
    }
}
