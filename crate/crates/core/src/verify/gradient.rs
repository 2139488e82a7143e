//! Finite-difference gradient oracle and the discrete duality identity.

use serde::Serialize;

use crate::adjoint::{gradient_from_adjoint, solve_adjoint, AdjointPair};
use crate::error::Result;
use crate::grid::{inner_product_q, Bc, SpaceTime, Trajectory};
use crate::objective::ObjectiveSpec;
use crate::optimizer::evaluate_cost;
use crate::sensitivity::solve_linearized;
use crate::state::{solve_state, StateProblem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdRow {
    pub s: f64,
    /// `(J(u + s h) − J(u − s h)) / 2s`, `None` when a probe solve failed.
    pub fd: Option<f64>,
    pub adjoint: f64,
    pub rel_error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdTable {
    pub rows: Vec<FdRow>,
}

impl FdTable {
    pub fn row(&self, s: f64) -> Option<&FdRow> {
        self.rows.iter().find(|r| r.s == s)
    }

    /// `|fd(s) − adj| / |fd(s/2) − adj|`, about 4 for a second-order remainder.
    pub fn richardson_ratio(&self, s: f64) -> Option<f64> {
        let a = self.row(s)?;
        let b = self.row(s / 2.0)?;
        let ea = (a.fd? - a.adjoint).abs();
        let eb = (b.fd? - b.adjoint).abs();
        (eb > 0.0).then(|| ea / eb)
    }
}

/// Central differences of `J` along `h` against the adjoint directional
/// derivative `⟨m p, h⟩_Q`.
pub fn fd_gradient_oracle(
    problem: &StateProblem,
    objective: &ObjectiveSpec,
    u: &SpaceTime,
    h: &SpaceTime,
    s_list: &[f64],
) -> Result<FdTable> {
    let g = &problem.grid;
    h.check(g, Bc::Dirichlet, "direction")?;
    let base = solve_state(problem, u)?;
    let adj = solve_adjoint(problem, &base, objective)?;
    let grad = gradient_from_adjoint(problem, &adj);
    let adjoint = inner_product_q(g, &grad, h)?;
    let rows = s_list
        .iter()
        .map(|&s| {
            let probe = |sign: f64| -> Result<f64> {
                let mut v = u.clone();
                v.axpy(sign * s, h);
                Ok(evaluate_cost(problem, objective, &v)?.0.total)
            };
            match probe(1.0).and_then(|jp| Ok((jp, probe(-1.0)?))) {
                Ok((jp, jm)) => {
                    let fd = (jp - jm) / (2.0 * s);
                    let scale = adjoint.abs().max(fd.abs());
                    let rel = if scale > 0.0 {
                        (fd - adjoint).abs() / scale
                    } else {
                        0.0
                    };
                    FdRow {
                        s,
                        fd: Some(fd),
                        adjoint,
                        rel_error: Some(rel),
                        failure: None,
                    }
                }
                Err(e) => FdRow {
                    s,
                    fd: None,
                    adjoint,
                    rel_error: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(FdTable { rows })
}

/// The three pairings of the duality identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityTerms {
    /// `⟨m h, p⟩_Q`
    pub control: f64,
    /// `κ ⟨θ − θ_Q, Θ⟩_Q`
    pub temperature: f64,
    /// `⟨(g(φ) − χ) g'(φ), Φ⟩_Q`
    pub interface: f64,
}

impl DualityTerms {
    pub fn residual(&self) -> f64 {
        let scale = self
            .control
            .abs()
            .max(self.temperature.abs())
            .max(self.interface.abs())
            + f64::MIN_POSITIVE;
        (self.control - self.temperature - self.interface).abs() / scale
    }
}

pub fn duality_terms(
    problem: &StateProblem,
    objective: &ObjectiveSpec,
    base: &Trajectory,
    adj: &AdjointPair,
    h: &SpaceTime,
) -> Result<DualityTerms> {
    let g = &problem.grid;
    let lin = solve_linearized(problem, base, h)?;
    let (phi_src, theta_src) = objective.adjoint_sources(g, base)?;
    Ok(DualityTerms {
        control: inner_product_q(g, &gradient_from_adjoint(problem, adj), h)?,
        temperature: inner_product_q(g, &theta_src, &lin.theta)?,
        interface: inner_product_q(g, &phi_src, &lin.phi)?,
    })
}

/// Relative defect of `⟨m h, p⟩_Q = κ⟨θ − θ_Q, Θ⟩_Q + ⟨(g − χ)g', Φ⟩_Q`.
pub fn duality_residual(
    problem: &StateProblem,
    objective: &ObjectiveSpec,
    base: &Trajectory,
    h: &SpaceTime,
) -> Result<f64> {
    let adj = solve_adjoint(problem, base, objective)?;
    Ok(duality_terms(problem, objective, base, &adj, h)?.residual())
}
