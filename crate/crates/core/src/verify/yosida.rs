//! Continuation of the obstacle problem in the Yosida parameter.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{norm_q, SpaceTime};
use crate::potentials::{PotentialKind, PotentialSpec};
use crate::state::{solve_state, StateProblem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YosidaRow {
    pub eps: f64,
    /// `max |ξ_ε|` over levels `1..=N`.
    pub max_xi: Option<f64>,
    /// `max |φ_ε| − 1`, positive when the regularized solution leaves `[−1, 1]`.
    pub overshoot: Option<f64>,
    /// `‖φ_ε − φ_{ε_next}‖_{L²(Q)}` against the next entry of the list.
    pub diff_to_next: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YosidaTable {
    pub rows: Vec<YosidaRow>,
}

impl YosidaTable {
    /// Ratios of successive differences `d_{k+1} / d_k`.
    /// Entries are `None` where a difference is missing or the earlier one is zero.
    pub fn diff_ratios(&self) -> Vec<Option<f64>> {
        let n = self.rows.len().saturating_sub(2);
        (0..n)
            .map(
                |k| match (self.rows[k].diff_to_next, self.rows[k + 1].diff_to_next) {
                    (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                    _ => None,
                },
            )
            .collect()
    }

    /// Relative growth `max|ξ_{k+1}| / max|ξ_k| − 1` between successive rows.
    pub fn xi_growth(&self) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| match (w[0].max_xi, w[1].max_xi) {
                (Some(a), Some(b)) if a > 0.0 => Some(b / a - 1.0),
                _ => None,
            })
            .collect()
    }
}

/// Forward solves of the obstacle problem for each `ε` (the list is assumed
/// ordered from coarse to fine). Failed solves are recorded per row.
pub fn yosida_continuation(
    problem: &StateProblem,
    eps_list: &[f64],
    u: &SpaceTime,
) -> Result<YosidaTable> {
    let PotentialKind::Obstacle { c, .. } = problem.potential.kind else {
        return Err(Error::Unsupported(
            "Yosida continuation needs the obstacle potential".into(),
        ));
    };
    let g = &problem.grid;
    let mut runs = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut p = problem.clone();
        p.potential = PotentialSpec::with_margin(
            PotentialKind::Obstacle { c, eps_yosida: eps },
            problem.potential.margin,
        )?;
        runs.push(solve_state(&p, u));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        let row = match run {
            Ok(traj) => {
                let max_phi = traj.phi.max_abs();
                let diff_to_next = match runs.get(k + 1) {
                    Some(Ok(next)) => Some(norm_q(g, &traj.phi.zip_map(&next.phi, |a, b| a - b))?),
                    _ => None,
                };
                YosidaRow {
                    eps: eps_list[k],
                    max_xi: Some(traj.xi.max_abs()),
                    overshoot: Some(max_phi - 1.0),
                    diff_to_next,
                    failure: None,
                }
            }
            Err(e) => YosidaRow {
                eps: eps_list[k],
                max_xi: None,
                overshoot: None,
                diff_to_next: None,
                failure: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(YosidaTable { rows })
}
