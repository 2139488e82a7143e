//! Pointwise bounds of computed states: separation of φ from the singular
//! values of β and refinement stability of `max |θ|`.

use serde::Serialize;

use crate::error::Result;
use crate::grid::{SpaceTime, Trajectory};
use crate::potentials::PotentialSpec;
use crate::state::{solve_state, StateProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationBounds {
    pub phi_lo: f64,
    pub phi_hi: f64,
    /// Distance from `[phi_lo, phi_hi]` to the boundary of the domain of β
    /// (infinite for an unbounded domain).
    pub margin: f64,
}

impl SeparationBounds {
    pub fn of(potential: &PotentialSpec, traj: &Trajectory) -> Self {
        let (lo, hi) = traj
            .phi
            .levels
            .iter()
            .flat_map(|f| &f.values)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (a, b) = potential.domain();
        SeparationBounds {
            phi_lo: lo,
            phi_hi: hi,
            margin: (lo - a).min(b - hi),
        }
    }

    pub fn merge(self, other: SeparationBounds) -> SeparationBounds {
        SeparationBounds {
            phi_lo: self.phi_lo.min(other.phi_lo),
            phi_hi: self.phi_hi.max(other.phi_hi),
            margin: self.margin.min(other.margin),
        }
    }
}

/// Tightest bounds over forward runs with every control in `controls`.
pub fn separation_audit(
    problem: &StateProblem,
    controls: &[SpaceTime],
) -> Result<SeparationBounds> {
    let mut acc: Option<SeparationBounds> = None;
    for u in controls {
        let b = SeparationBounds::of(&problem.potential, &solve_state(problem, u)?);
        acc = Some(acc.map_or(b, |a| a.merge(b)));
    }
    Ok(acc.unwrap_or(SeparationBounds {
        phi_lo: f64::NAN,
        phi_hi: f64::NAN,
        margin: f64::NAN,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinfRefinement {
    pub coarse: f64,
    pub fine: f64,
    /// `|fine − coarse| / coarse`
    pub relative_change: f64,
}

/// `max |θ|` over `Q` for two runs of the same continuous data.
pub fn theta_linf_refinement(coarse: &Trajectory, fine: &Trajectory) -> LinfRefinement {
    let (a, b) = (
        coarse
            .theta
            .levels
            .iter()
            .fold(0.0f64, |m, f| m.max(f.max_abs())),
        fine.theta
            .levels
            .iter()
            .fold(0.0f64, |m, f| m.max(f.max_abs())),
    );
    LinfRefinement {
        coarse: a,
        fine: b,
        relative_change: if a > 0.0 { (b - a).abs() / a } else { b },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bc, Field, Grid};

    fn log_problem(cells: usize, steps: usize) -> StateProblem {
        let g = Grid::interval(1.0, cells, steps, 1.0).unwrap();
        StateProblem::new(
            g.clone(),
            PotentialSpec::logarithmic(1.0).unwrap(),
            1.0,
            Field::constant(&g, Bc::Neumann, 1.0),
            Field::zeros(&g, Bc::Dirichlet),
            Field::from_fn(&g, Bc::Neumann, |x| {
                0.9 * (std::f64::consts::PI * x[0]).cos()
            }),
        )
        .unwrap()
    }

    #[test]
    fn logarithmic_runs_stay_separated() {
        let p = log_problem(32, 32);
        let controls: Vec<_> = [-5.0, 0.0, 5.0]
            .iter()
            .map(|&c| p.constant_control(c))
            .collect();
        let b = separation_audit(&p, &controls).unwrap();
        assert!(b.phi_lo <= b.phi_hi);
        assert!(b.margin > 1e-6, "{b:?}");
    }

    #[test]
    fn theta_bound_is_refinement_stable() {
        let run = |n: usize| {
            let p = log_problem(n, n);
            solve_state(&p, &p.constant_control(3.0)).unwrap()
        };
        let r = theta_linf_refinement(&run(32), &run(64));
        assert!(r.relative_change < 0.05, "{r:?}");
    }
}
