//! Linearized state system around a computed trajectory:
//!
//! ```text
//! ∂ₜΘ − ΔΘ + ℓ ∂ₜΦ = m h
//! ∂ₜΦ − ΔΦ + γ'(φ̄) Φ = ℓ Θ,     Θ(0) = Φ(0) = 0
//! ```
//!
//! Each implicit step solves with the forward Newton Jacobian evaluated at
//! the converged base state `φ̄ⁿ⁺¹`, so `(Θ, Φ)` is the exact derivative of
//! the discrete control-to-state map.

use crate::error::{Error, Result};
use crate::grid::{Bc, Field, SpaceTime, Trajectory};
use crate::linalg::max_abs;
use crate::state::{step_jacobian, Dofs, StateProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPair {
    pub theta: SpaceTime,
    pub phi: SpaceTime,
}

/// Largest relative linear-solve residual accepted before reporting failure.
const LINEAR_RESIDUAL_TOL: f64 = 1e-9;

pub fn solve_linearized(
    problem: &StateProblem,
    base: &Trajectory,
    h: &SpaceTime,
) -> Result<SensitivityPair> {
    problem.potential.require_smooth("solve_linearized")?;
    let g = &problem.grid;
    h.check(g, Bc::Dirichlet, "direction")?;
    let dt = g.dt();
    let ell = problem.ell;
    let dofs = Dofs::new(g);
    let m_int = problem.m_interior();

    let mut theta = vec![Field::zeros(g, Bc::Dirichlet)];
    let mut phi = vec![Field::zeros(g, Bc::Neumann)];
    for n in 0..g.time_steps() {
        let (t_old, p_old) = (&theta[n], &phi[n]);
        // Right-hand side B xⁿ + dt C hⁿ⁺¹ of the scaled system.
        let mut rhs_theta = t_old.values.clone();
        for (k, &j) in dofs.interior.iter().enumerate() {
            rhs_theta[k] +=
                ell * p_old.values[j] + dt * m_int.values[k] * h.levels[n + 1].values[k];
        }
        let rhs = dofs.pack(&rhs_theta, &p_old.values);
        let jac = step_jacobian(problem, &dofs, &base.phi.levels[n + 1].values)?;
        let x = jac.factor()?.solve(&rhs);
        check_linear_residual(&jac.matvec(&x), &rhs)?;
        let (t_new, p_new) = dofs.unpack(&x);
        theta.push(Field {
            bc: Bc::Dirichlet,
            values: t_new,
        });
        phi.push(Field {
            bc: Bc::Neumann,
            values: p_new,
        });
    }
    Ok(SensitivityPair {
        theta: SpaceTime { levels: theta },
        phi: SpaceTime { levels: phi },
    })
}

pub(crate) fn check_linear_residual(ax: &[f64], b: &[f64]) -> Result<()> {
    let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    let (res, scale) = (max_abs(&r), max_abs(b));
    if !(res <= LINEAR_RESIDUAL_TOL * scale) {
        return Err(Error::Numerical(format!(
            "linear solve residual {res:.3e} exceeds {LINEAR_RESIDUAL_TOL:.0e} × {scale:.3e}"
        )));
    }
    Ok(())
}
