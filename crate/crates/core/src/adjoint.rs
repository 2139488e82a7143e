//! Backward adjoint system and the gradient of the cost.
//!
//! The recursion is the transpose of the discrete sensitivity system with
//! respect to the weighted inner products, marched from a zero terminal
//! state. In the dt-scaled form used by the forward solver it reads, for
//! `k = N, …, 1`,
//!
//! ```text
//! (I − dt Δ_D) pₖ − dt ℓ R qₖ            = dt κ(θₖ − θ_Q,ₖ) + pₖ₊₁
//! ℓ E pₖ + (I − dt Δ_N + dt γ'(φₖ)) qₖ   = dt (g(φₖ) − χₖ) g'(φₖ) + qₖ₊₁ + ℓ E pₖ₊₁
//! ```
//!
//! with `p_{N+1} = q_{N+1} = 0`, which is a backward Euler discretization of
//! `−∂ₜp − Δp − ℓq = κ(θ − θ_Q)` and
//! `−∂ₜq − ℓ∂ₜp − Δq + γ'(φ)q = (g(φ) − χ)g'(φ)`. The left-hand operator is
//! `W⁻¹ Kᵀ W` for the forward Jacobian `K` and quadrature weights `W`, so it
//! is solved as `Kᵀ (W y) = W rhs`.
//!
//! Storage is staggered: level `n` of an [`AdjointPair`] holds `y_{n+1}`, the
//! multiplier of the step that ends at `t_{n+1}`. Level `N` is therefore the
//! exact terminal value zero, and the control at level `n` is paired with
//! adjoint level `n − 1`.

use crate::error::Result;
use crate::grid::{extend_by_zero, Bc, Field, SpaceTime, Trajectory};
use crate::objective::ObjectiveSpec;
use crate::sensitivity::check_linear_residual;
use crate::state::{step_jacobian, Dofs, StateProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointPair {
    /// Dirichlet layout.
    pub p: SpaceTime,
    /// Neumann layout.
    pub q: SpaceTime,
}

impl AdjointPair {
    /// Adjoint temperature paired with the control at `level ∈ 1..=N`.
    pub fn p_for_control(&self, level: usize) -> &Field {
        &self.p.levels[level - 1]
    }
}

pub fn solve_adjoint(
    problem: &StateProblem,
    base: &Trajectory,
    objective: &ObjectiveSpec,
) -> Result<AdjointPair> {
    let (phi_src, theta_src) = objective.adjoint_sources(&problem.grid, base)?;
    solve_adjoint_with_sources(problem, base, &theta_src, &phi_src)
}

/// Backward march with explicit sources on levels `1..=N`: `theta_src`
/// drives the p-equation, `phi_src` the q-equation.
pub fn solve_adjoint_with_sources(
    problem: &StateProblem,
    base: &Trajectory,
    theta_src: &SpaceTime,
    phi_src: &SpaceTime,
) -> Result<AdjointPair> {
    problem.potential.require_smooth("solve_adjoint")?;
    let g = &problem.grid;
    theta_src.check(g, Bc::Dirichlet, "adjoint theta source")?;
    phi_src.check(g, Bc::Neumann, "adjoint phi source")?;
    let n_steps = g.time_steps();
    let dt = g.dt();
    let ell = problem.ell;
    let dofs = Dofs::new(g);
    let wd = g.weights(Bc::Dirichlet);
    let wn = g.weights(Bc::Neumann);
    let w = dofs.pack(&wd, &wn);

    let mut p = vec![Field::zeros(g, Bc::Dirichlet); n_steps + 1];
    let mut q = vec![Field::zeros(g, Bc::Neumann); n_steps + 1];
    // (p_next, q_next) = y_{k+1}, stored at level k.
    for k in (1..=n_steps).rev() {
        let (p_next, q_next) = (&p[k], &q[k]);
        let mut rhs_p = p_next.values.clone();
        for (r, s) in rhs_p.iter_mut().zip(&theta_src.levels[k].values) {
            *r += dt * s;
        }
        let e_p = extend_by_zero(g, p_next);
        let rhs_q: Vec<f64> = q_next
            .values
            .iter()
            .zip(&phi_src.levels[k].values)
            .zip(&e_p.values)
            .map(|((qn, s), ep)| qn + dt * s + ell * ep)
            .collect();
        let rhs: Vec<f64> = dofs
            .pack(&rhs_p, &rhs_q)
            .iter()
            .zip(&w)
            .map(|(r, w)| r * w)
            .collect();
        let jac_t = step_jacobian(problem, &dofs, &base.phi.levels[k].values)?.transpose();
        let z = jac_t.factor()?.solve(&rhs);
        check_linear_residual(&jac_t.matvec(&z), &rhs)?;
        let y: Vec<f64> = z.iter().zip(&w).map(|(z, w)| z / w).collect();
        let (pk, qk) = dofs.unpack(&y);
        p[k - 1] = Field {
            bc: Bc::Dirichlet,
            values: pk,
        };
        q[k - 1] = Field {
            bc: Bc::Neumann,
            values: qk,
        };
    }
    Ok(AdjointPair {
        p: SpaceTime { levels: p },
        q: SpaceTime { levels: q },
    })
}

/// `∇J = m · p`, as a pointwise control-layout field; level 0 is zero.
pub fn gradient_from_adjoint(problem: &StateProblem, adj: &AdjointPair) -> SpaceTime {
    let g = &problem.grid;
    let m = problem.m_interior();
    let mut grad = SpaceTime::zeros(g, Bc::Dirichlet);
    for n in 1..=g.time_steps() {
        grad.levels[n] = adj.p_for_control(n).zip_map(&m, |p, m| m * p);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::potentials::PotentialSpec;
    use crate::state::solve_state;

    fn setup(kappa: f64) -> (StateProblem, Trajectory, ObjectiveSpec) {
        let g = Grid::interval(1.0, 12, 10, 0.5).unwrap();
        let p = StateProblem::new(
            g.clone(),
            PotentialSpec::logarithmic(1.5).unwrap(),
            0.7,
            Field::constant(&g, Bc::Neumann, 1.0),
            Field::zeros(&g, Bc::Dirichlet),
            Field::from_fn(&g, Bc::Neumann, |x| 0.5 * (3.0 * x[0]).cos()),
        )
        .unwrap();
        let u = SpaceTime::from_fn(&g, Bc::Dirichlet, |t, x| (t + 2.0 * x[0]).sin());
        let base = solve_state(&p, &u).unwrap();
        let obj = ObjectiveSpec::constant_targets(&g, kappa, 0.1, 1e-3, 0.0, 0.3).unwrap();
        (p, base, obj)
    }

    #[test]
    fn vanishing_sources_give_zero_adjoint() {
        let (p, base, _) = setup(0.0);
        let g = &p.grid;
        // κ = 0 with g' ≡ 0 along the trajectory.
        let adj = solve_adjoint_with_sources(
            &p,
            &base,
            &SpaceTime::zeros(g, Bc::Dirichlet),
            &SpaceTime::zeros(g, Bc::Neumann),
        )
        .unwrap();
        assert_eq!(adj.p.max_abs(), 0.0);
        assert_eq!(adj.q.max_abs(), 0.0);
        let grad = gradient_from_adjoint(&p, &adj);
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn targets_met_give_zero_adjoint() {
        let (p, base, _) = setup(1.0);
        let g = &p.grid;
        let mut obj = ObjectiveSpec::constant_targets(g, 1.0, 0.1, 1e-3, 0.0, 0.0).unwrap();
        obj.theta_q = base.theta.clone();
        obj.chi = base.phi.map(|r| crate::objective::smoothed_g(r, 0.1, 1e-3));
        let adj = solve_adjoint(&p, &base, &obj).unwrap();
        assert_eq!(adj.p.max_abs(), 0.0);
        assert_eq!(adj.q.max_abs(), 0.0);
    }

    #[test]
    fn terminal_level_is_zero() {
        let (p, base, obj) = setup(2.0);
        let adj = solve_adjoint(&p, &base, &obj).unwrap();
        let n = p.grid.time_steps();
        assert!(adj.p.levels[n].values.iter().all(|&v| v == 0.0));
        assert!(adj.q.levels[n].values.iter().all(|&v| v == 0.0));
        assert!(adj.p.levels[0].max_abs() > 0.0);
    }

    #[test]
    fn zero_weight_zero_gradient() {
        let (mut p, base, obj) = setup(2.0);
        p.m = Field::zeros(&p.grid, Bc::Neumann);
        let adj = solve_adjoint(&p, &base, &obj).unwrap();
        assert_eq!(gradient_from_adjoint(&p, &adj).max_abs(), 0.0);
    }

    #[test]
    fn kappa_zero_ignores_theta_target() {
        let (p, base, obj) = setup(0.0);
        let mut other = obj.clone();
        other.theta_q = SpaceTime::constant(&p.grid, Bc::Dirichlet, 42.0);
        let g1 = gradient_from_adjoint(&p, &solve_adjoint(&p, &base, &obj).unwrap());
        let g2 = gradient_from_adjoint(&p, &solve_adjoint(&p, &base, &other).unwrap());
        assert_eq!(g1, g2);
    }
}
