//! Forward solver for the state system
//!
//! ```text
//! ∂ₜθ − Δθ + ℓ ∂ₜφ = m u,        θ = 0 on the boundary
//! ∂ₜφ − Δφ + β(φ) + π(φ) = ℓ θ,  ∂ₙφ = 0 on the boundary
//! ```
//!
//! discretized by fully implicit Euler. Each step is solved by a monolithic
//! damped Newton iteration on the stacked unknown `(θⁿ⁺¹, φⁿ⁺¹)`; all rows are
//! multiplied by `dt` so the Jacobian is `I + O(dt)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian_apply, restrict_to_interior, Bc, Field, Grid, SpaceTime, Trajectory};
use crate::linalg::{max_abs, SparseMatrix};
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonSettings {
    /// Absolute tolerance on the max-norm of the dt-scaled residual.
    pub tol_residual: f64,
    pub max_iter: usize,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Fraction of the distance to the guarded domain boundary a step may cover.
    pub domain_guard: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol_residual: 1e-10,
            max_iter: 50,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            domain_guard: 0.99,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::config("newton.tol_residual", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("newton.max_iter", "must be at least 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::config(
                "newton.backtrack_factor",
                "must lie in (0, 1)",
            ));
        }
        if !(self.domain_guard > 0.0 && self.domain_guard < 1.0) {
            return Err(Error::config("newton.domain_guard", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Data of the state system.
#[derive(Debug, Clone)]
pub struct StateProblem {
    pub grid: Grid,
    pub potential: PotentialSpec,
    /// Latent-heat coefficient ℓ.
    pub ell: f64,
    /// Control weight `m ≥ 0` (Neumann layout).
    pub m: Field,
    pub theta0: Field,
    pub phi0: Field,
    /// Extra right-hand side of the φ-equation, for manufactured solutions only.
    pub mms_source_phi: Option<SpaceTime>,
    pub newton: NewtonSettings,
}

impl StateProblem {
    pub fn new(
        grid: Grid,
        potential: PotentialSpec,
        ell: f64,
        m: Field,
        theta0: Field,
        phi0: Field,
    ) -> Result<Self> {
        let p = StateProblem {
            grid,
            potential,
            ell,
            m,
            theta0,
            phi0,
            mms_source_phi: None,
            newton: NewtonSettings::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::config("problem.ell", "must be positive"));
        }
        self.newton.validate()?;
        for (key, f, bc) in [
            ("problem.m", &self.m, Bc::Neumann),
            ("problem.theta0", &self.theta0, Bc::Dirichlet),
            ("problem.phi0", &self.phi0, Bc::Neumann),
        ] {
            if f.bc != bc || f.len() != g.node_count(bc) {
                return Err(Error::config(
                    key,
                    format!("expected a {bc:?} field on the grid"),
                ));
            }
            if !f.is_finite() {
                return Err(Error::config(key, "non-finite values"));
            }
        }
        if self.m.values.iter().any(|&v| v < 0.0) {
            return Err(Error::config("problem.m", "must be nonnegative"));
        }
        for &r in &self.phi0.values {
            if !self.potential.in_domain(r) {
                return Err(Error::config(
                    "problem.phi0",
                    format!("value {r} not strictly inside the potential domain"),
                ));
            }
            if !self
                .potential
                .energy_density(r)
                .map(f64::is_finite)
                .unwrap_or(false)
            {
                return Err(Error::config("problem.phi0", "potential energy not finite"));
            }
        }
        if let Some(src) = &self.mms_source_phi {
            src.check(g, Bc::Neumann, "mms_source_phi")?;
        }
        Ok(())
    }

    /// `m` sampled on the interior nodes where the θ-equation lives.
    pub fn m_interior(&self) -> Field {
        restrict_to_interior(&self.grid, &self.m)
    }

    /// A control of the right shape, constant in space and time.
    pub fn constant_control(&self, value: f64) -> SpaceTime {
        SpaceTime::constant(&self.grid, Bc::Dirichlet, value)
    }
}

/// Node-major numbering of the stacked unknown: at every node `φ` first,
/// then `θ` when the node is interior.
#[derive(Debug, Clone)]
pub struct Dofs {
    pub theta: Vec<usize>,
    pub phi: Vec<usize>,
    /// Neumann index of each interior node.
    pub interior: Vec<usize>,
    pub n: usize,
}

impl Dofs {
    pub fn new(grid: &Grid) -> Self {
        let interior = grid.interior_to_full();
        let n_full = grid.node_count(Bc::Neumann);
        let mut interior_of = vec![None; n_full];
        for (k, &j) in interior.iter().enumerate() {
            interior_of[j] = Some(k);
        }
        let mut theta = vec![0; interior.len()];
        let mut phi = vec![0; n_full];
        let mut next = 0;
        for j in 0..n_full {
            phi[j] = next;
            next += 1;
            if let Some(k) = interior_of[j] {
                theta[k] = next;
                next += 1;
            }
        }
        Dofs {
            theta,
            phi,
            interior,
            n: next,
        }
    }

    pub fn pack(&self, theta: &[f64], phi: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.theta.iter().enumerate() {
            x[i] = theta[k];
        }
        for (j, &i) in self.phi.iter().enumerate() {
            x[i] = phi[j];
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.theta.iter().map(|&i| x[i]).collect(),
            self.phi.iter().map(|&i| x[i]).collect(),
        )
    }
}

/// Jacobian of the dt-scaled step residual with respect to `(θⁿ⁺¹, φⁿ⁺¹)`:
///
/// ```text
/// [ I − dt Δ_D        ℓ R           ]
/// [ −dt ℓ E      I − dt Δ_N + dt γ'(φ) ]
/// ```
///
/// `R` samples a Neumann field at interior nodes and `E = Rᵀ` extends by zero.
/// The sensitivity and adjoint solvers reuse exactly this matrix.
pub fn step_jacobian(problem: &StateProblem, dofs: &Dofs, phi_new: &[f64]) -> Result<SparseMatrix> {
    let g = &problem.grid;
    let dt = g.dt();
    let ell = problem.ell;
    let mut k = SparseMatrix::new(dofs.n);
    for (r, c, v) in g.laplacian_triplets(Bc::Dirichlet) {
        k.push(dofs.theta[r], dofs.theta[c], -dt * v);
    }
    for (r, c, v) in g.laplacian_triplets(Bc::Neumann) {
        k.push(dofs.phi[r], dofs.phi[c], -dt * v);
    }
    for &i in &dofs.theta {
        k.push(i, i, 1.0);
    }
    for (j, &i) in dofs.phi.iter().enumerate() {
        k.push(i, i, 1.0 + dt * problem.potential.gamma_prime(phi_new[j])?);
    }
    for (kk, &j) in dofs.interior.iter().enumerate() {
        k.push(dofs.theta[kk], dofs.phi[j], ell);
        k.push(dofs.phi[j], dofs.theta[kk], -dt * ell);
    }
    Ok(k)
}

/// Inputs of one implicit step that do not change during the Newton iteration.
struct StepData<'a> {
    theta_old: &'a Field,
    phi_old: &'a Field,
    /// `dt · m · uⁿ⁺¹` on interior nodes.
    heat_source: Vec<f64>,
    /// `dt · sⁿ⁺¹` for manufactured solutions.
    phi_source: Option<Vec<f64>>,
}

fn step_residual(
    problem: &StateProblem,
    data: &StepData,
    theta: &Field,
    phi: &Field,
) -> Result<(Field, Field)> {
    let g = &problem.grid;
    let dt = g.dt();
    let ell = problem.ell;
    let lap_theta = laplacian_apply(g, theta);
    let lap_phi = laplacian_apply(g, phi);
    let interior = g.interior_to_full();
    let mut r_theta = theta.clone();
    for (k, &j) in interior.iter().enumerate() {
        r_theta.values[k] = theta.values[k] - data.theta_old.values[k]
            + ell * (phi.values[j] - data.phi_old.values[j])
            - dt * lap_theta.values[k]
            - data.heat_source[k];
    }
    let mut r_phi = phi.clone();
    for j in 0..phi.len() {
        r_phi.values[j] = phi.values[j] - data.phi_old.values[j] - dt * lap_phi.values[j]
            + dt * problem.potential.gamma(phi.values[j])?;
        if let Some(s) = &data.phi_source {
            r_phi.values[j] -= s[j];
        }
    }
    for (k, &j) in interior.iter().enumerate() {
        r_phi.values[j] -= dt * ell * theta.values[k];
    }
    Ok((r_theta, r_phi))
}

fn residual_norm(r: &(Field, Field)) -> f64 {
    max_abs(&r.0.values).max(max_abs(&r.1.values))
}

/// Largest step fraction in `(0, 1]` keeping `φ + α δφ` inside the guarded domain.
fn domain_step_limit(problem: &StateProblem, phi: &[f64], dphi: &[f64]) -> f64 {
    let p = &problem.potential;
    if p.is_obstacle() {
        return 1.0;
    }
    let (lo, hi) = p.domain();
    let (lo, hi) = (lo + p.margin, hi - p.margin);
    let guard = problem.newton.domain_guard;
    let mut alpha: f64 = 1.0;
    for (&x, &d) in phi.iter().zip(dphi) {
        if d > 0.0 && hi.is_finite() && x + d >= hi {
            alpha = alpha.min(guard * (hi - x) / d);
        } else if d < 0.0 && lo.is_finite() && x + d <= lo {
            alpha = alpha.min(guard * (lo - x) / d);
        }
    }
    alpha.max(0.0)
}

/// Result of [`step_state`].
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub theta: Field,
    pub phi: Field,
    pub xi: Field,
    pub iterations: usize,
    pub residual: f64,
}

/// One implicit Euler step; `u_new` is the control at the new time level.
pub fn step_state(
    problem: &StateProblem,
    theta_old: &Field,
    phi_old: &Field,
    u_new: &Field,
    level_new: usize,
) -> Result<StepOutput> {
    let g = &problem.grid;
    let dt = g.dt();
    let settings = &problem.newton;
    let dofs = Dofs::new(g);
    let m_int = problem.m_interior();
    if u_new.bc != Bc::Dirichlet || u_new.len() != m_int.len() {
        return Err(Error::Shape(
            "control must be a Dirichlet-layout field".into(),
        ));
    }
    let data = StepData {
        theta_old,
        phi_old,
        heat_source: m_int
            .values
            .iter()
            .zip(&u_new.values)
            .map(|(m, u)| dt * m * u)
            .collect(),
        phi_source: problem
            .mms_source_phi
            .as_ref()
            .map(|s| s.levels[level_new].values.iter().map(|v| dt * v).collect()),
    };

    let mut theta = theta_old.clone();
    let mut phi = phi_old.clone();
    let mut res = step_residual(problem, &data, &theta, &phi)?;
    let mut norm = residual_norm(&res);
    let mut iterations = 0;
    while norm > settings.tol_residual {
        if iterations == settings.max_iter {
            return Err(Error::StepFailure {
                step: level_new,
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let jac = step_jacobian(problem, &dofs, &phi.values)?;
        let rhs: Vec<f64> = dofs
            .pack(&res.0.values, &res.1.values)
            .iter()
            .map(|v| -v)
            .collect();
        let delta = jac.factor()?.solve(&rhs);
        let (d_theta, d_phi) = dofs.unpack(&delta);
        let mut alpha = domain_step_limit(problem, &phi.values, &d_phi);
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let mut t_try = theta.clone();
            let mut p_try = phi.clone();
            for (v, d) in t_try.values.iter_mut().zip(&d_theta) {
                *v += alpha * d;
            }
            for (v, d) in p_try.values.iter_mut().zip(&d_phi) {
                *v += alpha * d;
            }
            // A domain violation counts as a failed trial: shorten and retry.
            if let Ok(r_try) = step_residual(problem, &data, &t_try, &p_try) {
                let n_try = residual_norm(&r_try);
                if n_try <= (1.0 - 1e-4 * alpha) * norm || n_try <= settings.tol_residual {
                    accepted = Some((t_try, p_try, r_try, n_try));
                    break;
                }
            }
            alpha *= settings.backtrack_factor;
        }
        match accepted {
            Some((t, p, r, n)) => {
                theta = t;
                phi = p;
                res = r;
                norm = n;
            }
            None => {
                return Err(Error::StepFailure {
                    step: level_new,
                    iterations,
                    residual: norm,
                })
            }
        }
    }
    let xi = Field {
        bc: Bc::Neumann,
        values: phi
            .values
            .iter()
            .map(|&r| problem.potential.xi(r))
            .collect::<Result<_>>()?,
    };
    Ok(StepOutput {
        theta,
        phi,
        xi,
        iterations,
        residual: norm,
    })
}

/// Marches the state system over all time levels for the control `u`
/// (Dirichlet layout; level 0 is ignored).
pub fn solve_state(problem: &StateProblem, u: &SpaceTime) -> Result<Trajectory> {
    let g = &problem.grid;
    u.check(g, Bc::Dirichlet, "control")?;
    let n_steps = g.time_steps();
    let xi0 = Field {
        bc: Bc::Neumann,
        values: problem
            .phi0
            .values
            .iter()
            .map(|&r| problem.potential.xi(r))
            .collect::<Result<_>>()?,
    };
    let mut theta = Vec::with_capacity(n_steps + 1);
    let mut phi = Vec::with_capacity(n_steps + 1);
    let mut xi = Vec::with_capacity(n_steps + 1);
    let mut newton_iterations = vec![0];
    theta.push(problem.theta0.clone());
    phi.push(problem.phi0.clone());
    xi.push(xi0);
    for n in 0..n_steps {
        let out = step_state(problem, &theta[n], &phi[n], &u.levels[n + 1], n + 1)?;
        theta.push(out.theta);
        phi.push(out.phi);
        xi.push(out.xi);
        newton_iterations.push(out.iterations);
    }
    Ok(Trajectory {
        theta: SpaceTime { levels: theta },
        phi: SpaceTime { levels: phi },
        xi: SpaceTime { levels: xi },
        newton_iterations,
    })
}
