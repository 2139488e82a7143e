//! Cost functional
//!
//! ```text
//! J(u) = ½ ∫_Q (g(φ) − χ)² + κ/2 ∫_Q (θ − θ_Q)²
//! ```
//!
//! with the smoothed interface indicator `g(r) = λ / (((r² − ε²)⁺)² + λ)`.
//! Both integrals use the rectangle rule over levels `1..=N`, the same
//! quadrature as every space-time pairing in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{weighted_dot, Bc, Field, Grid, SpaceTime, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GMode {
    #[default]
    Smoothed,
    /// Characteristic function of `[−ε, ε]`; not differentiable, reporting only.
    SharpIndicator,
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub kappa: f64,
    /// Interface half-width ε.
    pub eps_g: f64,
    /// Smoothing parameter λ.
    pub lambda_g: f64,
    /// Target indicator (Neumann layout, all levels).
    pub chi: SpaceTime,
    /// Desired temperature (Dirichlet layout, all levels).
    pub theta_q: SpaceTime,
    pub g_mode: GMode,
}

/// Value of `J` split into its addends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    /// `½ ∫ (g(φ) − χ)²`
    pub interface: f64,
    /// `κ/2 ∫ (θ − θ_Q)²`
    pub temperature: f64,
    /// Interface term with the sharp indicator of `[−ε, ε]`.
    pub sharp_interface: f64,
}

impl ObjectiveSpec {
    pub fn new(
        grid: &Grid,
        kappa: f64,
        eps_g: f64,
        lambda_g: f64,
        chi: SpaceTime,
        theta_q: SpaceTime,
    ) -> Result<Self> {
        let spec = ObjectiveSpec {
            kappa,
            eps_g,
            lambda_g,
            chi,
            theta_q,
            g_mode: GMode::Smoothed,
        };
        spec.validate(grid)?;
        Ok(spec)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("objective.kappa", "must be nonnegative"));
        }
        if !(self.eps_g > 0.0 && self.eps_g.is_finite()) {
            return Err(Error::config("objective.eps_g", "must be positive"));
        }
        if !(self.lambda_g > 0.0 && self.lambda_g.is_finite()) {
            return Err(Error::config("objective.lambda_g", "must be positive"));
        }
        self.chi.check(grid, Bc::Neumann, "objective.chi")?;
        self.theta_q
            .check(grid, Bc::Dirichlet, "objective.theta_q")?;
        Ok(())
    }

    pub fn g(&self, r: f64) -> f64 {
        match self.g_mode {
            GMode::Smoothed => smoothed_g(r, self.eps_g, self.lambda_g),
            GMode::SharpIndicator => sharp_g(r, self.eps_g),
        }
    }

    pub fn g_prime(&self, r: f64) -> f64 {
        smoothed_g_prime(r, self.eps_g, self.lambda_g)
    }

    pub fn eval_cost(&self, grid: &Grid, traj: &Trajectory) -> Result<CostBreakdown> {
        self.check_levels(grid, traj)?;
        let dt = grid.dt();
        let wn = grid.weights(Bc::Neumann);
        let wd = grid.weights(Bc::Dirichlet);
        let mut interface = 0.0;
        let mut sharp = 0.0;
        let mut temperature = 0.0;
        for n in 1..=grid.time_steps() {
            let phi = &traj.phi.levels[n].values;
            let chi = &self.chi.levels[n].values;
            let d: Vec<f64> = phi.iter().zip(chi).map(|(&p, &c)| self.g(p) - c).collect();
            interface += 0.5 * dt * weighted_dot(&wn, &d, &d);
            let ds: Vec<f64> = phi
                .iter()
                .zip(chi)
                .map(|(&p, &c)| sharp_g(p, self.eps_g) - c)
                .collect();
            sharp += 0.5 * dt * weighted_dot(&wn, &ds, &ds);
            if self.kappa != 0.0 {
                let e: Vec<f64> = traj.theta.levels[n]
                    .values
                    .iter()
                    .zip(&self.theta_q.levels[n].values)
                    .map(|(t, q)| t - q)
                    .collect();
                temperature += 0.5 * self.kappa * dt * weighted_dot(&wd, &e, &e);
            }
        }
        Ok(CostBreakdown {
            total: interface + temperature,
            interface,
            temperature,
            sharp_interface: sharp,
        })
    }

    /// Right-hand sides of the adjoint system on levels `1..=N`:
    /// `((g(φ) − χ) g'(φ), κ(θ − θ_Q))`; level 0 is zero.
    pub fn adjoint_sources(
        &self,
        grid: &Grid,
        traj: &Trajectory,
    ) -> Result<(SpaceTime, SpaceTime)> {
        if self.g_mode == GMode::SharpIndicator {
            return Err(Error::Unsupported(
                "the sharp indicator cost has no derivative".into(),
            ));
        }
        self.check_levels(grid, traj)?;
        let mut phi_src = SpaceTime::zeros(grid, Bc::Neumann);
        let mut theta_src = SpaceTime::zeros(grid, Bc::Dirichlet);
        for n in 1..=grid.time_steps() {
            phi_src.levels[n] = traj.phi.levels[n].zip_map(&self.chi.levels[n], |p, c| {
                (self.g(p) - c) * self.g_prime(p)
            });
            theta_src.levels[n] =
                traj.theta.levels[n].zip_map(&self.theta_q.levels[n], |t, q| self.kappa * (t - q));
        }
        Ok((phi_src, theta_src))
    }

    fn check_levels(&self, grid: &Grid, traj: &Trajectory) -> Result<()> {
        let levels = grid.time_steps() + 1;
        if traj.phi.levels.len() != levels || traj.theta.levels.len() != levels {
            return Err(Error::Shape(
                "trajectory level count does not match the grid".into(),
            ));
        }
        self.chi.check(grid, Bc::Neumann, "objective.chi")?;
        self.theta_q.check(grid, Bc::Dirichlet, "objective.theta_q")
    }

    /// A spec with constant targets, handy for tests and demos.
    pub fn constant_targets(
        grid: &Grid,
        kappa: f64,
        eps_g: f64,
        lambda_g: f64,
        chi: f64,
        theta_q: f64,
    ) -> Result<Self> {
        ObjectiveSpec::new(
            grid,
            kappa,
            eps_g,
            lambda_g,
            SpaceTime::constant(grid, Bc::Neumann, chi),
            SpaceTime::constant(grid, Bc::Dirichlet, theta_q),
        )
    }
}

pub fn smoothed_g(r: f64, eps: f64, lambda: f64) -> f64 {
    let s = (r * r - eps * eps).max(0.0);
    lambda / (s * s + lambda)
}

pub fn smoothed_g_prime(r: f64, eps: f64, lambda: f64) -> f64 {
    let s = (r * r - eps * eps).max(0.0);
    if s == 0.0 {
        return 0.0;
    }
    let den = s * s + lambda;
    -lambda * 2.0 * s * 2.0 * r / (den * den)
}

pub fn sharp_g(r: f64, eps: f64) -> f64 {
    if r.abs() <= eps {
        1.0
    } else {
        0.0
    }
}

/// Pointwise `(g(φ) − χ)` on one level, used by diagnostics.
pub fn interface_mismatch(spec: &ObjectiveSpec, phi: &Field, chi: &Field) -> Field {
    phi.zip_map(chi, |p, c| spec.g(p) - c)
}
