//! Double-well nonlinearities `W = β̂ + π̂`.
//!
//! `β = β̂'` is the monotone (possibly singular) part and `π = π̂'` the smooth
//! perturbation; the state equation only sees `γ = β + π`. The obstacle
//! potential has a multivalued `β` and is reachable only through its Yosida
//! regularization `β_ε(r) = (r − clamp(r, −1, 1))/ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which potential, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialKind {
    /// `W(r) = ¼(r² − 1)²`, split as `β̂ = r⁴/4`, `π̂ = ¼ − r²/2`.
    Regular,
    /// `W(r) = (1+r)ln(1+r) + (1−r)ln(1−r) − c r²` on `(−1, 1)`.
    Logarithmic {
        #[serde(default = "default_c")]
        c: f64,
    },
    /// `W(r) = I_[−1,1](r) − c r²`, regularized at level `eps_yosida`.
    Obstacle {
        #[serde(default = "default_c")]
        c: f64,
        eps_yosida: f64,
    },
    /// `β(r) = 1 − 1/(r+1)` on `(−1, ∞)` with `π ≡ 0`.
    Rational,
}

fn default_c() -> f64 {
    1.0
}

pub const DEFAULT_DOMAIN_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Evaluations closer than this to a finite end of `D(β)` are rejected.
    pub margin: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind) -> Result<Self> {
        PotentialSpec::with_margin(kind, DEFAULT_DOMAIN_MARGIN)
    }

    pub fn with_margin(kind: PotentialKind, margin: f64) -> Result<Self> {
        match kind {
            PotentialKind::Logarithmic { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::config("potential.c", "must be positive"))
            }
            PotentialKind::Obstacle { c, eps_yosida } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::config("potential.c", "must be positive"));
                }
                if !(eps_yosida > 0.0 && eps_yosida.is_finite()) {
                    return Err(Error::config("potential.eps_yosida", "must be positive"));
                }
            }
            _ => {}
        }
        if !(margin > 0.0 && margin < 0.5) {
            return Err(Error::config(
                "potential.domain_margin",
                "must lie in (0, 0.5)",
            ));
        }
        Ok(PotentialSpec { kind, margin })
    }

    pub fn regular() -> Self {
        PotentialSpec::new(PotentialKind::Regular).expect("valid")
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        PotentialSpec::new(PotentialKind::Logarithmic { c })
    }

    pub fn obstacle(c: f64, eps_yosida: f64) -> Result<Self> {
        PotentialSpec::new(PotentialKind::Obstacle { c, eps_yosida })
    }

    pub fn rational() -> Self {
        PotentialSpec::new(PotentialKind::Rational).expect("valid")
    }

    pub fn is_obstacle(&self) -> bool {
        matches!(self.kind, PotentialKind::Obstacle { .. })
    }

    /// Whether `γ` is C² on `D(β)`, the precondition for linearized and
    /// adjoint solves.
    pub fn supports_adjoint(&self) -> bool {
        !self.is_obstacle()
    }

    pub fn require_smooth(&self, what: &str) -> Result<()> {
        if self.supports_adjoint() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{what} needs a single-valued C² potential; the obstacle potential has no adjoint gradients"
            )))
        }
    }

    /// End points of `D(β)`.
    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            PotentialKind::Regular => (f64::NEG_INFINITY, f64::INFINITY),
            PotentialKind::Logarithmic { .. } | PotentialKind::Obstacle { .. } => (-1.0, 1.0),
            PotentialKind::Rational => (-1.0, f64::INFINITY),
        }
    }

    /// Rejects `r` unless it sits strictly inside `D(β)` with the safety margin.
    pub fn check_domain(&self, r: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        let ok = match self.kind {
            // The regularized obstacle nonlinearity is defined on all of ℝ.
            PotentialKind::Obstacle { .. } | PotentialKind::Regular => r.is_finite(),
            _ => r.is_finite() && r > lo + self.margin && r < hi - self.margin,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { value: r, lo, hi })
        }
    }

    /// Whether `r` lies in the open region the singular kinds can evaluate.
    pub fn in_domain(&self, r: f64) -> bool {
        self.check_domain(r).is_ok()
    }

    fn no_obstacle(&self, what: &str) -> Result<()> {
        if self.is_obstacle() {
            Err(Error::Unsupported(format!(
                "{what} of the obstacle potential is multivalued; use the Yosida regularization"
            )))
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, r: f64) -> Result<f64> {
        self.no_obstacle("beta")?;
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::Regular => r * r * r,
            PotentialKind::Logarithmic { .. } => (1.0 + r).ln() - (1.0 - r).ln(),
            PotentialKind::Rational => 1.0 - 1.0 / (r + 1.0),
            PotentialKind::Obstacle { .. } => unreachable!(),
        })
    }

    pub fn beta_prime(&self, r: f64) -> Result<f64> {
        self.no_obstacle("beta_prime")?;
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::Regular => 3.0 * r * r,
            PotentialKind::Logarithmic { .. } => 2.0 / ((1.0 - r) * (1.0 + r)),
            PotentialKind::Rational => 1.0 / ((r + 1.0) * (r + 1.0)),
            PotentialKind::Obstacle { .. } => unreachable!(),
        })
    }

    pub fn beta_second(&self, r: f64) -> Result<f64> {
        self.no_obstacle("beta_second")?;
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::Regular => 6.0 * r,
            PotentialKind::Logarithmic { .. } => {
                1.0 / ((1.0 - r) * (1.0 - r)) - 1.0 / ((1.0 + r) * (1.0 + r))
            }
            PotentialKind::Rational => -2.0 / (r + 1.0).powi(3),
            PotentialKind::Obstacle { .. } => unreachable!(),
        })
    }

    /// Convex part `β̂`; for the obstacle kind its Moreau envelope `dist(r, [−1,1])²/(2ε)`.
    pub fn beta_hat(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        Ok(match self.kind {
            PotentialKind::Regular => 0.25 * r.powi(4),
            PotentialKind::Logarithmic { .. } => {
                let plus = if r > -1.0 {
                    (1.0 + r) * (1.0 + r).ln()
                } else {
                    0.0
                };
                let minus = if r < 1.0 {
                    (1.0 - r) * (1.0 - r).ln()
                } else {
                    0.0
                };
                plus + minus
            }
            PotentialKind::Rational => r - (r + 1.0).ln(),
            PotentialKind::Obstacle { eps_yosida, .. } => {
                let d = r - r.clamp(-1.0, 1.0);
                d * d / (2.0 * eps_yosida)
            }
        })
    }

    pub fn pi_hat(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => 0.25 - 0.5 * r * r,
            PotentialKind::Logarithmic { c } | PotentialKind::Obstacle { c, .. } => -c * r * r,
            PotentialKind::Rational => 0.0,
        }
    }

    pub fn pi_value(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => -r,
            PotentialKind::Logarithmic { c } | PotentialKind::Obstacle { c, .. } => -2.0 * c * r,
            PotentialKind::Rational => 0.0,
        }
    }

    pub fn pi_prime(&self, _r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => -1.0,
            PotentialKind::Logarithmic { c } | PotentialKind::Obstacle { c, .. } => -2.0 * c,
            PotentialKind::Rational => 0.0,
        }
    }

    pub fn pi_second(&self, _r: f64) -> f64 {
        0.0
    }

    /// The value `ξ` paired with `φ = r` by the state inclusion: `β(r)`, or
    /// `β_ε(r)` for the obstacle kind.
    pub fn xi(&self, r: f64) -> Result<f64> {
        match self.kind {
            PotentialKind::Obstacle { eps_yosida, .. } => {
                self.check_domain(r)?;
                Ok(obstacle_yosida(r, eps_yosida))
            }
            _ => self.beta(r),
        }
    }

    /// Derivative of [`xi`](Self::xi). At the obstacle kinks the Newton
    /// Jacobian uses the midpoint value `1/(2ε)`.
    pub fn xi_prime(&self, r: f64) -> Result<f64> {
        match self.kind {
            PotentialKind::Obstacle { eps_yosida, .. } => {
                self.check_domain(r)?;
                let a = r.abs();
                Ok(if a < 1.0 {
                    0.0
                } else if a > 1.0 {
                    1.0 / eps_yosida
                } else {
                    0.5 / eps_yosida
                })
            }
            _ => self.beta_prime(r),
        }
    }

    /// `γ(r) = ξ(r) + π(r)`.
    pub fn gamma(&self, r: f64) -> Result<f64> {
        Ok(self.xi(r)? + self.pi_value(r))
    }

    pub fn gamma_prime(&self, r: f64) -> Result<f64> {
        Ok(self.xi_prime(r)? + self.pi_prime(r))
    }

    pub fn gamma_second(&self, r: f64) -> Result<f64> {
        Ok(self.beta_second(r)? + self.pi_second(r))
    }

    /// Energy density `β̂ + π̂` (Moreau envelope for the obstacle kind).
    pub fn energy_density(&self, r: f64) -> Result<f64> {
        Ok(self.beta_hat(r)? + self.pi_hat(r))
    }

    /// Yosida regularization `β_ε(r) = (r − J_ε(r))/ε` with `J_ε = (I + εβ)⁻¹`.
    pub fn yosida(&self, r: f64, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("eps_yosida", "must be positive"));
        }
        if !r.is_finite() {
            return Err(Error::Numerical(format!("non-finite Yosida argument {r}")));
        }
        if self.is_obstacle() {
            return Ok(obstacle_yosida(r, eps));
        }
        let resolvent = self.resolvent(r, eps)?;
        Ok((r - resolvent) / eps)
    }

    /// Solves `J + ε β(J) = r` by Newton's method safeguarded with bisection.
    fn resolvent(&self, r: f64, eps: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let (lo, hi) = self.domain();
        // β(0) = 0 and monotonicity put the root between 0 and r.
        let mut a = r.min(0.0).max(next_up(lo));
        let mut b = r.max(0.0).min(next_down(hi));
        let f = |j: f64| -> Result<f64> { Ok(j + eps * self.beta_unchecked(j)? - r) };
        let (fa, fb) = (f(a)?, f(b)?);
        if fa > 0.0 || fb < 0.0 {
            return Err(Error::Numerical(format!(
                "Yosida resolvent: no bracket for r = {r}, eps = {eps} (f(a) = {fa:.3e}, f(b) = {fb:.3e})"
            )));
        }
        let mut x = if r > 0.0 { b.min(r) } else { a.max(r) };
        for _ in 0..200 {
            let fx = f(x)?;
            if fx == 0.0 {
                return Ok(x);
            }
            if fx < 0.0 {
                a = x;
            } else {
                b = x;
            }
            let slope = 1.0 + eps * self.beta_prime_unchecked(x)?;
            let mut next = x - fx / slope;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs())
                || b - a <= f64::EPSILON * (1.0 + x.abs())
            {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Numerical(format!(
            "Yosida resolvent did not converge for r = {r}, eps = {eps}; bracket [{a}, {b}]"
        )))
    }

    fn beta_unchecked(&self, r: f64) -> Result<f64> {
        Ok(match self.kind {
            PotentialKind::Regular => r * r * r,
            PotentialKind::Logarithmic { .. } => (1.0 + r).ln() - (1.0 - r).ln(),
            PotentialKind::Rational => 1.0 - 1.0 / (r + 1.0),
            PotentialKind::Obstacle { .. } => return self.beta(r),
        })
    }

    fn beta_prime_unchecked(&self, r: f64) -> Result<f64> {
        Ok(match self.kind {
            PotentialKind::Regular => 3.0 * r * r,
            PotentialKind::Logarithmic { .. } => 2.0 / ((1.0 - r) * (1.0 + r)),
            PotentialKind::Rational => 1.0 / ((r + 1.0) * (r + 1.0)),
            PotentialKind::Obstacle { .. } => return self.beta_prime(r),
        })
    }
}

fn obstacle_yosida(r: f64, eps: f64) -> f64 {
    (r - r.clamp(-1.0, 1.0)) / eps
}

fn next_up(x: f64) -> f64 {
    if x.is_finite() {
        x + f64::EPSILON * x.abs().max(1.0)
    } else {
        x
    }
}

fn next_down(x: f64) -> f64 {
    if x.is_finite() {
        x - f64::EPSILON * x.abs().max(1.0)
    } else {
        x
    }
}
