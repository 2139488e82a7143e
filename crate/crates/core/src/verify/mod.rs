//! Independent oracles and audits.
//!
//! Every check returns raw measurements; [`AuditConfig`] holds the
//! tolerances they are judged against and [`AuditReport`] collects the
//! verdicts.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub mod bounds;
pub mod dependence;
pub mod energy;
pub mod gradient;
pub mod mms;
pub mod yosida;

pub use bounds::{separation_audit, theta_linf_refinement, LinfRefinement, SeparationBounds};
pub use dependence::{
    continuous_dependence_check, dependence_family, ratio_variation, DependenceRow,
};
pub use energy::{energy, energy_audit, energy_refinement, EnergyRecord, EnergyRefinement};
pub use gradient::{
    duality_residual, duality_terms, fd_gradient_oracle, DualityTerms, FdRow, FdTable,
};
pub use mms::{mms_convergence, ConvergenceTable, MmsReport};
pub use yosida::{yosida_continuation, YosidaRow, YosidaTable};

/// Least-squares slope of `log err` against `log size`.
pub fn observed_order(sizes: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(errors)
        .filter(|(s, e)| **s > 0.0 && **e > 0.0)
        .map(|(s, e)| (s.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Duality,
    Gradient,
    Optimizer,
    BangBang,
    Separation,
    Energy,
    Dependence,
    Yosida,
    Mms,
    Linf,
    Determinism,
}

impl Check {
    pub const ALL: [Check; 11] = [
        Check::Duality,
        Check::Gradient,
        Check::Optimizer,
        Check::BangBang,
        Check::Separation,
        Check::Energy,
        Check::Dependence,
        Check::Yosida,
        Check::Mms,
        Check::Linf,
        Check::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Duality => "duality",
            Check::Gradient => "gradient",
            Check::Optimizer => "optimizer",
            Check::BangBang => "bang_bang",
            Check::Separation => "separation",
            Check::Energy => "energy",
            Check::Dependence => "dependence",
            Check::Yosida => "yosida",
            Check::Mms => "mms",
            Check::Linf => "linf",
            Check::Determinism => "determinism",
        }
    }
}

/// Every audit tolerance in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub checks: Vec<Check>,
    pub duality_directions: usize,
    pub duality_tol: f64,
    pub fd_steps: Vec<f64>,
    pub fd_step: f64,
    pub fd_rel_tol: f64,
    pub richardson_range: [f64; 2],
    pub stationarity_tol: f64,
    pub bang_bang_fraction: f64,
    pub bang_bang_tol_p: f64,
    pub bang_bang_tol_u: f64,
    pub separation_margin: f64,
    pub separation_samples: usize,
    pub energy_defect_tol: f64,
    pub energy_order: f64,
    pub energy_time_steps: Vec<usize>,
    pub dependence_scales: Vec<f64>,
    pub dependence_variation: f64,
    pub yosida_eps: Vec<f64>,
    pub yosida_ratio: f64,
    pub yosida_growth: f64,
    pub mms_cells: Vec<usize>,
    pub mms_steps: Vec<usize>,
    pub mms_time_order: f64,
    pub mms_space_order: f64,
    pub linf_change: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            checks: Check::ALL.to_vec(),
            duality_directions: 20,
            duality_tol: 1e-8,
            fd_steps: vec![1e-2, 5e-3, 1e-3, 5e-4],
            fd_step: 1e-3,
            fd_rel_tol: 1e-6,
            richardson_range: [3.5, 4.5],
            stationarity_tol: 1e-6,
            bang_bang_fraction: 0.01,
            bang_bang_tol_p: 1e-8,
            bang_bang_tol_u: 1e-6,
            separation_margin: 1e-6,
            separation_samples: 8,
            energy_defect_tol: 1e-3,
            energy_order: 0.9,
            energy_time_steps: vec![32, 64, 128],
            dependence_scales: vec![1e-1, 1e-2, 1e-3],
            dependence_variation: 0.2,
            yosida_eps: vec![0.2, 0.1, 0.05, 0.025],
            yosida_ratio: 0.75,
            yosida_growth: 0.1,
            mms_cells: vec![16, 32, 64, 128],
            mms_steps: vec![16, 32, 64, 128],
            mms_time_order: 0.9,
            mms_space_order: 1.9,
            linf_change: 0.05,
        }
    }
}

/// Verdict of one audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Free-form details for the human summary.
    pub detail: String,
    #[serde(skip)]
    pub runtime: Duration,
}

impl CheckOutcome {
    /// Passes when `measured ≤ threshold`.
    pub fn at_most(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            measured,
            threshold,
            pass: measured <= threshold,
            detail,
            runtime: Duration::ZERO,
        }
    }

    /// Passes when `measured ≥ threshold`.
    pub fn at_least(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        CheckOutcome {
            pass: measured >= threshold,
            ..CheckOutcome::at_most(name, measured, threshold, detail)
        }
    }

    pub fn failed(name: &str, threshold: f64, detail: String) -> Self {
        CheckOutcome {
            pass: false,
            ..CheckOutcome::at_most(name, f64::NAN, threshold, detail)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub outcomes: Vec<CheckOutcome>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass)
    }

    /// Deterministic CSV: no timings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,measured,threshold,pass\n");
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{}",
                o.name, o.measured, o.threshold, o.pass
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("audit (seed {})\n", self.seed);
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "  {:<12} {}  measured {:.3e}  threshold {:.3e}  ({:.2} s)  {}",
                o.name,
                if o.pass { "PASS" } else { "FAIL" },
                o.measured,
                o.threshold,
                o.runtime.as_secs_f64(),
                o.detail
            );
        }
        let failed = self.outcomes.iter().filter(|o| !o.pass).count();
        let _ = writeln!(s, "{} checks, {failed} failed", self.outcomes.len());
        s
    }
}
