//! First-order solvers for the regularized, noiseless and noisy programs.
//!
//! * [`prox_gradient`]: `min ||Phi x - y||^2 + lambda ||x||_A` for sets with a prox.
//! * [`solve_noiseless`]: `min ||x||_A s.t. Phi x = y`, by continuation in
//!   `lambda` for prox sets and by [`solve_gauge_splitting`] otherwise.
//! * [`solve_noisy`]: `min ||x||_A s.t. ||y - Phi x|| <= delta`, by bisection
//!   on `lambda`.

mod continuation;
mod noisy;
mod prox_gradient;
mod splitting;

pub use continuation::{dual_certificate, solve_noiseless};
pub use noisy::solve_noisy;
pub use prox_gradient::prox_gradient;
pub use splitting::solve_gauge_splitting;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Result};
use crate::model::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed(f64),
    /// Start at `1 / ||Phi||^2` and halve until the sufficient-decrease test holds.
    Backtracking,
}

/// Regularization weights for continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSchedule {
    /// `lambda_j = ||Phi^T y||*_A * ratio^j`, stopping below `floor`.
    Geometric { ratio: f64, floor: f64 },
    /// Explicit strictly decreasing weights.
    Explicit(Vec<f64>),
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Geometric {
            ratio: 0.5,
            floor: 1e-8,
        }
    }
}

impl LambdaSchedule {
    /// The weights to visit given the starting value `lambda0`.
    pub fn weights(&self, lambda0: f64) -> Vec<f64> {
        match self {
            LambdaSchedule::Geometric { ratio, floor } => {
                let mut out = Vec::new();
                let mut l = lambda0;
                while l >= *floor && out.len() < 10_000 {
                    out.push(l);
                    l *= ratio;
                }
                out
            }
            LambdaSchedule::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step: StepRule,
    /// Iteration cap for one prox-gradient run or one splitting solve.
    pub max_iter: usize,
    /// Relative objective decrease over 10 iterations that counts as converged.
    pub tol_obj: f64,
    /// Relative feasibility tolerance, scaled by `1 + ||y||`.
    pub tol_feas: f64,
    pub acceleration: bool,
    pub schedule: LambdaSchedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: StepRule::Backtracking,
            max_iter: 20_000,
            tol_obj: 1e-12,
            tol_feas: 1e-7,
            acceleration: true,
            schedule: LambdaSchedule::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepRule::Fixed(a) = self.step {
            if !(a > 0.0) || !a.is_finite() {
                return Err(invalid(format!("step must be positive, got {a}")));
            }
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be >= 1"));
        }
        if !(self.tol_obj > 0.0) || !(self.tol_feas > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        match &self.schedule {
            LambdaSchedule::Geometric { ratio, floor } => {
                if !(*ratio > 0.0 && *ratio < 1.0) || !(*floor > 0.0) {
                    return Err(invalid("geometric schedule needs 0 < ratio < 1 and floor > 0"));
                }
            }
            LambdaSchedule::Explicit(v) => {
                if v.is_empty() || v.iter().any(|l| !(*l > 0.0)) || v.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(invalid("lambda schedule must be positive and strictly decreasing"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x_hat: DVector<f64>,
    pub objective: f64,
    /// `||Phi x_hat - y||`.
    pub residual: f64,
    /// `||x_hat||_A` when computable.
    pub gauge: Option<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Final regularization weight, for penalized and continuation solves.
    pub lambda: Option<f64>,
    /// Dual vector `z` with `||Phi^T z||*_A <= 1`, when one was recovered.
    pub dual: Option<DVector<f64>>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn to_json(&self) -> Value {
        json!({
            "x_hat": self.x_hat.as_slice(),
            "objective": self.objective,
            "residual": self.residual,
            "gauge": self.gauge,
            "iterations": self.iterations,
            "status": self.status,
        })
    }
}

/// Pick the program that matches the problem: noisy when `delta > 0`,
/// otherwise noiseless.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    match problem.delta {
        Some(d) if d > 0.0 => solve_noisy(problem, config),
        _ => solve_noiseless(problem, config),
    }
}
