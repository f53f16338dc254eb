//! Phase-transition experiments: empirical recovery rate against the number
//! of Gaussian measurements.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::atoms::{AtomicSet, SetParams};
use crate::error::{invalid, Result};
use crate::model::{synthesize_model, LinearMap, Problem};
use crate::rng::RngStream;
use crate::solvers::{solve_noiseless, SolveStatus, SolverConfig};

/// Relative error at or below which a recovery counts as exact.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_TRIALS: usize = 50;
pub const CSV_HEADER: &str = "n,trials,successes,success_rate,mean_rel_error,mean_seconds";

#[derive(Debug, Clone, Serialize)]
pub struct PhaseConfig {
    pub set: AtomicSet,
    pub params: SetParams,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub success_threshold: f64,
}

impl PhaseConfig {
    pub fn new(set: AtomicSet, params: SetParams, n_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            set,
            params,
            n_grid,
            trials: DEFAULT_TRIALS,
            seed,
            solver: SolverConfig::default(),
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.set.ambient_dim();
        if self.n_grid.is_empty() {
            return Err(invalid("measurement grid is empty"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("measurement grid must be strictly increasing"));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 1 || n > p) {
            return Err(invalid(format!("grid value n = {n} outside [1, {p}]")));
        }
        if self.trials == 0 {
            return Err(invalid("need at least one trial per grid point"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(invalid("success threshold must be positive"));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub rel_error: f64,
    pub seconds: f64,
    pub status: SolveStatus,
}

/// One recovery trial: draw a model from `truth_set` (child stream 0), a
/// Gaussian map with variance `1/n` (child stream 1), and solve the noiseless
/// program over `solve_set`.
fn trial(
    truth_set: &AtomicSet,
    solve_set: &AtomicSet,
    params: &SetParams,
    n: usize,
    rng: &RngStream,
    solver: &SolverConfig,
    threshold: f64,
) -> Result<TrialOutcome> {
    let p = solve_set.ambient_dim();
    if n < 1 || n > p {
        return Err(invalid(format!("measurement count n = {n} outside [1, {p}]")));
    }
    let model = synthesize_model(truth_set, params, &rng.child(0))?;
    let map = LinearMap::sample_gaussian(n, p, 1.0 / n as f64, &rng.child(1))?;
    let y = map.apply(&model.ambient)?;
    let problem = Problem::new(map, y, *solve_set, None)?;
    let truth_norm = model.ambient.norm();
    let rel = |x: &DVector<f64>| {
        let err = (x - &model.ambient).norm();
        if truth_norm > 0.0 {
            err / truth_norm
        } else {
            err
        }
    };
    let start = Instant::now();
    let outcome = solve_noiseless(&problem, solver);
    let seconds = start.elapsed().as_secs_f64();
    Ok(match outcome {
        Ok(report) => {
            let rel_error = rel(&report.x_hat);
            TrialOutcome {
                success: report.converged() && rel_error <= threshold,
                rel_error,
                seconds,
                status: report.status,
            }
        }
        Err(e) => {
            log::warn!("trial at n = {n} failed: {e}");
            TrialOutcome {
                success: false,
                rel_error: rel(&DVector::zeros(p)),
                seconds,
                status: SolveStatus::MaxIter,
            }
        }
    })
}

/// Run one trial of the phase experiment for `set` at `n` measurements.
pub fn run_trial(
    set: &AtomicSet,
    params: &SetParams,
    n: usize,
    rng: &RngStream,
    solver: &SolverConfig,
) -> Result<TrialOutcome> {
    trial(set, set, params, n, rng, solver, DEFAULT_SUCCESS_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_rel_error: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseResult {
    pub config: PhaseConfig,
    /// Set the truth was drawn from when it differs from the solved set.
    pub truth_set: Option<AtomicSet>,
    pub records: Vec<PhaseRecord>,
    /// Adjacent grid values `(n_i, n_{i+1})` where the success rate drops by
    /// more than `2 / trials`.
    pub monotonicity_violations: Vec<(usize, usize)>,
}

/// Progress callback, invoked after each grid point.
pub type Progress<'a> = &'a (dyn Fn(&PhaseRecord) + Sync);

fn phase(config: &PhaseConfig, truth_set: &AtomicSet, progress: Option<Progress>) -> Result<PhaseResult> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.n_grid.len());
    for (ni, &n) in config.n_grid.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = (0..config.trials)
            .into_par_iter()
            .map(|ti| {
                let stream = RngStream::new(config.seed, (ni * config.trials + ti) as u64);
                trial(truth_set, &config.set, &config.params, n, &stream, &config.solver, config.success_threshold)
            })
            .collect::<Result<_>>()?;
        let trials = outcomes.len();
        let successes = outcomes.iter().filter(|o| o.success).count();
        let record = PhaseRecord {
            n,
            trials,
            successes,
            success_rate: successes as f64 / trials as f64,
            mean_rel_error: outcomes.iter().map(|o| o.rel_error).sum::<f64>() / trials as f64,
            mean_seconds: outcomes.iter().map(|o| o.seconds).sum::<f64>() / trials as f64,
        };
        if let Some(cb) = progress {
            cb(&record);
        }
        records.push(record);
    }
    let slack = 2.0 / config.trials as f64;
    let monotonicity_violations = records
        .windows(2)
        .filter(|w| w[1].success_rate < w[0].success_rate - slack - 1e-12)
        .map(|w| (w[0].n, w[1].n))
        .collect();
    Ok(PhaseResult {
        config: config.clone(),
        truth_set: (truth_set != &config.set).then_some(*truth_set),
        records,
        monotonicity_violations,
    })
}

/// Success rate over the measurement grid. Trial `i` at grid index `j` uses
/// stream `(seed, j * trials + i)`, so results depend only on the config.
pub fn run_phase(config: &PhaseConfig, progress: Option<Progress>) -> Result<PhaseResult> {
    phase(config, &config.set, progress)
}

impl PhaseResult {
    /// CSV with the fixed header. Timings vary between runs, so the
    /// `mean_seconds` column is zero unless `timings` is set.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let secs = if timings { r.mean_seconds } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.trials, r.successes, r.success_rate, r.mean_rel_error, secs
            )
            .expect("writing to a String");
        }
        out
    }

    /// Interpolated measurement count where the success rate first reaches
    /// one half, if that happens inside the grid.
    pub fn crossing(&self) -> Option<f64> {
        let recs = &self.records;
        if recs.first()?.success_rate >= 0.5 {
            return None;
        }
        recs.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            (a.success_rate < 0.5 && b.success_rate >= 0.5).then(|| {
                let frac = (0.5 - a.success_rate) / (b.success_rate - a.success_rate);
                a.n as f64 + frac * (b.n - a.n) as f64
            })
        })
    }

    pub fn rate_at(&self, n: usize) -> Option<f64> {
        self.records.iter().find(|r| r.n == n).map(|r| r.success_rate)
    }

    /// Configuration echo and summary for the JSON sidecar.
    pub fn sidecar(&self) -> Value {
        json!({
            "set": self.config.set.id(),
            "truth_set": self.truth_set.map(|s| s.id()),
            "set_params": self.config.set.params(),
            "model_params": self.config.params,
            "n_grid": self.config.n_grid,
            "trials": self.config.trials,
            "seed": self.config.seed,
            "success_threshold": self.config.success_threshold,
            "solver": self.config.solver,
            "crossing": self.crossing(),
            "monotonicity_violations": self.monotonicity_violations,
        })
    }
}

/// Cut-matrix recovery under the elliptope relaxation (`p1`) and the
/// symmetric-hypercube relaxation (`p2`). The exact cut polytope is not run.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxationComparison {
    pub p1: PhaseResult,
    pub p2: PhaseResult,
    /// Always `None`: optimizing over the cut polytope itself is intractable.
    pub exact: Option<PhaseResult>,
}

/// Both relaxations see the same instances: trial `(n, i)` draws its cut
/// matrix and map from the same stream for each.
pub fn run_relaxation_comparison(
    m: usize,
    n_grid: Vec<usize>,
    trials: usize,
    seed: u64,
    solver: &SolverConfig,
    progress: Option<Progress>,
) -> Result<RelaxationComparison> {
    if m < 3 {
        return Err(invalid(format!("relaxation comparison needs m >= 3, got {m}")));
    }
    let truth = AtomicSet::elliptope(m)?;
    let make = |set: AtomicSet| PhaseConfig {
        trials,
        solver: solver.clone(),
        ..PhaseConfig::new(set, SetParams::default(), n_grid.clone(), seed)
    };
    let p1 = phase(&make(truth), &truth, progress)?;
    let p2 = phase(&make(AtomicSet::hypercube_sym(m)?), &truth, progress)?;
    Ok(RelaxationComparison { p1, p2, exact: None })
}
