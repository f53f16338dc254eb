//! Command-line front end: `solve`, `width`, `bound` and `phase`.
//!
//! Exit codes: 0 on success, 1 on usage or I/O errors, 2 when a solver does
//! not converge.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::atoms::{AtomicSet, SetParams};
use crate::error::{invalid, Error, Result};
use crate::experiments::{run_phase, run_relaxation_comparison, PhaseConfig, PhaseRecord, PhaseResult};
use crate::geometry::{
    bound_catalog, bound_volume, measurement_budget, model_width, subspace_width, terracini_lower_bound, BoundSet,
};
use crate::model::Problem;
use crate::rng::RngStream;
use crate::solvers::{self, SolveStatus, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;

/// Environment variable capping worker threads (0 or unset: automatic).
pub const THREADS_ENV: &str = "ATOMIC_THREADS";

const WIDTH_SETS: &str = "l1 (sparse), nuclear (low-rank), linf (sign), subspace";

#[derive(Debug, Parser)]
#[command(name = "atomic-norm", version, about = "Atomic-norm recovery, width budgets and phase transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a problem file and print the report as JSON.
    Solve(SolveArgs),
    /// Monte-Carlo Gaussian width of a tangent cone.
    Width(WidthArgs),
    /// Closed-form width bounds and measurement budgets.
    Bound(BoundArgs),
    /// Phase-transition experiment written as CSV.
    Phase(PhaseArgs),
}

#[derive(Debug, Args, Clone, Default)]
struct SetFlags {
    /// Atomic set (l1, nuclear, linf, spectral, birkhoff, cut-p1, cut-p2 or an alias).
    #[arg(long)]
    set: String,
    /// Sparsity.
    #[arg(long)]
    s: Option<usize>,
    /// Rank.
    #[arg(long)]
    r: Option<usize>,
    /// Face dimension or subspace dimension.
    #[arg(long)]
    k: Option<usize>,
    /// Matrix side, or number of vertices for vertex-transitive bounds.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Vector length.
    #[arg(long)]
    p: Option<usize>,
}

impl SetFlags {
    fn params(&self) -> SetParams {
        SetParams {
            s: self.s,
            r: self.r,
            k: self.k,
            m: self.m,
            m1: self.m1,
            m2: self.m2,
            p: self.p,
        }
    }

    fn atomic_set(&self) -> Result<AtomicSet> {
        AtomicSet::from_id(canonical_id(&self.set), &self.params(), None)
    }
}

/// Map descriptive aliases onto catalog identifiers.
fn canonical_id(name: &str) -> &str {
    match name {
        "sparse" => "l1",
        "low-rank" => "nuclear",
        "sign" => "linf",
        "orthogonal" => "spectral",
        "permutation" => "birkhoff",
        other => other,
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Problem JSON file.
    #[arg(long)]
    problem: PathBuf,
    /// Solve the penalized problem with this weight instead.
    #[arg(long)]
    lambda: Option<f64>,
    /// Noise bound; overrides the file's `delta`.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WidthArgs {
    #[command(flatten)]
    set: SetFlags,
    #[arg(long, default_value_t = crate::geometry::DEFAULT_WIDTH_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[command(flatten)]
    set: SetFlags,
    /// Minimum gain for the robust budget.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Normal-cone volume fraction for the volume bound (needs --p).
    #[arg(long)]
    theta: Option<f64>,
    /// Atom manifold dimension for the Terracini bound.
    #[arg(long)]
    dim_a: Option<usize>,
}

#[derive(Debug, Args)]
struct PhaseArgs {
    #[command(flatten)]
    set: SetFlags,
    /// Inclusive grid `lo:hi:step`.
    #[arg(long)]
    n_grid: String,
    #[arg(long, default_value_t = crate::experiments::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Record wall-clock seconds (makes the CSV run-dependent).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    max_iter: Option<usize>,
}

/// Parse `lo:hi:step` into the inclusive grid.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = text.split(':').collect();
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| invalid(format!("grid `{text}`: `{s}` is not a nonnegative integer")))
    };
    let (lo, hi, step) = match parts.as_slice() {
        [lo, hi, step] => (parse(lo)?, parse(hi)?, parse(step)?),
        [lo, hi] => (parse(lo)?, parse(hi)?, 1),
        [n] => {
            let n = parse(n)?;
            (n, n, 1)
        }
        _ => return Err(invalid(format!("grid `{text}` must look like lo:hi:step"))),
    };
    if step == 0 || hi < lo {
        return Err(invalid(format!("grid `{text}` needs step >= 1 and lo <= hi")));
    }
    Ok((lo..=hi).step_by(step).collect())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let mut problem = Problem::load(&args.problem)?;
    if let Some(d) = args.delta {
        if !(d >= 0.0) {
            return Err(invalid(format!("--delta must be nonnegative, got {d}")));
        }
        problem.delta = Some(d);
    }
    let mut config = SolverConfig::default();
    if let Some(m) = args.max_iter {
        config.max_iter = m;
    }
    if let Some(t) = args.tol_feas {
        config.tol_feas = t;
    }
    config.validate()?;
    let report = match args.lambda {
        Some(l) => solvers::prox_gradient(&problem, l, &config),
        None => solvers::solve(&problem, &config),
    };
    let report = match report {
        Ok(r) => r,
        Err(e @ (Error::NonConvergence { .. } | Error::Bracket { .. })) => {
            eprintln!("error: {e}");
            return Ok(EXIT_NONCONVERGENCE);
        }
        Err(e) => return Err(e),
    };
    write_output(args.out.as_deref(), &pretty(&report.to_json()))?;
    Ok(match report.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxIter | SolveStatus::Infeasible => EXIT_NONCONVERGENCE,
    })
}

fn cmd_width(args: &WidthArgs) -> Result<i32> {
    if args.samples < 2 {
        return Err(invalid(format!(
            "--samples must be at least 2 (stderr undefined), got {}",
            args.samples
        )));
    }
    let rng = RngStream::new(args.seed, 0);
    let est = match canonical_id(&args.set.set) {
        "subspace" => {
            let p = args.set.p.ok_or_else(|| invalid("subspace width needs --p"))?;
            let k = args.set.k.ok_or_else(|| invalid("subspace width needs --k"))?;
            subspace_width(k, p, args.samples, &rng)?
        }
        id @ ("l1" | "nuclear" | "linf") => {
            let set = AtomicSet::from_id(id, &args.set.params(), None)?;
            model_width(&set, &args.set.params(), args.samples, &rng)?.1
        }
        other => {
            return Err(invalid(format!(
                "no width oracle for set `{other}`; supported sets: {WIDTH_SETS}"
            )))
        }
    };
    write_output(None, &pretty(&serde_json::to_value(est)?))?;
    Ok(EXIT_OK)
}

fn cmd_bound(args: &BoundArgs) -> Result<i32> {
    let kind: BoundSet = canonical_id(&args.set.set).parse()?;
    let params = args.set.params();
    let width_sq = bound_catalog(kind, &params)?;
    let budget = measurement_budget(width_sq.sqrt(), args.epsilon.unwrap_or(0.0))?;
    let mut out = Map::new();
    out.insert("width_sq_bound".into(), json!(width_sq));
    out.insert("n_exact".into(), json!(budget.n_exact));
    if args.epsilon.is_some() {
        out.insert("n_robust".into(), json!(budget.n_robust));
    }
    let terracini = match (args.dim_a, kind) {
        (Some(d), _) => {
            let p = args.set.p.ok_or_else(|| invalid("--dim-a needs --p"))?;
            Some(terracini_lower_bound(d, args.set.k.unwrap_or(1), p))
        }
        (None, BoundSet::LowRank) => {
            let (m1, m2) = match (params.m1, params.m2) {
                (Some(a), Some(b)) => (a, b),
                _ => (params.m.unwrap_or(0), params.m.unwrap_or(0)),
            };
            let r = params.r.unwrap_or(1);
            Some(terracini_lower_bound(m1 + m2 - 2, r, m1 * m2))
        }
        _ => None,
    };
    if let Some(t) = terracini {
        out.insert("terracini_lower".into(), json!(t));
    }
    if let Some(theta) = args.theta {
        let p = args.set.p.ok_or_else(|| invalid("--theta needs --p"))?;
        out.insert("volume_bound".into(), serde_json::to_value(bound_volume(theta, p)?)?);
    }
    write_output(None, &pretty(&Value::Object(out)))?;
    Ok(EXIT_OK)
}

/// `dir/stem.csv` -> `dir/stem{suffix}.{ext}`.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn write_phase(result: &PhaseResult, csv: &Path, timings: bool) -> Result<()> {
    fs::write(csv, result.to_csv(timings))?;
    fs::write(sibling(csv, "", "json"), pretty(&result.sidecar()))?;
    Ok(())
}

fn report_progress(label: &str) -> impl Fn(&PhaseRecord) + Sync + '_ {
    move |r: &PhaseRecord| {
        eprintln!(
            "[{label}] n = {:>4}: {}/{} recovered (mean relative error {:.3e})",
            r.n, r.successes, r.trials, r.mean_rel_error
        );
    }
}

fn cmd_phase(args: &PhaseArgs) -> Result<i32> {
    let grid = parse_grid(&args.n_grid)?;
    let mut solver = SolverConfig::default();
    if let Some(m) = args.max_iter {
        solver.max_iter = m;
    }
    if args.set.set == "cut-compare" {
        let m = args.set.m.ok_or_else(|| invalid("cut-compare needs --m"))?;
        if let Some(&n) = grid.iter().find(|&&n| n > m * m) {
            return Err(invalid(format!("grid value n = {n} exceeds ambient dimension {}", m * m)));
        }
        let p1_progress = report_progress("cut-p1");
        let p2_progress = report_progress("cut-p2");
        // Progress labels follow the order the relaxations are run in.
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let points = grid.len();
        let progress = |r: &PhaseRecord| {
            let i = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if i < points {
                p1_progress(r)
            } else {
                p2_progress(r)
            }
        };
        let cmp = run_relaxation_comparison(m, grid, args.trials, args.seed, &solver, Some(&progress))?;
        write_phase(&cmp.p1, &sibling(&args.out, "_p1", "csv"), args.timings)?;
        write_phase(&cmp.p2, &sibling(&args.out, "_p2", "csv"), args.timings)?;
        eprintln!(
            "crossings: cut-p1 {:?}, cut-p2 {:?} (exact cut polytope not run: intractable)",
            cmp.p1.crossing(),
            cmp.p2.crossing()
        );
        return Ok(EXIT_OK);
    }
    let set = args.set.atomic_set()?;
    let p = set.ambient_dim();
    if let Some(&n) = grid.iter().find(|&&n| n > p || n == 0) {
        return Err(invalid(format!("grid value n = {n} outside [1, {p}]")));
    }
    let config = PhaseConfig {
        trials: args.trials,
        solver,
        ..PhaseConfig::new(set, args.set.params(), grid, args.seed)
    };
    let progress = report_progress(set.id());
    let result = run_phase(&config, Some(&progress))?;
    write_phase(&result, &args.out, args.timings)?;
    if !result.monotonicity_violations.is_empty() {
        eprintln!("warning: success rate drops at {:?}", result.monotonicity_violations);
    }
    Ok(EXIT_OK)
}

fn configure_threads() {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    // Fails only if a pool already exists, which is fine to keep.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

/// Run the CLI on the given arguments (including the program name) and
/// return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Width(a) => cmd_width(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Phase(a) => cmd_phase(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
