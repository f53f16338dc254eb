use nalgebra::DVector;

use super::prox_gradient::ProxGradient;
use super::{SolveReport, SolveStatus, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::model::Problem;

const BAND_LO: f64 = 0.95;
const BAND_HI: f64 = 1.05;
const MAX_HALVINGS: usize = 80;
const MAX_BISECTIONS: usize = 100;

/// Solve `min ||x||_A s.t. ||y - Phi x|| <= delta` by bisecting (in log scale)
/// on the weight of the penalized problem until the residual lands in
/// `[0.95 delta, 1.05 delta]`.
pub fn solve_noisy(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let delta = match problem.delta {
        Some(d) if d > 0.0 => d,
        other => return Err(invalid(format!("noisy solve needs delta > 0, got {other:?}"))),
    };
    let set = problem.set;
    let mut solver = ProxGradient::new(problem, config)?;
    let p = problem.map.p();
    let y_norm = problem.y.norm();
    if y_norm <= BAND_HI * delta {
        return Ok(SolveReport {
            x_hat: DVector::zeros(p),
            objective: 0.0,
            residual: y_norm,
            gauge: Some(0.0),
            iterations: 0,
            status: SolveStatus::Converged,
            lambda: None,
            dual: None,
        });
    }
    let in_band = |r: f64| (BAND_LO * delta..=BAND_HI * delta).contains(&r);
    let finish = |mut rep: SolveReport, iterations: usize| {
        rep.objective = rep.gauge.unwrap_or(f64::NAN);
        rep.iterations = iterations;
        rep.status = SolveStatus::Converged;
        rep
    };

    // Above this weight x = 0 is optimal, so the residual is ||y|| > delta.
    let mut hi = 2.0 * set.dual_norm(&problem.map.adjoint(&problem.y)?)?;
    let mut iterations = 0;
    let mut lo = hi;
    let mut warm = DVector::zeros(p);
    let mut found = None;
    for _ in 0..MAX_HALVINGS {
        lo *= 0.5;
        let rep = solver.run(&warm, lo)?;
        iterations += rep.iterations;
        warm = rep.x_hat.clone();
        if in_band(rep.residual) {
            return Ok(finish(rep, iterations));
        }
        if rep.residual < BAND_LO * delta {
            found = Some(rep);
            break;
        }
        hi = lo;
    }
    if found.is_none() {
        return Err(Error::Bracket {
            lo,
            hi,
            message: format!("residual stays above {delta} even at the smallest weight; the constraint may be infeasible"),
        });
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        let rep = solver.run(&warm, mid)?;
        iterations += rep.iterations;
        warm = rep.x_hat.clone();
        if in_band(rep.residual) {
            return Ok(finish(rep, iterations));
        }
        if rep.residual > BAND_HI * delta {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Err(Error::Bracket {
        lo,
        hi,
        message: "residual never entered the target band".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{AtomicSet, SetParams};
    use crate::geometry::min_gain_estimate;
    use crate::model::{synthesize_model, LinearMap};
    use crate::rng::{normal_vec, RngStream};
    use crate::solvers::solve_noiseless;

    #[test]
    fn large_delta_gives_zero() {
        let set = AtomicSet::l1(10).unwrap();
        let map = LinearMap::sample_gaussian(5, 10, 0.2, &RngStream::new(40, 0)).unwrap();
        let y = normal_vec(&mut RngStream::new(40, 1).generator(), 5);
        let d = y.norm();
        let p = Problem::new(map, y, set, Some(d)).unwrap();
        let r = solve_noisy(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, DVector::zeros(10));
    }

    #[test]
    fn vanishing_noise_matches_noiseless() {
        let set = AtomicSet::l1(20).unwrap();
        let s = RngStream::new(41, 0);
        let params = SetParams {
            s: Some(2),
            ..Default::default()
        };
        let model = synthesize_model(&set, &params, &s.child(0)).unwrap();
        let map = LinearMap::sample_gaussian(12, 20, 1.0 / 12.0, &s.child(1)).unwrap();
        let y = map.apply(&model.ambient).unwrap();
        let exact = solve_noiseless(&Problem::new(map.clone(), y.clone(), set, None).unwrap(), &SolverConfig::default()).unwrap();
        let noisy = solve_noisy(&Problem::new(map, y, set, Some(1e-6)).unwrap(), &SolverConfig::default()).unwrap();
        assert!((&noisy.x_hat - &exact.x_hat).norm() <= 1e-2 * exact.x_hat.norm());
    }

    #[test]
    fn error_within_gain_bound() {
        let set = AtomicSet::l1(20).unwrap();
        let s = RngStream::new(42, 0);
        let params = SetParams {
            s: Some(2),
            ..Default::default()
        };
        let model = synthesize_model(&set, &params, &s.child(0)).unwrap();
        let map = LinearMap::sample_gaussian(12, 20, 1.0 / 12.0, &s.child(1)).unwrap();
        let delta = 0.1;
        let mut noise = normal_vec(&mut s.child(2).generator(), 12);
        noise *= delta / noise.norm();
        let y = map.apply(&model.ambient).unwrap() + noise;
        let p = Problem::new(map.clone(), y, set, Some(delta)).unwrap();
        let r = solve_noisy(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        let gain = min_gain_estimate(&map, &model, 500, &s.child(3)).unwrap();
        assert!(gain > 0.0);
        let err = (&r.x_hat - &model.ambient).norm();
        assert!(err <= 2.0 * delta / gain, "error {err} vs bound {}", 2.0 * delta / gain);
    }
}
