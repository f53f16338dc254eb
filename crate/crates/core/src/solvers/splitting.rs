use nalgebra::{DMatrix, DVector};

use super::{SolveReport, SolveStatus, SolverConfig};
use crate::atoms::{ConeBlock, GaugeDescription};
use crate::error::{Error, Result};
use crate::linalg::AffineProjector;
use crate::model::Problem;
use crate::prox::{dykstra, Projection, DYKSTRA_MAX_ITER, DYKSTRA_TOL};

const RHO_INIT: f64 = 1.0;
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_FACTOR: f64 = 2.0;
const BALANCE_EVERY: usize = 10;

/// Solve `min t s.t. Phi x = y, (x, t) in cone(conv A)` for sets with a gauge
/// description, by ADMM on the lifted variable `w = (x, t)`.
///
/// One half-step projects onto the affine set `{Phi x = y}` intersected with
/// the description's equality rows (after a gradient step on `t`); the other
/// projects onto the conic blocks. The penalty starts at 1 and is rebalanced
/// by a factor 2 whenever one residual exceeds the other tenfold.
pub fn solve_gauge_splitting(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let set = problem.set;
    let desc = set.gauge_description().ok_or(Error::MissingCapability {
        set: set.id(),
        capability: "a gauge description",
    })?;
    let p = desc.dim;
    let n = problem.map.n();
    let rows = desc.affine.len();
    let mut m = DMatrix::zeros(n + rows, p + 1);
    m.view_mut((0, 0), (n, p)).copy_from(problem.map.matrix());
    m.view_mut((n, 0), (rows, p + 1)).copy_from(&desc.affine_matrix());
    let mut b = DVector::zeros(n + rows);
    b.rows_mut(0, n).copy_from(&problem.y);
    let affine = AffineProjector::new(&m, &b)?;
    let scale = 1.0 + problem.y.norm();

    if affine.inconsistency > config.tol_feas {
        let w = affine.project(&DVector::zeros(p + 1));
        let x = w.rows(0, p).into_owned();
        return Ok(SolveReport {
            residual: (problem.map.apply(&x)? - &problem.y).norm(),
            x_hat: x,
            objective: f64::INFINITY,
            gauge: None,
            iterations: 0,
            status: SolveStatus::Infeasible,
            lambda: None,
            dual: None,
        });
    }

    let cones = ConeProjector::new(&desc);
    let mut rho = RHO_INIT;
    let mut v = cones.project(&affine.project(&DVector::zeros(p + 1)))?;
    let mut u = DVector::zeros(p + 1);
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        iterations = it;
        let mut target = &v - &u;
        target[p] -= 1.0 / rho;
        let w = affine.project(&target);
        let v_prev = std::mem::replace(&mut v, cones.project(&(&w + &u))?);
        let diff = &w - &v;
        u += &diff;
        let r_pri = diff.norm();
        let r_dual = rho * (&v - &v_prev).norm();
        let eps_pri = config.tol_feas * (scale + w.norm().max(v.norm()));
        let eps_dual = config.tol_feas * (scale + rho * u.norm());
        if r_pri <= eps_pri && r_dual <= eps_dual {
            status = SolveStatus::Converged;
            break;
        }
        if it % BALANCE_EVERY == 0 {
            if r_pri > BALANCE_RATIO * r_dual {
                rho *= BALANCE_FACTOR;
                u /= BALANCE_FACTOR;
            } else if r_dual > BALANCE_RATIO * r_pri {
                rho /= BALANCE_FACTOR;
                u *= BALANCE_FACTOR;
            }
        }
    }
    let x = v.rows(0, p).into_owned();
    let t = v[p];
    let residual = (problem.map.apply(&x)? - &problem.y).norm();
    Ok(SolveReport {
        x_hat: x,
        objective: t,
        residual,
        gauge: Some(t),
        iterations,
        status,
        lambda: None,
        dual: None,
    })
}

/// Projection onto the intersection of the conic blocks and `t >= 0`.
struct ConeProjector<'a> {
    desc: &'a GaugeDescription,
}

impl<'a> ConeProjector<'a> {
    fn new(desc: &'a GaugeDescription) -> Self {
        Self { desc }
    }

    fn project(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let dim = self.desc.dim;
        match self.desc.cones.as_slice() {
            // The box cone already keeps t >= 0.
            [block @ ConeBlock::LinfBox { .. }] => block.project(w, dim),
            // These blocks leave t free, so the t >= 0 clamp is separable.
            [block] => {
                let mut out = block.project(w, dim)?;
                out[dim] = out[dim].max(0.0);
                Ok(out)
            }
            blocks => {
                let clamp = |w: &DVector<f64>| -> Result<DVector<f64>> {
                    let mut out = w.clone();
                    out[dim] = out[dim].max(0.0);
                    Ok(out)
                };
                let projections: Vec<Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + '_>> = blocks
                    .iter()
                    .map(|b| Box::new(move |w: &DVector<f64>| b.project(w, dim)) as Box<_>)
                    .collect();
                let mut refs: Vec<&dyn Projection> = projections.iter().map(|b| b as &dyn Projection).collect();
                refs.push(&clamp);
                Ok(dykstra(&refs, w, DYKSTRA_TOL, DYKSTRA_MAX_ITER)?.point)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{AtomicSet, SetParams};
    use crate::model::{synthesize_model, LinearMap};
    use crate::rng::RngStream;

    fn observed(set: AtomicSet, seed: u64) -> (Problem, DVector<f64>) {
        let model = synthesize_model(&set, &SetParams::default(), &RngStream::new(seed, 0)).unwrap();
        let p = set.ambient_dim();
        let map = LinearMap::identity(p).unwrap();
        let y = map.apply(&model.ambient).unwrap();
        (Problem::new(map, y, set, None).unwrap(), model.ambient)
    }

    #[test]
    fn fully_observed_permutation() {
        let (p, truth) = observed(AtomicSet::birkhoff(3).unwrap(), 1);
        let r = solve_gauge_splitting(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert!((r.gauge.unwrap() - 1.0).abs() < 1e-5);
        assert!((&r.x_hat - truth).amax() < 1e-5);
    }

    #[test]
    fn fully_observed_cut_matrix() {
        for set in [AtomicSet::elliptope(3).unwrap(), AtomicSet::hypercube_sym(3).unwrap()] {
            let (p, _) = observed(set, 2);
            let r = solve_gauge_splitting(&p, &SolverConfig::default()).unwrap();
            assert!(r.converged());
            assert!((r.gauge.unwrap() - 1.0).abs() < 1e-5, "{}: {:?}", set.id(), r.gauge);
        }
    }

    #[test]
    fn solution_satisfies_blocks() {
        let set = AtomicSet::birkhoff(4).unwrap();
        let s = RngStream::new(3, 0);
        let model = synthesize_model(&set, &SetParams::default(), &s.child(0)).unwrap();
        let map = LinearMap::sample_gaussian(12, 16, 1.0 / 12.0, &s.child(1)).unwrap();
        let y = map.apply(&model.ambient).unwrap();
        let cfg = SolverConfig::default();
        let p = Problem::new(map, y, set, None).unwrap();
        let r = solve_gauge_splitting(&p, &cfg).unwrap();
        assert!(r.converged());
        let desc = set.gauge_description().unwrap();
        let tol = 10.0 * cfg.tol_feas * (1.0 + p.y.norm() + r.x_hat.norm());
        assert!(desc.contains(&r.x_hat, r.gauge.unwrap(), tol).unwrap());
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let set = AtomicSet::birkhoff(2).unwrap();
        // Two identical rows with different data.
        let phi = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let p = Problem::new(LinearMap::new(phi).unwrap(), DVector::from_vec(vec![1.0, 2.0]), set, None).unwrap();
        let r = solve_gauge_splitting(&p, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }
}
