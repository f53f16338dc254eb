use nalgebra::{DMatrix, DVector};

use super::prox_gradient::ProxGradient;
use super::{solve_gauge_splitting, SolveReport, SolveStatus, SolverConfig};
use crate::atoms::AtomicSet;
use crate::error::{Error, Result};
use crate::linalg::{self, flatten, unflatten};
use crate::model::Problem;

/// Solve `min ||x||_A s.t. Phi x = y`.
///
/// Prox sets run the penalized problem along the weight schedule, warm
/// starting each stage, until `||Phi x - y|| <= tol_feas (1 + ||y||)`. Sets
/// described by cone blocks go to [`solve_gauge_splitting`].
pub fn solve_noiseless(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let set = problem.set;
    if set.has_prox() {
        continuation(problem, config)
    } else if set.gauge_description().is_some() {
        solve_gauge_splitting(problem, config)
    } else {
        Err(Error::MissingCapability {
            set: set.id(),
            capability: "a prox operator or a gauge description",
        })
    }
}

fn continuation(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    let set = problem.set;
    let y = &problem.y;
    let target = config.tol_feas * (1.0 + y.norm());
    let lambda0 = set.dual_norm(&problem.map.adjoint(y)?)?;
    let p = problem.map.p();
    if lambda0 == 0.0 {
        // y is orthogonal to the range of Phi: x = 0 is the only candidate.
        let residual = y.norm();
        return Ok(SolveReport {
            x_hat: DVector::zeros(p),
            objective: 0.0,
            residual,
            gauge: Some(0.0),
            iterations: 0,
            status: if residual <= target {
                SolveStatus::Converged
            } else {
                SolveStatus::Infeasible
            },
            lambda: None,
            dual: (residual <= target).then(|| DVector::zeros(problem.map.n())),
        });
    }
    let mut solver = ProxGradient::new(problem, config)?;
    let mut x = DVector::zeros(p);
    let mut iterations = 0;
    let mut last = None;
    for lambda in config.schedule.weights(lambda0) {
        let stage = solver.run(&x, lambda)?;
        iterations += stage.iterations;
        x = stage.x_hat.clone();
        log::trace!(
            "lambda {lambda:.3e}: residual {:.3e} after {} iterations ({:?})",
            stage.residual,
            stage.iterations,
            stage.status
        );
        let done = stage.residual <= target && stage.converged();
        last = Some(stage);
        if done {
            break;
        }
    }
    let stage = last.expect("schedule yields at least one weight");
    let gauge = stage.gauge.unwrap_or(f64::NAN);
    let status = if stage.residual <= target && stage.converged() {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    let dual = match (status, stage.lambda) {
        (SolveStatus::Converged, Some(l)) => dual_certificate(problem, &stage.x_hat, l).ok(),
        _ => None,
    };
    Ok(SolveReport {
        objective: gauge,
        residual: stage.residual,
        gauge: Some(gauge),
        iterations,
        status,
        lambda: stage.lambda,
        dual,
        x_hat: stage.x_hat,
    })
}

/// Relative cutoff for the support (entries or singular values) of a solver
/// output. Solutions are only accurate to about `tol_feas`, so the exact rank
/// cutoff would count solver noise as support and inflate the tangent space.
const SUPPORT_TOL: f64 = 1e-5;

/// Alternating-projection budget for the certificate search.
const CERT_ITERS: usize = 2000;

/// Douglas-Rachford budget for the certificate refinement, and how often its
/// dual estimate is evaluated.
const REFINE_ITERS: usize = 1000;
const REFINE_CHECK: usize = 25;

/// Tangent space of the norm at `x` for sets where it is explicit.
struct Tangent {
    /// Orthogonal projector onto the tangent space, acting on flat vectors.
    proj: DMatrix<f64>,
    /// The subgradient element lying in the tangent space.
    sub: DVector<f64>,
    kind: TangentKind,
}

enum TangentKind {
    Entries,
    Matrix { m1: usize, m2: usize, pu: DMatrix<f64>, pv: DMatrix<f64> },
}

impl Tangent {
    /// Nearest point to `w` among vectors equal to `sub` on the tangent
    /// space with dual norm at most one on its complement.
    fn project_dual_face(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.kind {
            TangentKind::Entries => Ok(DVector::from_fn(w.len(), |i, _| {
                if self.proj[(i, i)] > 0.5 {
                    self.sub[i]
                } else {
                    w[i].clamp(-1.0, 1.0)
                }
            })),
            TangentKind::Matrix { m1, m2, pu, pv } => {
                let wm = unflatten(w, *m1, *m2);
                let qu = DMatrix::identity(*m1, *m1) - pu;
                let qv = DMatrix::identity(*m2, *m2) - pv;
                let off = &qu * wm * &qv;
                let f = linalg::svd(&off)?;
                let clipped = f.singular_values.map(|v| v.min(1.0));
                Ok(&self.sub + flatten(&linalg::compose(&f.u, &clipped, &f.v_t)))
            }
        }
    }
}

fn tangent_space(set: &AtomicSet, x: &DVector<f64>) -> Result<Option<Tangent>> {
    let p = x.len();
    match *set {
        AtomicSet::L1 { .. } => {
            let cut = SUPPORT_TOL * x.amax();
            let mut proj = DMatrix::zeros(p, p);
            let mut sub = DVector::zeros(p);
            for i in 0..p {
                if x[i].abs() > cut {
                    proj[(i, i)] = 1.0;
                    sub[i] = x[i].signum();
                }
            }
            Ok(Some(Tangent { proj, sub, kind: TangentKind::Entries }))
        }
        AtomicSet::Nuclear { m1, m2 } => {
            let svd = linalg::svd(&unflatten(x, m1, m2))?;
            let top = svd.singular_values.max();
            let r = svd.singular_values.iter().filter(|&&v| v > SUPPORT_TOL * top).count();
            let u = svd.u.columns(0, r).into_owned();
            let v = svd.v_t.rows(0, r).transpose();
            let pu = &u * u.transpose();
            let pv = &v * v.transpose();
            let apply = |e: &DMatrix<f64>| -> DMatrix<f64> { &pu * e + e * &pv - &pu * e * &pv };
            let mut proj = DMatrix::zeros(p, p);
            for k in 0..p {
                let mut e = DMatrix::zeros(m1, m2);
                e[(k / m2, k % m2)] = 1.0;
                proj.set_column(k, &flatten(&apply(&e)));
            }
            let sub = flatten(&(&u * v.transpose()));
            Ok(Some(Tangent { proj, sub, kind: TangentKind::Matrix { m1, m2, pu, pv } }))
        }
        _ => Ok(None),
    }
}

fn pinv(m: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let top = linalg::singular_values(m).max();
    if top == 0.0 {
        return Ok(None);
    }
    m.clone()
        .pseudo_inverse(1e-10 * top)
        .map(Some)
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Dual value `<y, z>` after scaling `z` into the dual-norm unit ball.
fn scaled_value(problem: &Problem, z: &DVector<f64>) -> Result<(f64, f64)> {
    let scale = problem.set.dual_norm(&problem.map.adjoint(z)?)?;
    Ok((problem.y.dot(z) / scale.max(1.0), scale))
}

/// Douglas-Rachford on `min ||v||_A + indicator(Phi x = y)` warm started at
/// `x`. At a fixed point `(x - w) / gamma` is a subgradient of the norm that
/// lies in the range of `Phi^T`, which is exactly a dual certificate. Returns
/// the best multiplier seen, by scaled dual value.
fn refine_by_splitting(problem: &Problem, x: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let gamma = 0.1 * x.norm();
    if gamma == 0.0 {
        return Ok(None);
    }
    let phi = problem.map.matrix();
    let Some(lift) = pinv(&phi.transpose())? else {
        return Ok(None);
    };
    let affine = linalg::AffineProjector::new(phi, &problem.y)?;
    let mut w = x.clone();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for it in 1..=REFINE_ITERS {
        let xa = affine.project(&w);
        let v = problem.set.prox(&(2.0 * &xa - &w), gamma)?;
        w += v - xa;
        if it % REFINE_CHECK == 0 {
            let z = &lift * ((affine.project(&w) - &w) / gamma);
            let (value, scale) = scaled_value(problem, &z)?;
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, z));
            }
            if scale <= 1.0 {
                break;
            }
        }
    }
    Ok(best.map(|(_, z)| z))
}

/// Dual vector for the noiseless program recovered from the penalized
/// multiplier `z = 2 (y - Phi x) / lambda`.
///
/// For the l1 and nuclear norms the multiplier is first corrected by a
/// least-norm step so that `Phi^T z` matches the subgradient on the tangent
/// space at `x`. The remaining freedom (multipliers whose image misses the
/// tangent space) is then searched by alternating projections for a point
/// whose image has dual norm at most one off the tangent space. If that
/// still falls short, a Douglas-Rachford refinement started at `x` supplies
/// a second candidate and the better one is kept. Whatever is left is scaled
/// into the dual-norm unit ball: `||Phi^T z||*_A <= 1`.
pub fn dual_certificate(problem: &Problem, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let set = &problem.set;
    let phi = problem.map.matrix();
    let mut z = (&problem.y - phi * x) * (2.0 / lambda);
    if let Some(tangent) = tangent_space(set, x)? {
        let k = &tangent.proj * phi.transpose();
        if let Some(k_pinv) = pinv(&k)? {
            z += &k_pinv * (&tangent.sub - &k * &z);
            // multipliers invisible on the tangent space: I - K^+ K
            let free = DMatrix::identity(z.len(), z.len()) - &k_pinv * &k;
            let reach = phi.transpose() * &free;
            if let Some(reach_pinv) = pinv(&reach)? {
                let step = &free * reach_pinv;
                for _ in 0..CERT_ITERS {
                    let w = phi.transpose() * &z;
                    if set.dual_norm(&w)? <= 1.0 {
                        break;
                    }
                    let target = tangent.project_dual_face(&w)?;
                    z += &step * (target - w);
                }
            }
        }
        let (value, scale) = scaled_value(problem, &z)?;
        if scale > 1.0 {
            if let Some(refined) = refine_by_splitting(problem, x)? {
                if scaled_value(problem, &refined)?.0 > value {
                    z = refined;
                }
            }
        }
    }
    let scale = set.dual_norm(&problem.map.adjoint(&z)?)?;
    if scale > 1.0 {
        z /= scale;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::SetParams;
    use crate::model::{synthesize_model, LinearMap};
    use crate::rng::RngStream;

    #[test]
    fn recovers_one_sparse_vector() {
        let set = AtomicSet::l1(8).unwrap();
        let s = RngStream::new(31, 0);
        let map = LinearMap::sample_gaussian(6, 8, 1.0 / 6.0, &s).unwrap();
        let mut truth = DVector::zeros(8);
        truth[2] = 1.0;
        let y = map.apply(&truth).unwrap();
        let p = Problem::new(map, y, set, None).unwrap();
        let r = solve_noiseless(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert!((&r.x_hat - &truth).norm() <= 1e-3 * truth.norm());
    }

    #[test]
    fn determined_system_inverts() {
        let set = AtomicSet::l1(5).unwrap();
        let map = LinearMap::sample_gaussian(5, 5, 0.2, &RngStream::new(32, 0)).unwrap();
        let truth = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.5]);
        let y = map.apply(&truth).unwrap();
        let p = Problem::new(map, y, set, None).unwrap();
        let r = solve_noiseless(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert!((&r.x_hat - &truth).norm() <= 1e-4 * truth.norm());
    }

    #[test]
    fn zero_data_gives_zero() {
        let set = AtomicSet::nuclear(3, 3).unwrap();
        let map = LinearMap::sample_gaussian(4, 9, 0.25, &RngStream::new(33, 0)).unwrap();
        let p = Problem::new(map, DVector::zeros(4), set, None).unwrap();
        let r = solve_noiseless(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, DVector::zeros(9));
    }

    #[test]
    fn certificate_on_low_rank_recovery() {
        let set = AtomicSet::nuclear(6, 6).unwrap();
        let s = RngStream::new(34, 0);
        let params = SetParams {
            r: Some(1),
            ..Default::default()
        };
        let model = synthesize_model(&set, &params, &s.child(0)).unwrap();
        let map = LinearMap::sample_gaussian(30, 36, 1.0 / 30.0, &s.child(1)).unwrap();
        let y = map.apply(&model.ambient).unwrap();
        let p = Problem::new(map, y, set, None).unwrap();
        let r = solve_noiseless(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        let z = r.dual.as_ref().unwrap();
        let dual = set.dual_norm(&p.map.adjoint(z).unwrap()).unwrap();
        assert!(dual <= 1.0 + 1e-6);
        assert!(p.y.dot(z) >= r.gauge.unwrap() - 1e-6);
    }
}
