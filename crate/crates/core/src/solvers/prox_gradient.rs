use std::collections::VecDeque;

use nalgebra::DVector;

use super::{SolveReport, SolveStatus, SolverConfig, StepRule};
use crate::error::{invalid, Error, Result};
use crate::model::Problem;

const POWER_ITERATIONS: usize = 50;
const OBJ_WINDOW: usize = 10;
const MIN_STEP: f64 = 1e-300;

/// Minimize `||Phi x - y||^2 + lambda ||x||_A` from `x = 0`.
///
/// With `acceleration` the iteration uses Nesterov momentum with adaptive
/// restart; without it the objective sequence is non-increasing.
pub fn prox_gradient(problem: &Problem, lambda: f64, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let mut state = ProxGradient::new(problem, config)?;
    state.run(&DVector::zeros(problem.map.p()), lambda)
}

/// Warm-startable driver; keeps the step size across calls.
pub(crate) struct ProxGradient<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    initial_step: f64,
    pub step: f64,
    /// Objective trace of the most recent run.
    pub trace: Vec<f64>,
}

impl<'a> ProxGradient<'a> {
    pub fn new(problem: &'a Problem, config: &'a SolverConfig) -> Result<Self> {
        if !problem.set.has_prox() {
            return Err(Error::MissingCapability {
                set: problem.set.id(),
                capability: "a prox operator",
            });
        }
        let step = match config.step {
            StepRule::Fixed(a) => a,
            StepRule::Backtracking => {
                let norm = problem.map.norm_estimate(POWER_ITERATIONS);
                if norm > 0.0 {
                    1.0 / (norm * norm)
                } else {
                    1.0
                }
            }
        };
        Ok(Self {
            problem,
            config,
            initial_step: step,
            step,
            trace: Vec::new(),
        })
    }

    pub fn run(&mut self, x0: &DVector<f64>, lambda: f64) -> Result<SolveReport> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        let set = self.problem.set;
        let phi = self.problem.map.matrix();
        let y = &self.problem.y;
        let backtrack = self.config.step == StepRule::Backtracking;
        self.step = self.initial_step;
        // Absolute rounding error of ||Phi v - y||^2 is about ||r|| eps (||Phi v|| + ||y||).
        let data_scale = 1.0 + y.norm();

        let mut x = x0.clone();
        let mut ax = phi * &x;
        let mut obj = (&ax - y).norm_squared() + lambda * set.gauge(&x)?;
        let mut v = x.clone();
        let mut av = ax.clone();
        let mut theta = 1.0f64;
        let mut window: VecDeque<f64> = VecDeque::with_capacity(OBJ_WINDOW + 1);
        window.push_back(obj);
        self.trace.clear();
        self.trace.push(obj);

        let mut status = SolveStatus::MaxIter;
        let mut iterations = 0;
        for it in 1..=self.config.max_iter {
            iterations = it;
            let rv = &av - y;
            let fv = rv.norm_squared();
            let grad = phi.tr_mul(&rv) * 2.0;
            let (xn, gn, axn, fxn) = loop {
                let (xn, gn) = set.prox_with_gauge(&(&v - &grad * self.step), self.step * lambda)?;
                let axn = phi * &xn;
                let fxn = (&axn - y).norm_squared();
                if !backtrack {
                    break (xn, gn, axn, fxn);
                }
                let d = &xn - &v;
                let bound = fv + grad.dot(&d) + d.norm_squared() / (2.0 * self.step);
                let slack = 1e-12 * (fv.sqrt() + fxn.sqrt()) * data_scale;
                if fxn <= bound + slack || self.step < MIN_STEP {
                    break (xn, gn, axn, fxn);
                }
                self.step *= 0.5;
            };
            let obj_n = fxn + lambda * gn;
            if !obj_n.is_finite() {
                return Err(Error::Numerical(format!("objective became {obj_n} at iteration {it}")));
            }
            if self.config.acceleration {
                let restart = obj_n > obj || (&v - &xn).dot(&(&xn - &x)) > 0.0;
                if restart {
                    theta = 1.0;
                    v = xn.clone();
                    av = axn.clone();
                } else {
                    let theta_n = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                    let beta = (theta - 1.0) / theta_n;
                    v = &xn + (&xn - &x) * beta;
                    av = &axn + (&axn - &ax) * beta;
                    theta = theta_n;
                }
            } else {
                v = xn.clone();
                av = axn.clone();
            }
            let stalled = xn == x;
            x = xn;
            ax = axn;
            obj = obj_n;
            self.trace.push(obj);
            window.push_back(obj);
            if window.len() > OBJ_WINDOW + 1 {
                window.pop_front();
            }
            let settled = window.len() == OBJ_WINDOW + 1
                && (window[0] - obj).abs() <= self.config.tol_obj * obj.abs();
            if settled || (stalled && v == x) {
                status = SolveStatus::Converged;
                break;
            }
        }
        let residual = (&ax - y).norm();
        let gauge = set.gauge(&x)?;
        Ok(SolveReport {
            x_hat: x,
            objective: residual * residual + lambda * gauge,
            residual,
            gauge: Some(gauge),
            iterations,
            status,
            lambda: Some(lambda),
            dual: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomicSet;
    use crate::model::LinearMap;
    use crate::rng::{normal_vec, RngStream};
    use nalgebra::DMatrix;

    fn problem(phi: DMatrix<f64>, y: Vec<f64>, set: AtomicSet) -> Problem {
        Problem::new(LinearMap::new(phi).unwrap(), DVector::from_vec(y), set, None).unwrap()
    }

    #[test]
    fn identity_map_is_one_soft_threshold() {
        let p = problem(DMatrix::identity(2, 2), vec![2.0, -0.3], AtomicSet::l1(2).unwrap());
        // ||x - y||^2 + lambda ||x||_1 is minimized by soft-thresholding at lambda/2.
        let r = prox_gradient(&p, 1.0, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert!((&r.x_hat - DVector::from_vec(vec![1.5, 0.0])).amax() < 1e-10);
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut rng = RngStream::new(4, 0).generator();
        let phi = DMatrix::from_fn(5, 8, |_, _| crate::rng::normal(&mut rng));
        let p = problem(phi, vec![0.0; 5], AtomicSet::l1(8).unwrap());
        let r = prox_gradient(&p, 0.3, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, DVector::zeros(8));
    }

    #[test]
    fn first_order_optimality_on_random_lasso() {
        let s = RngStream::new(17, 0);
        let map = LinearMap::sample_gaussian(10, 40, 0.1, &s.child(0)).unwrap();
        let y = normal_vec(&mut s.child(1).generator(), 10);
        let p = Problem::new(map, y, AtomicSet::l1(40).unwrap(), None).unwrap();
        let lambda = 1e-2;
        let r = prox_gradient(&p, lambda, &SolverConfig::default()).unwrap();
        assert!(r.converged());
        // 0 in 2 Phi^T (Phi x - y) + lambda d||x||_1, coordinate by coordinate.
        let g = p.map.adjoint(&(p.map.apply(&r.x_hat).unwrap() - &p.y)).unwrap() * 2.0;
        let mut worst = 0.0f64;
        for i in 0..40 {
            let xi = r.x_hat[i];
            let viol = if xi != 0.0 {
                (g[i] + lambda * xi.signum()).abs()
            } else {
                (g[i].abs() - lambda).max(0.0)
            };
            worst = worst.max(viol);
        }
        assert!(worst < 1e-6 * lambda.max(1.0), "violation {worst}");
        // The certified optimum: any perturbation along coordinate axes is no better.
        let obj = |x: &DVector<f64>| (p.map.apply(x).unwrap() - &p.y).norm_squared() + lambda * x.abs().sum();
        let base = obj(&r.x_hat);
        for i in 0..40 {
            for h in [-1e-4, 1e-4] {
                let mut z = r.x_hat.clone();
                z[i] += h;
                assert!(obj(&z) >= base - 1e-6);
            }
        }
    }

    #[test]
    fn plain_iteration_is_monotone() {
        let s = RngStream::new(18, 0);
        let map = LinearMap::sample_gaussian(8, 16, 0.125, &s.child(0)).unwrap();
        let y = normal_vec(&mut s.child(1).generator(), 8);
        let cfg = SolverConfig {
            acceleration: false,
            max_iter: 500,
            ..Default::default()
        };
        for set in [AtomicSet::l1(16).unwrap(), AtomicSet::nuclear(4, 4).unwrap(), AtomicSet::spectral(4).unwrap()] {
            let p = Problem::new(map.clone(), y.clone(), set, None).unwrap();
            let mut solver = ProxGradient::new(&p, &cfg).unwrap();
            solver.run(&DVector::zeros(16), 0.05).unwrap();
            for w in solver.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn rejects_sets_without_prox() {
        let p = problem(DMatrix::identity(4, 4), vec![1.0, 0.0, 0.0, 1.0], AtomicSet::birkhoff(2).unwrap());
        assert!(matches!(
            prox_gradient(&p, 1.0, &SolverConfig::default()),
            Err(Error::MissingCapability { .. })
        ));
        let p = problem(DMatrix::identity(2, 2), vec![1.0, 0.0], AtomicSet::l1(2).unwrap());
        assert!(prox_gradient(&p, 0.0, &SolverConfig::default()).is_err());
    }
}
