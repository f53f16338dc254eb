//! Projection and proximity primitives.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, shape_err, Error, Result};
use crate::linalg;

/// Asymmetry (Frobenius norm of the skew part) above which matrix projections
/// report caller misuse.
pub const SYMMETRY_REPORT_TOL: f64 = 1e-8;

/// Entrywise soft thresholding at level `mu`.
pub fn soft_threshold(x: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    if !(mu >= 0.0) {
        return Err(invalid(format!("soft threshold level must be >= 0, got {mu}")));
    }
    Ok(x.map(|v| shrink(v, mu)))
}

#[inline]
pub(crate) fn shrink(v: f64, mu: f64) -> f64 {
    if v > mu {
        v - mu
    } else if v < -mu {
        v + mu
    } else {
        0.0
    }
}

/// Threshold `tau >= 0` with `sum_i max(|x_i| - tau, 0) = radius`, found
/// exactly by sorting. Returns 0 when `x` is already inside the ball.
fn l1_threshold(x: &[f64], radius: f64) -> f64 {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return 0.0;
    }
    let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    a.sort_unstable_by(|p, q| q.total_cmp(p));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        cum += ak;
        let t = (cum - radius) / (k + 1) as f64;
        if ak > t {
            tau = t;
        } else {
            break;
        }
    }
    tau.max(0.0)
}

/// Euclidean projection onto `{z : ||z||_1 <= radius}`.
pub fn project_l1_ball(x: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
    if !(radius >= 0.0) {
        return Err(invalid(format!("l1 ball radius must be >= 0, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(DVector::zeros(x.len()));
    }
    let tau = l1_threshold(x.as_slice(), radius);
    if tau == 0.0 {
        return Ok(x.clone());
    }
    Ok(x.map(|v| shrink(v, tau)))
}

/// Euclidean projection onto the epigraph cone `{(x, t) : |x_i| <= t}`.
/// `x` and `t` are updated in place.
pub fn project_linf_cone(x: &mut [f64], t: &mut f64) {
    let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    a.sort_unstable_by(|p, q| q.total_cmp(p));
    // optimal tau solves tau - t = sum_i (|x_i| - tau)_+, clamped at 0
    let mut cum = 0.0;
    let mut tau = *t;
    for (k, &ak) in a.iter().enumerate() {
        if ak <= tau {
            break;
        }
        cum += ak;
        tau = (*t + cum) / (k + 2) as f64;
    }
    let tau = tau.max(0.0);
    for v in x.iter_mut() {
        *v = v.clamp(-tau, tau);
    }
    *t = tau;
}

/// Nearest PSD matrix together with the asymmetry of the input when it
/// exceeds [`SYMMETRY_REPORT_TOL`].
#[derive(Debug, Clone)]
pub struct PsdProjection {
    pub matrix: DMatrix<f64>,
    pub asymmetry: Option<f64>,
}

pub(crate) fn asymmetry(x: &DMatrix<f64>) -> f64 {
    ((x - x.transpose()) * 0.5).norm()
}

/// Projection onto the PSD cone: symmetrize, then clamp negative eigenvalues.
pub fn project_psd(x: &DMatrix<f64>) -> Result<PsdProjection> {
    if !x.is_square() {
        return Err(shape_err("square matrix", format!("{}x{}", x.nrows(), x.ncols())));
    }
    let skew = asymmetry(x);
    let eig = linalg::sym_eigen(x)?;
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 0.0 {
            let q = eig.eigenvectors.column(i);
            out.ger(lam, &q, &q, 1.0);
        }
    }
    let out = (&out + out.transpose()) * 0.5;
    if skew > SYMMETRY_REPORT_TOL {
        log::debug!("project_psd: input asymmetry {skew:.3e}");
    }
    Ok(PsdProjection {
        matrix: out,
        asymmetry: (skew > SYMMETRY_REPORT_TOL).then_some(skew),
    })
}

/// Projection onto `{X : every row sum = t, every column sum = t}` in closed
/// form: `X + (t - r_i)/m + (t - c_j)/m - (t - s/m)/m`.
pub fn project_doubly_stochastic_affine(x: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !x.is_square() {
        return Err(shape_err("square matrix", format!("{}x{}", x.nrows(), x.ncols())));
    }
    let m = x.nrows();
    let mf = m as f64;
    let rows: Vec<f64> = (0..m).map(|i| x.row(i).sum()).collect();
    let cols: Vec<f64> = (0..m).map(|j| x.column(j).sum()).collect();
    let total: f64 = rows.iter().sum();
    let shift = (t - total / mf) / mf;
    Ok(DMatrix::from_fn(m, m, |i, j| {
        x[(i, j)] + (t - rows[i]) / mf + (t - cols[j]) / mf - shift
    }))
}

/// One closed convex set for [`dykstra`], given by its projection.
pub trait Projection {
    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<F> Projection for F
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self(x)
    }
}

#[derive(Debug, Clone)]
pub struct DykstraSolution {
    pub point: DVector<f64>,
    pub iterations: usize,
    /// Distance from `point` to each block after the last sweep.
    pub residuals: Vec<f64>,
}

pub const DYKSTRA_TOL: f64 = 1e-9;
pub const DYKSTRA_MAX_ITER: usize = 10_000;

/// Dykstra's alternating projections with correction terms; converges to the
/// Euclidean projection of `x0` onto the intersection of the blocks.
pub fn dykstra(
    blocks: &[&dyn Projection],
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DykstraSolution> {
    if blocks.is_empty() {
        return Ok(DykstraSolution {
            point: x0.clone(),
            iterations: 0,
            residuals: vec![],
        });
    }
    if blocks.len() == 1 {
        let point = blocks[0].project(x0)?;
        return Ok(DykstraSolution {
            point,
            iterations: 1,
            residuals: vec![0.0],
        });
    }
    let mut x = x0.clone();
    let mut corrections = vec![DVector::zeros(x0.len()); blocks.len()];
    let mut residuals = vec![f64::INFINITY; blocks.len()];
    for iter in 1..=max_iter {
        let start = x.clone();
        for (block, corr) in blocks.iter().zip(corrections.iter_mut()) {
            let shifted = &x + &*corr;
            let next = block.project(&shifted)?;
            *corr = shifted - &next;
            x = next;
        }
        let moved = (&x - &start).norm();
        for (r, block) in residuals.iter_mut().zip(blocks) {
            *r = (block.project(&x)? - &x).norm();
        }
        let scale = 1.0 + x.norm();
        if moved <= tol * scale && residuals.iter().all(|&r| r <= tol * scale) {
            return Ok(DykstraSolution {
                point: x,
                iterations: iter,
                residuals,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residuals,
        last: Box::new(x),
    })
}

/// The primal/dual split `x = Pi + Lambda` where `Lambda` is the projection of
/// `x` onto the `mu`-scaled dual-norm ball and `Pi` is the prox of `mu ||.||_A`.
pub fn moreau_pair<F>(
    x: &DVector<f64>,
    mu: f64,
    dual_ball_projection: F,
) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    if !(mu >= 0.0) {
        return Err(invalid(format!("prox parameter must be >= 0, got {mu}")));
    }
    let lambda = dual_ball_projection(x, mu)?;
    let pi = x - &lambda;
    Ok((pi, lambda))
}
