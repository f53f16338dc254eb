//! Small dense helpers shared across modules. Matrices flatten row-major.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Row-major flattening of an `m1 x m2` matrix.
pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    DVector::from_fn(r * c, |k, _| m[(k / c, k % c)])
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unflatten: length mismatch");
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Backward error allowed for nalgebra's factorizations, in units of
/// `eps * max(rows, cols) * ||M||`; larger errors trigger the Jacobi fallback.
const FAST_PATH_ULPS: f64 = 64.0;

/// Relative backward error the fallback must meet before it is returned.
const FALLBACK_TOL: f64 = 1e-10;

/// Thin SVD with descending singular values.
///
/// The LAPACK-style bidiagonal routine in nalgebra occasionally returns a
/// wrong factorization when singular values cluster, so every result is
/// checked for reconstruction and orthonormality and replaced by a one-sided
/// Jacobi SVD when the check fails.
pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD of a non-finite matrix".into()));
    }
    let s = m.clone().svd(true, true);
    if let (Some(u), Some(v_t)) = (s.u, s.v_t) {
        let out = Svd {
            u,
            singular_values: s.singular_values,
            v_t,
        };
        if svd_is_accurate(m, &out, fast_path_tol(m)) {
            return Ok(out);
        }
    }
    log::debug!("svd: falling back to one-sided Jacobi for a {}x{} matrix", m.nrows(), m.ncols());
    let out = jacobi_svd(m);
    if svd_is_accurate(m, &out, FALLBACK_TOL) {
        Ok(out)
    } else {
        Err(Error::Numerical("SVD failed its accuracy check".into()))
    }
}

fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).amax()
}

fn fast_path_tol(m: &DMatrix<f64>) -> f64 {
    FAST_PATH_ULPS * f64::EPSILON * m.nrows().max(m.ncols()) as f64
}

/// Reconstruction error relative to `||M||_F` and orthonormality defects
/// both within `tol`, singular values nonnegative and sorted.
fn svd_is_accurate(m: &DMatrix<f64>, f: &Svd, tol: f64) -> bool {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    f.singular_values.iter().all(|&s| s >= 0.0)
        && f.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1])
        && (compose(&f.u, &f.singular_values, &f.v_t) - m).amax() <= tol * scale
        && orthonormality_defect(&f.u) <= tol
        && orthonormality_defect(&f.v_t.transpose()) <= tol
}

/// One-sided (Hestenes) Jacobi SVD: rotate column pairs of `A` until they are
/// mutually orthogonal; the column norms are then the singular values.
fn jacobi_svd(m: &DMatrix<f64>) -> Svd {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose());
        return Svd {
            u: t.v_t.transpose(),
            singular_values: t.singular_values,
            v_t: t.u.transpose(),
        };
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::identity(cols, cols);
    for _ in 0..100 {
        let mut rotated = false;
        for j in 0..cols {
            for k in (j + 1)..cols {
                let alpha = a.column(j).norm_squared();
                let beta = a.column(k).norm_squared();
                let gamma = a.column(j).dot(&a.column(k));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (mat, n) in [(&mut a, rows), (&mut v, cols)] {
                    for i in 0..n {
                        let (x, y) = (mat[(i, j)], mat[(i, k)]);
                        mat[(i, j)] = c * x - s * y;
                        mat[(i, k)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let singular_values = DVector::from_iterator(cols, order.iter().map(|&j| norms[j]));
    let top = singular_values.max();
    let mut u = DMatrix::zeros(rows, cols);
    let mut filled = 0;
    for (dst, &j) in order.iter().enumerate() {
        if norms[j] > top * f64::EPSILON * rows as f64 && norms[j] > 0.0 {
            u.set_column(dst, &(a.column(j) / norms[j]));
            filled += 1;
        }
    }
    // Complete the basis for (numerically) zero singular values.
    let mut e = 0;
    while filled < cols {
        let mut cand = DVector::zeros(rows);
        cand[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for q in 0..filled {
                let proj = u.column(q).dot(&cand);
                cand -= u.column(q) * proj;
            }
        }
        let n = cand.norm();
        if n > 1e-8 {
            u.set_column(filled, &(cand / n));
            filled += 1;
        }
    }
    let v_sorted = DMatrix::from_fn(cols, cols, |i, k| v[(i, order[k])]);
    Svd {
        u,
        singular_values,
        v_t: v_sorted.transpose(),
    }
}

/// Singular values in descending order (NaN-propagating for non-finite input).
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    match svd(m) {
        Ok(f) => f.singular_values,
        Err(_) => m.singular_values(),
    }
}

/// Eigen-decomposition of the symmetric part of `m`, checked for accuracy
/// with a cyclic Jacobi fallback.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition of a non-finite matrix".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let n = sym.nrows();
    if let Some(eig) = SymmetricEigen::try_new(sym.clone(), 1e-15, 100 * n.max(10)) {
        if eigen_is_accurate(&sym, &eig, fast_path_tol(&sym)) {
            return Ok(eig);
        }
    }
    log::debug!("sym_eigen: falling back to cyclic Jacobi for a {n}x{n} matrix");
    let eig = jacobi_eigen(&sym);
    if eigen_is_accurate(&sym, &eig, FALLBACK_TOL) {
        Ok(eig)
    } else {
        Err(Error::Numerical("symmetric eigensolver failed its accuracy check".into()))
    }
}

fn eigen_is_accurate(sym: &DMatrix<f64>, eig: &SymmetricEigen<f64, nalgebra::Dyn>, tol: f64) -> bool {
    let q = &eig.eigenvectors;
    let scale = sym.norm().max(f64::MIN_POSITIVE);
    let rebuilt = q * DMatrix::from_diagonal(&eig.eigenvalues) * q.transpose();
    (rebuilt - sym).amax() <= tol * scale && orthonormality_defect(q) <= tol
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
fn jacobi_eigen(sym: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut q = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off.sqrt() <= f64::EPSILON * a.norm() {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                if a[(p, r)] == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * a[(p, r)]);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, r)]);
                    a[(k, p)] = c * x - s * y;
                    a[(k, r)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(r, k)]);
                    a[(p, k)] = c * x - s * y;
                    a[(r, k)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (q[(k, p)], q[(k, r)]);
                    q[(k, p)] = c * x - s * y;
                    q[(k, r)] = s * x + c * y;
                }
            }
        }
    }
    SymmetricEigen {
        eigenvalues: a.diagonal(),
        eigenvectors: q,
    }
}

/// Rebuild `U diag(s) V^T`.
pub fn compose(u: &DMatrix<f64>, s: &DVector<f64>, v_t: &DMatrix<f64>) -> DMatrix<f64> {
    let mut us = u.clone();
    for (j, sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(*sj);
    }
    us * v_t
}

/// Numerical rank using the relative cutoff [`RANK_TOL`].
pub fn numerical_rank(s: &DVector<f64>) -> usize {
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_TOL * top).count()
}

/// Orthonormal basis of the row space of `m` and the min-norm solution
/// operator, used for repeated projections onto `{w : m w = b}`.
pub struct AffineProjector {
    basis: DMatrix<f64>,
    offset: DVector<f64>,
    pub inconsistency: f64,
}

impl AffineProjector {
    pub fn new(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let cols = m.ncols();
        if m.nrows() == 0 {
            return Ok(Self {
                basis: DMatrix::zeros(cols, 0),
                offset: DVector::zeros(cols),
                inconsistency: 0.0,
            });
        }
        // Row space from the eigenvectors of M M^T when rows <= cols,
        // otherwise from M^T M; both avoid a full rectangular SVD.
        let (basis, offset) = if m.nrows() <= cols {
            let gram = m * m.transpose();
            let eig = sym_eigen(&gram)?;
            let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..eig.eigenvalues.len())
                .filter(|&i| eig.eigenvalues[i] > 1e-20f64.max(RANK_TOL * top))
                .collect();
            let mut basis = DMatrix::zeros(cols, keep.len());
            let mut offset = DVector::zeros(cols);
            for (c, &i) in keep.iter().enumerate() {
                let q = eig.eigenvectors.column(i);
                let sigma = eig.eigenvalues[i].sqrt();
                let v = m.transpose() * q / sigma;
                offset += &v * (q.dot(b) / sigma);
                basis.set_column(c, &v);
            }
            (basis, offset)
        } else {
            let gram = m.transpose() * m;
            let eig = sym_eigen(&gram)?;
            let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..eig.eigenvalues.len())
                .filter(|&i| eig.eigenvalues[i] > 1e-20f64.max(RANK_TOL * top))
                .collect();
            let mut basis = DMatrix::zeros(cols, keep.len());
            let mtb = m.transpose() * b;
            let mut offset = DVector::zeros(cols);
            for (c, &i) in keep.iter().enumerate() {
                let v = eig.eigenvectors.column(i).into_owned();
                offset += &v * (v.dot(&mtb) / eig.eigenvalues[i]);
                basis.set_column(c, &v);
            }
            (basis, offset)
        };
        let resid = m * &offset - b;
        let inconsistency = resid.norm() / (1.0 + b.norm());
        Ok(Self {
            basis,
            offset,
            inconsistency,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Euclidean projection of `w` onto the affine set.
    pub fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        let coeff = self.basis.tr_mul(w);
        let mut out = w - &self.basis * coeff;
        out += &self.offset;
        out
    }
}
