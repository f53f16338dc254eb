//! Declarative descriptions of the cone `{(x, t) : x in t conv(A), t >= 0}`.
//!
//! Points are lifted to `w = (x, t)` with `t` stored at index `dim`. The cone is
//! the intersection of one affine block (homogeneous linear equalities in `w`)
//! and any number of conic blocks, each with its own Euclidean projection.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{unflatten, AffineProjector};
use crate::prox::{project_linf_cone, project_psd};

/// A homogeneous equality `sum_k coeff_k * w[index_k] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    /// Every entry of `x` is nonnegative.
    Nonnegative,
    /// `x`, read as an `m x m` matrix, is PSD (symmetric part).
    Psd { m: usize },
    /// `|x_i| <= t` for the listed entries.
    LinfBox { indices: Vec<usize> },
}

impl ConeBlock {
    /// Project the lifted point onto this block.
    pub fn project(&self, w: &DVector<f64>, dim: usize) -> Result<DVector<f64>> {
        let mut out = w.clone();
        match self {
            ConeBlock::Nonnegative => {
                for v in out.rows_mut(0, dim).iter_mut() {
                    *v = v.max(0.0);
                }
            }
            ConeBlock::Psd { m } => {
                let x = unflatten(&w.rows(0, dim).into_owned(), *m, *m);
                let p = project_psd(&x)?.matrix;
                for i in 0..*m {
                    for j in 0..*m {
                        out[i * m + j] = p[(i, j)];
                    }
                }
            }
            ConeBlock::LinfBox { indices } => {
                let mut xs: Vec<f64> = indices.iter().map(|&i| w[i]).collect();
                let mut t = w[dim];
                project_linf_cone(&mut xs, &mut t);
                for (&i, v) in indices.iter().zip(xs) {
                    out[i] = v;
                }
                out[dim] = t;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeDescription {
    /// Ambient dimension of `x`.
    pub dim: usize,
    pub affine: Vec<LinearRow>,
    pub cones: Vec<ConeBlock>,
}

impl GaugeDescription {
    pub fn lift(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim + 1);
        w.rows_mut(0, self.dim).copy_from(x);
        w[self.dim] = t;
        w
    }

    /// Dense matrix of the affine rows over the lifted coordinates.
    pub fn affine_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.affine.len(), self.dim + 1);
        for (r, row) in self.affine.iter().enumerate() {
            for &(k, c) in &row.terms {
                a[(r, k)] += c;
            }
        }
        a
    }

    /// Projector onto the affine block alone.
    pub fn affine_projector(&self) -> Result<AffineProjector> {
        AffineProjector::new(&self.affine_matrix(), &DVector::zeros(self.affine.len()))
    }

    /// Distance from the lifted point to each block: the affine block first,
    /// then the conic blocks in order, plus the violation of `t >= 0`.
    pub fn block_distances(&self, x: &DVector<f64>, t: f64) -> Result<Vec<f64>> {
        let w = self.lift(x, t);
        let mut out = Vec::with_capacity(self.cones.len() + 2);
        let a = self.affine_matrix();
        // rows are not normalized; scale each residual by its row norm
        let resid = &a * &w;
        let mut affine = 0.0f64;
        for r in 0..a.nrows() {
            let nr = a.row(r).norm();
            if nr > 0.0 {
                affine = affine.max(resid[r].abs() / nr);
            }
        }
        out.push(affine);
        for block in &self.cones {
            out.push((block.project(&w, self.dim)? - &w).norm());
        }
        out.push((-t).max(0.0));
        Ok(out)
    }

    /// Whether `(x, t)` satisfies every block to within `tol`.
    pub fn contains(&self, x: &DVector<f64>, t: f64, tol: f64) -> Result<bool> {
        Ok(self.block_distances(x, t)?.iter().all(|&d| d <= tol))
    }
}
