//! Catalog of atomic sets.
//!
//! Each set is an oracle record: dual norm (support function), gauge,
//! optional prox, optional declarative gauge description, atom sampler,
//! optional tangent-direction sampler and optional normal-cone distance.
//! Matrix-shaped sets act on row-major flattened vectors.

mod assignment;
mod gauge;

pub use assignment::max_weight_assignment;
pub use gauge::{ConeBlock, GaugeDescription, LinearRow};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::geometry::{self, WidthKind};
use crate::linalg::{self, flatten, unflatten};
use crate::model::AtomicModel;
use crate::prox::{self, moreau_pair, project_l1_ball, soft_threshold};
use crate::rng::{normal, normal_vec};

/// Identifiers accepted by [`AtomicSet::from_id`].
pub const SET_IDS: [&str; 7] = ["l1", "nuclear", "linf", "spectral", "birkhoff", "cut-p1", "cut-p2"];

/// Relative tolerance for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Optional size and complexity parameters: `s` sparsity, `r` rank, `k` face
/// dimension, `m`/`m1`/`m2` matrix sides, `p` vector length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum AtomicSet {
    /// Signed unit coordinate vectors; the gauge is the l1 norm.
    L1 { p: usize },
    /// Unit-Frobenius rank-one matrices; the gauge is the nuclear norm.
    Nuclear { m1: usize, m2: usize },
    /// Sign vectors; the gauge is the l-infinity norm.
    Linf { p: usize },
    /// Orthogonal matrices; the gauge is the spectral norm.
    Spectral { m: usize },
    /// Permutation matrices; the gauge is induced by the Birkhoff polytope.
    Birkhoff { m: usize },
    /// Cut matrices `zz^T` with the elliptope as the relaxed unit ball.
    #[serde(rename = "cut-p1")]
    Elliptope { m: usize },
    /// Symmetric unit-diagonal matrices with +-1 off the diagonal.
    #[serde(rename = "cut-p2")]
    HypercubeSym { m: usize },
}

fn nonzero(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        Err(invalid(format!("{name} must be >= 1")))
    } else {
        Ok(v)
    }
}

fn square_side(p: usize) -> Option<usize> {
    let m = (p as f64).sqrt().round() as usize;
    (m * m == p).then_some(m)
}

impl AtomicSet {
    pub fn l1(p: usize) -> Result<Self> {
        Ok(AtomicSet::L1 { p: nonzero("p", p)? })
    }

    pub fn nuclear(m1: usize, m2: usize) -> Result<Self> {
        Ok(AtomicSet::Nuclear {
            m1: nonzero("m1", m1)?,
            m2: nonzero("m2", m2)?,
        })
    }

    pub fn linf(p: usize) -> Result<Self> {
        Ok(AtomicSet::Linf { p: nonzero("p", p)? })
    }

    pub fn spectral(m: usize) -> Result<Self> {
        Ok(AtomicSet::Spectral { m: nonzero("m", m)? })
    }

    pub fn birkhoff(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("Birkhoff polytope needs m >= 2, got {m}")));
        }
        Ok(AtomicSet::Birkhoff { m })
    }

    pub fn elliptope(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("elliptope needs m >= 2, got {m}")));
        }
        Ok(AtomicSet::Elliptope { m })
    }

    pub fn hypercube_sym(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("symmetric hypercube needs m >= 2, got {m}")));
        }
        Ok(AtomicSet::HypercubeSym { m })
    }

    /// Build a set from its identifier. `ambient` (the problem's `p`) fills in
    /// missing sizes; square matrix sets infer `m = sqrt(p)`.
    pub fn from_id(id: &str, params: &SetParams, ambient: Option<usize>) -> Result<Self> {
        let p = params.p.or(ambient);
        let side = || {
            params
                .m
                .or_else(|| p.and_then(square_side))
                .ok_or_else(|| invalid(format!("set `{id}` needs `m` (or a square ambient dimension)")))
        };
        let set = match id {
            "l1" => AtomicSet::l1(p.ok_or_else(|| invalid("set `l1` needs `p`"))?)?,
            "linf" => AtomicSet::linf(p.ok_or_else(|| invalid("set `linf` needs `p`"))?)?,
            "nuclear" => match (params.m1, params.m2) {
                (Some(a), Some(b)) => AtomicSet::nuclear(a, b)?,
                _ => {
                    let m = side()?;
                    AtomicSet::nuclear(m, m)?
                }
            },
            "spectral" => AtomicSet::spectral(side()?)?,
            "birkhoff" => AtomicSet::birkhoff(side()?)?,
            "cut-p1" => AtomicSet::elliptope(side()?)?,
            "cut-p2" => AtomicSet::hypercube_sym(side()?)?,
            other => return Err(Error::UnknownSet(other.to_string())),
        };
        if let Some(a) = ambient {
            if a != set.ambient_dim() {
                return Err(shape_err(
                    format!("ambient dimension {} for set `{id}`", set.ambient_dim()),
                    a,
                ));
            }
        }
        Ok(set)
    }

    pub fn id(&self) -> &'static str {
        match self {
            AtomicSet::L1 { .. } => "l1",
            AtomicSet::Nuclear { .. } => "nuclear",
            AtomicSet::Linf { .. } => "linf",
            AtomicSet::Spectral { .. } => "spectral",
            AtomicSet::Birkhoff { .. } => "birkhoff",
            AtomicSet::Elliptope { .. } => "cut-p1",
            AtomicSet::HypercubeSym { .. } => "cut-p2",
        }
    }

    /// Size parameters that rebuild this set through [`AtomicSet::from_id`].
    pub fn params(&self) -> SetParams {
        match *self {
            AtomicSet::L1 { p } | AtomicSet::Linf { p } => SetParams {
                p: Some(p),
                ..Default::default()
            },
            AtomicSet::Nuclear { m1, m2 } => SetParams {
                m1: Some(m1),
                m2: Some(m2),
                ..Default::default()
            },
            AtomicSet::Spectral { m }
            | AtomicSet::Birkhoff { m }
            | AtomicSet::Elliptope { m }
            | AtomicSet::HypercubeSym { m } => SetParams {
                m: Some(m),
                ..Default::default()
            },
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match *self {
            AtomicSet::L1 { p } | AtomicSet::Linf { p } => p,
            AtomicSet::Nuclear { m1, m2 } => m1 * m2,
            AtomicSet::Spectral { m }
            | AtomicSet::Birkhoff { m }
            | AtomicSet::Elliptope { m }
            | AtomicSet::HypercubeSym { m } => m * m,
        }
    }

    /// `(rows, cols)` for matrix-shaped sets.
    pub fn matrix_shape(&self) -> Option<(usize, usize)> {
        match *self {
            AtomicSet::L1 { .. } | AtomicSet::Linf { .. } => None,
            AtomicSet::Nuclear { m1, m2 } => Some((m1, m2)),
            AtomicSet::Spectral { m }
            | AtomicSet::Birkhoff { m }
            | AtomicSet::Elliptope { m }
            | AtomicSet::HypercubeSym { m } => Some((m, m)),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(shape_err(
                format!("vector of length {} for set `{}`", self.ambient_dim(), self.id()),
                x.len(),
            ));
        }
        Ok(())
    }

    fn as_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (r, c) = self.matrix_shape().expect("matrix-shaped set");
        unflatten(x, r, c)
    }

    /// The dual norm `sup_{a in A} <x, a>`.
    pub fn dual_norm(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match *self {
            AtomicSet::L1 { .. } => x.amax(),
            AtomicSet::Linf { .. } => x.abs().sum(),
            AtomicSet::Nuclear { .. } => linalg::singular_values(&self.as_matrix(x)).max(),
            AtomicSet::Spectral { .. } => linalg::singular_values(&self.as_matrix(x)).sum(),
            AtomicSet::Birkhoff { .. } => max_weight_assignment(&self.as_matrix(x)).0,
            AtomicSet::Elliptope { m } => elliptope_support(&self.as_matrix(x), m)?,
            AtomicSet::HypercubeSym { m } => {
                let xm = self.as_matrix(x);
                let mut v = xm.trace();
                for i in 0..m {
                    for j in (i + 1)..m {
                        v += (xm[(i, j)] + xm[(j, i)]).abs();
                    }
                }
                v
            }
        })
    }

    /// The gauge `inf{t > 0 : x in t conv(A)}`; `+inf` outside the cone.
    pub fn gauge(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let tol = MEMBERSHIP_TOL * (1.0 + x.amax());
        Ok(match *self {
            AtomicSet::L1 { .. } => x.abs().sum(),
            AtomicSet::Linf { .. } => x.amax(),
            AtomicSet::Nuclear { .. } => linalg::singular_values(&self.as_matrix(x)).sum(),
            AtomicSet::Spectral { .. } => linalg::singular_values(&self.as_matrix(x)).max(),
            AtomicSet::Birkhoff { m } => {
                let xm = self.as_matrix(x);
                if xm.min() < -tol {
                    return Ok(f64::INFINITY);
                }
                let t = xm.row(0).sum();
                let equal = (0..m).all(|i| (xm.row(i).sum() - t).abs() <= tol * m as f64)
                    && (0..m).all(|j| (xm.column(j).sum() - t).abs() <= tol * m as f64);
                if equal {
                    t.max(0.0)
                } else {
                    f64::INFINITY
                }
            }
            AtomicSet::Elliptope { m } => {
                let xm = self.as_matrix(x);
                let Some(t) = common_diagonal(&xm, m, tol) else {
                    return Ok(f64::INFINITY);
                };
                if prox::asymmetry(&xm) > tol {
                    return Ok(f64::INFINITY);
                }
                let lam_min = linalg::sym_eigen(&xm)?.eigenvalues.min();
                if lam_min < -tol * m as f64 {
                    f64::INFINITY
                } else {
                    t
                }
            }
            AtomicSet::HypercubeSym { m } => {
                let xm = self.as_matrix(x);
                let Some(t) = common_diagonal(&xm, m, tol) else {
                    return Ok(f64::INFINITY);
                };
                if prox::asymmetry(&xm) > tol {
                    return Ok(f64::INFINITY);
                }
                let off = (0..m)
                    .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
                    .fold(0.0f64, |a, (i, j)| a.max(xm[(i, j)].abs()));
                if off > t + tol {
                    f64::INFINITY
                } else {
                    t
                }
            }
        })
    }

    pub fn has_prox(&self) -> bool {
        matches!(
            self,
            AtomicSet::L1 { .. } | AtomicSet::Nuclear { .. } | AtomicSet::Linf { .. } | AtomicSet::Spectral { .. }
        )
    }

    /// Euclidean projection onto `{y : ||y||*_A <= mu}`.
    pub fn project_dual_ball(&self, x: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if !(mu >= 0.0) {
            return Err(invalid(format!("dual ball radius must be >= 0, got {mu}")));
        }
        match *self {
            AtomicSet::L1 { .. } => Ok(x.map(|v| v.clamp(-mu, mu))),
            AtomicSet::Linf { .. } => project_l1_ball(x, mu),
            AtomicSet::Nuclear { .. } => {
                let svd = linalg::svd(&self.as_matrix(x))?;
                let s = svd.singular_values.map(|v| v.min(mu));
                Ok(flatten(&linalg::compose(&svd.u, &s, &svd.v_t)))
            }
            AtomicSet::Spectral { .. } => {
                let svd = linalg::svd(&self.as_matrix(x))?;
                let s = project_l1_ball(&svd.singular_values, mu)?;
                Ok(flatten(&linalg::compose(&svd.u, &s, &svd.v_t)))
            }
            _ => Err(Error::MissingCapability {
                set: self.id(),
                capability: "a dual-ball projection",
            }),
        }
    }

    /// `argmin_z 1/2 ||z - x||^2 + mu ||z||_A`.
    pub fn prox(&self, x: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if !(mu >= 0.0) {
            return Err(invalid(format!("prox parameter must be >= 0, got {mu}")));
        }
        match *self {
            AtomicSet::L1 { .. } => soft_threshold(x, mu),
            AtomicSet::Nuclear { .. } => {
                let svd = linalg::svd(&self.as_matrix(x))?;
                let s = svd.singular_values.map(|v| (v - mu).max(0.0));
                Ok(flatten(&linalg::compose(&svd.u, &s, &svd.v_t)))
            }
            AtomicSet::Linf { .. } | AtomicSet::Spectral { .. } => {
                Ok(moreau_pair(x, mu, |v, r| self.project_dual_ball(v, r))?.0)
            }
            _ => Err(Error::MissingCapability {
                set: self.id(),
                capability: "a prox operator",
            }),
        }
    }

    /// The prox together with the gauge of the returned point, computed from
    /// the same decomposition.
    pub fn prox_with_gauge(&self, x: &DVector<f64>, mu: f64) -> Result<(DVector<f64>, f64)> {
        self.check_dim(x)?;
        if !(mu >= 0.0) {
            return Err(invalid(format!("prox parameter must be >= 0, got {mu}")));
        }
        match *self {
            AtomicSet::L1 { .. } => {
                let z = soft_threshold(x, mu)?;
                let g = z.abs().sum();
                Ok((z, g))
            }
            AtomicSet::Linf { .. } => {
                let z = self.prox(x, mu)?;
                let g = z.amax();
                Ok((z, g))
            }
            AtomicSet::Nuclear { .. } => {
                let svd = linalg::svd(&self.as_matrix(x))?;
                let s = svd.singular_values.map(|v| (v - mu).max(0.0));
                let g = s.sum();
                Ok((flatten(&linalg::compose(&svd.u, &s, &svd.v_t)), g))
            }
            AtomicSet::Spectral { .. } => {
                let svd = linalg::svd(&self.as_matrix(x))?;
                let s = &svd.singular_values - project_l1_ball(&svd.singular_values, mu)?;
                let g = s.max().max(0.0);
                Ok((flatten(&linalg::compose(&svd.u, &s, &svd.v_t)), g))
            }
            _ => Err(Error::MissingCapability {
                set: self.id(),
                capability: "a prox operator",
            }),
        }
    }

    /// Membership description of the cone over `conv(A)`, for sets solved by
    /// operator splitting.
    pub fn gauge_description(&self) -> Option<GaugeDescription> {
        let (m, dim) = match *self {
            AtomicSet::Birkhoff { m } | AtomicSet::Elliptope { m } | AtomicSet::HypercubeSym { m } => (m, m * m),
            _ => return None,
        };
        let t = dim;
        let mut affine = Vec::new();
        let mut cones = Vec::new();
        match self {
            AtomicSet::Birkhoff { .. } => {
                for i in 0..m {
                    let mut terms: Vec<(usize, f64)> = (0..m).map(|j| (i * m + j, 1.0)).collect();
                    terms.push((t, -1.0));
                    affine.push(LinearRow { terms });
                }
                for j in 0..m {
                    let mut terms: Vec<(usize, f64)> = (0..m).map(|i| (i * m + j, 1.0)).collect();
                    terms.push((t, -1.0));
                    affine.push(LinearRow { terms });
                }
                cones.push(ConeBlock::Nonnegative);
            }
            _ => {
                for i in 0..m {
                    for j in (i + 1)..m {
                        affine.push(LinearRow {
                            terms: vec![(i * m + j, 1.0), (j * m + i, -1.0)],
                        });
                    }
                }
                for i in 0..m {
                    affine.push(LinearRow {
                        terms: vec![(i * m + i, 1.0), (t, -1.0)],
                    });
                }
                if let AtomicSet::Elliptope { .. } = self {
                    cones.push(ConeBlock::Psd { m });
                } else {
                    let indices = (0..m)
                        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| i * m + j))
                        .collect();
                    cones.push(ConeBlock::LinfBox { indices });
                }
            }
        }
        Some(GaugeDescription { dim, affine, cones })
    }

    /// Center of `conv(A)`; the origin except for the Birkhoff polytope.
    pub fn centroid(&self) -> DVector<f64> {
        match *self {
            AtomicSet::Birkhoff { m } => DVector::from_element(m * m, 1.0 / m as f64),
            _ => DVector::zeros(self.ambient_dim()),
        }
    }

    /// Draw one atom.
    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match *self {
            AtomicSet::L1 { p } => {
                let mut a = DVector::zeros(p);
                a[rng.random_range(0..p)] = random_sign(rng);
                a
            }
            AtomicSet::Linf { p } => DVector::from_fn(p, |_, _| random_sign(rng)),
            AtomicSet::Nuclear { m1, m2 } => {
                let u = unit_vector(rng, m1);
                let v = unit_vector(rng, m2);
                flatten(&(u * v.transpose()))
            }
            AtomicSet::Spectral { m } => flatten(&haar_orthogonal(rng, m)),
            AtomicSet::Birkhoff { m } => {
                let perm = random_permutation(rng, m);
                let mut a = DVector::zeros(m * m);
                for (i, j) in perm.into_iter().enumerate() {
                    a[i * m + j] = 1.0;
                }
                a
            }
            AtomicSet::Elliptope { m } => {
                let z = DVector::from_fn(m, |_, _| random_sign(rng));
                flatten(&(&z * z.transpose()))
            }
            AtomicSet::HypercubeSym { m } => {
                let mut a = DMatrix::identity(m, m);
                for i in 0..m {
                    for j in (i + 1)..m {
                        let s = random_sign(rng);
                        a[(i, j)] = s;
                        a[(j, i)] = s;
                    }
                }
                flatten(&a)
            }
        }
    }

    /// Whether `a` is an atom of this set (up to [`MEMBERSHIP_TOL`]).
    pub fn is_atom(&self, a: &DVector<f64>) -> bool {
        if a.len() != self.ambient_dim() {
            return false;
        }
        let tol = 1e-9;
        let is_sign = |v: f64| (v.abs() - 1.0).abs() <= tol;
        match *self {
            AtomicSet::L1 { .. } => {
                a.iter().filter(|v| v.abs() > tol).count() == 1 && (a.amax() - 1.0).abs() <= tol
            }
            AtomicSet::Linf { .. } => a.iter().all(|&v| is_sign(v)),
            AtomicSet::Nuclear { .. } => {
                let s = linalg::singular_values(&self.as_matrix(a));
                (s[0] - 1.0).abs() <= tol && s.iter().skip(1).all(|&v| v <= tol)
            }
            AtomicSet::Spectral { m } => {
                let q = self.as_matrix(a);
                (q.transpose() * &q - DMatrix::identity(m, m)).amax() <= tol
            }
            AtomicSet::Birkhoff { m } => {
                let q = self.as_matrix(a);
                a.iter().all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
                    && (0..m).all(|i| (q.row(i).sum() - 1.0).abs() <= tol && (q.column(i).sum() - 1.0).abs() <= tol)
            }
            AtomicSet::Elliptope { m } => {
                let q = self.as_matrix(a);
                let z = q.row(0).transpose();
                a.iter().all(|&v| is_sign(v)) && (&z * z.transpose() - &q).amax() <= tol && m > 0
            }
            AtomicSet::HypercubeSym { m } => {
                let q = self.as_matrix(a);
                a.iter().all(|&v| is_sign(v))
                    && (0..m).all(|i| (q[(i, i)] - 1.0).abs() <= tol)
                    && prox::asymmetry(&q) <= tol
            }
        }
    }

    /// Draw a simple model: `s` atoms for `l1`, rank `r` for `nuclear`, a point
    /// on a `k`-face for `linf` (`k = 0` is a vertex), one atom otherwise.
    pub fn sample_model<R: Rng + ?Sized>(&self, params: &SetParams, rng: &mut R) -> Result<AtomicModel> {
        let mut atoms = Vec::new();
        let mut coefficients = Vec::new();
        match *self {
            AtomicSet::L1 { p } => {
                let s = params.s.ok_or_else(|| invalid("sparse model needs `s`"))?;
                if s > p {
                    return Err(invalid(format!("sparsity s = {s} exceeds p = {p}")));
                }
                let mut support = sample_indices(rng, p, s).into_vec();
                support.sort_unstable();
                for i in support {
                    let mut a = DVector::zeros(p);
                    a[i] = random_sign(rng);
                    atoms.push(a);
                    coefficients.push(rng.random_range(0.5..1.5));
                }
            }
            AtomicSet::Nuclear { m1, m2 } => {
                let r = params.r.ok_or_else(|| invalid("low-rank model needs `r`"))?;
                if r > m1.min(m2) {
                    return Err(invalid(format!("rank r = {r} exceeds min(m1, m2) = {}", m1.min(m2))));
                }
                let u = orthonormal_frame(rng, m1, r);
                let v = orthonormal_frame(rng, m2, r);
                for k in 0..r {
                    atoms.push(flatten(&(u.column(k) * v.column(k).transpose())));
                    coefficients.push(rng.random_range(0.5..1.5));
                }
            }
            AtomicSet::Linf { p } => {
                let k = params.k.unwrap_or(0);
                if k > p {
                    return Err(invalid(format!("face dimension k = {k} exceeds p = {p}")));
                }
                let base = DVector::from_fn(p, |_, _| random_sign(rng));
                let free = sample_indices(rng, p, k).into_vec();
                // Freudenthal decomposition of a point in the k-cube spanned by
                // the free coordinates: sort the levels u_i in [0, 1] descending.
                let mut levels: Vec<(usize, f64)> = free.iter().map(|&i| (i, rng.random_range(0.0..1.0))).collect();
                levels.sort_by(|a, b| b.1.total_cmp(&a.1));
                let mut bounds = vec![1.0];
                bounds.extend(levels.iter().map(|l| l.1));
                bounds.push(0.0);
                for j in 0..=k {
                    let c = bounds[j] - bounds[j + 1];
                    if c <= 0.0 {
                        continue;
                    }
                    let mut a = base.clone();
                    for (idx, &(i, _)) in levels.iter().enumerate() {
                        a[i] = if idx < j { 1.0 } else { -1.0 };
                    }
                    atoms.push(a);
                    coefficients.push(c);
                }
            }
            _ => {
                atoms.push(self.sample_atom(rng));
                coefficients.push(1.0);
            }
        }
        AtomicModel::new(*self, atoms, coefficients)
    }

    /// Distance (or a certified upper bound on it) from `g` to the normal
    /// cone at the model's ambient point.
    pub fn normal_cone_distance(&self, model: &AtomicModel, g: &DVector<f64>) -> Result<(f64, WidthKind)> {
        self.check_dim(g)?;
        let x = &model.ambient;
        match *self {
            AtomicSet::L1 { .. } => {
                let (support, signs) = l1_support(x);
                Ok((geometry::dist_normal_cone_l1(g, &support, &signs)?, WidthKind::ExactOracle))
            }
            AtomicSet::Linf { .. } => {
                let (sat, signs) = linf_saturated(x);
                Ok((geometry::dist_normal_cone_linf(g, &sat, &signs), WidthKind::ExactOracle))
            }
            AtomicSet::Nuclear { m1, m2 } => {
                let (u, v) = nuclear_frames(&self.as_matrix(x))?;
                let gm = unflatten(g, m1, m2);
                Ok((geometry::dist_normal_cone_nuclear_ub(&gm, &u, &v)?, WidthKind::UpperBound))
            }
            _ => Err(Error::MissingCapability {
                set: self.id(),
                capability: "a normal-cone distance oracle",
            }),
        }
    }

    pub fn has_tangent_sampler(&self) -> bool {
        matches!(self, AtomicSet::L1 { .. } | AtomicSet::Nuclear { .. } | AtomicSet::Linf { .. })
    }

    /// A random unit direction in the tangent cone at the model's ambient point.
    pub fn sample_tangent<R: Rng + ?Sized>(&self, model: &AtomicModel, rng: &mut R) -> Result<DVector<f64>> {
        let x = &model.ambient;
        self.check_dim(x)?;
        for _ in 0..1000 {
            let g = normal_vec(rng, x.len());
            let d = match *self {
                AtomicSet::L1 { .. } => {
                    let (support, signs) = l1_support(x);
                    g.clone() - geometry::project_normal_cone_l1(&g, &support, &signs)?
                }
                AtomicSet::Linf { .. } => {
                    let (sat, signs) = linf_saturated(x);
                    let mut d = g.clone();
                    for (&i, &s) in sat.iter().zip(&signs) {
                        if s * d[i] > 0.0 {
                            d[i] = 0.0;
                        }
                    }
                    d
                }
                AtomicSet::Nuclear { m1, m2 } => {
                    let (u, v) = nuclear_frames(&self.as_matrix(x))?;
                    if u.ncols() == 0 {
                        return Err(invalid("tangent cone at the origin is {0}"));
                    }
                    nuclear_tangent(&u, &v, m1, m2, rng)
                }
                _ => {
                    return Err(Error::MissingCapability {
                        set: self.id(),
                        capability: "a tangent sampler",
                    })
                }
            };
            let n = d.norm();
            if n > 1e-12 {
                return Ok(d / n);
            }
        }
        Err(Error::Numerical("tangent sampler produced only zero directions".into()))
    }
}

fn common_diagonal(x: &DMatrix<f64>, m: usize, tol: f64) -> Option<f64> {
    let t = x[(0, 0)];
    ((0..m).all(|i| (x[(i, i)] - t).abs() <= tol) && t >= -tol).then_some(t.max(0.0))
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let g = normal_vec(rng, n);
        let norm = g.norm();
        if norm > 1e-12 {
            return g / norm;
        }
    }
}

fn random_permutation<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Haar-distributed orthogonal matrix: the Q factor of a Gaussian matrix with
/// columns sign-corrected so that `R` has a positive diagonal.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, m: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `n x r` matrix with orthonormal columns spanning a uniform random subspace.
fn orthonormal_frame<R: Rng + ?Sized>(rng: &mut R, n: usize, r: usize) -> DMatrix<f64> {
    if r == 0 {
        return DMatrix::zeros(n, 0);
    }
    let g = DMatrix::from_fn(n, r, |_, _| normal(rng));
    let qr = g.qr();
    let q = qr.q();
    let rr = qr.r();
    let mut q = q.columns(0, r).into_owned();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn l1_support(x: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let tol = 1e-12 * x.amax();
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() > tol).collect();
    let signs = support.iter().map(|&i| x[i].signum()).collect();
    (support, signs)
}

fn linf_saturated(x: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let top = x.amax();
    if top == 0.0 {
        return (vec![], vec![]);
    }
    let sat: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() >= top * (1.0 - 1e-9)).collect();
    let signs = sat.iter().map(|&i| x[i].signum()).collect();
    (sat, signs)
}

/// Left and right singular frames of the nonzero part of `x`.
fn nuclear_frames(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let svd = linalg::svd(x)?;
    let r = linalg::numerical_rank(&svd.singular_values);
    Ok((svd.u.columns(0, r).into_owned(), svd.v_t.rows(0, r).transpose()))
}

/// Tangent direction of the nuclear-norm ball at a point with frames `U`, `V`:
/// any `D` with `<UV^T, D> + ||P_perp(D)||_* <= 0`.
fn nuclear_tangent<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    m1: usize,
    m2: usize,
    rng: &mut R,
) -> DVector<f64> {
    let r = u.ncols() as f64;
    let pu = DMatrix::identity(m1, m1) - u * u.transpose();
    let pv = DMatrix::identity(m2, m2) - v * v.transpose();
    let uv = u * v.transpose();
    let g = DMatrix::from_fn(m1, m2, |_, _| normal(rng));
    let h = DMatrix::from_fn(m1, m2, |_, _| normal(rng));
    let in_span = &g - &pu * &g * &pv;
    let a = uv.dot(&in_span);
    let xi = normal(rng).abs();
    let t = in_span - &uv * ((a + r * xi) / r);
    let w = &pu * h * &pv;
    let wn = linalg::singular_values(&w).sum();
    let budget = r * xi * rng.random_range(0.0..1.0);
    let d = if wn > 0.0 { t + w * (budget / wn) } else { t };
    flatten(&d)
}

/// Numerical support function of the elliptope, `max <C, M>` over symmetric
/// PSD `M` with unit diagonal, by projected gradient ascent. A diagnostic
/// value, not a certified one.
fn elliptope_support(c: &DMatrix<f64>, m: usize) -> Result<f64> {
    let cs = (c + c.transpose()) * 0.5;
    let scale = cs.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let psd = |v: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(flatten(&prox::project_psd(&unflatten(v, m, m))?.matrix))
    };
    let diag = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let mut out = v.clone();
        for i in 0..m {
            out[i * m + i] = 1.0;
        }
        Ok(out)
    };
    let step = flatten(&(&cs / scale)) * (m as f64);
    let mut point = flatten(&DMatrix::identity(m, m));
    let mut best = f64::NEG_INFINITY;
    for _ in 0..300 {
        let target = &point + &step;
        let next = match prox::dykstra(&[&psd, &diag], &target, 1e-10, 2000) {
            Ok(sol) => sol.point,
            Err(Error::NonConvergence { last, .. }) => *last,
            Err(e) => return Err(e),
        };
        let moved = (&next - &point).norm();
        point = next;
        best = best.max(flatten(&cs).dot(&point));
        if moved < 1e-10 {
            break;
        }
    }
    Ok(best)
}
