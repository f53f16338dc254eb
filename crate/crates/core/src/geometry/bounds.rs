//! Closed-form width bounds and measurement budgets.

use std::str::FromStr;

use serde::Serialize;

use crate::atoms::SetParams;
use crate::error::{invalid, Error, Result};
use crate::geometry::lambda_k;

/// Families with a closed-form squared-width bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSet {
    Sparse,
    LowRank,
    Sign,
    Orthogonal,
    VertexTransitive,
    Permutation,
}

impl FromStr for BoundSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l1" | "sparse" => BoundSet::Sparse,
            "nuclear" | "low-rank" => BoundSet::LowRank,
            "linf" | "sign" => BoundSet::Sign,
            "spectral" | "orthogonal" => BoundSet::Orthogonal,
            "vertex-transitive" => BoundSet::VertexTransitive,
            "birkhoff" | "permutation" => BoundSet::Permutation,
            other => return Err(Error::UnknownSet(other.to_string())),
        })
    }
}

fn need(v: Option<usize>, name: &str) -> Result<usize> {
    v.ok_or_else(|| invalid(format!("missing parameter `{name}`")))
}

/// Upper bound on the squared Gaussian width of the tangent cone (a sufficient
/// measurement count up to the `+1` of the exact-recovery budget).
///
/// * sparse (`s`, `p`): `2 s ln(p/s) + 5s/4`
/// * low-rank (`r`, `m1`, `m2`): `3 r (m1 + m2 - r)`
/// * sign (`p`, `k`): `(p + k)/2`
/// * orthogonal (`m`): `(3m^2 - m)/4`
/// * vertex-transitive polytope with `m` vertices: `9 ln m`
/// * permutation (`m`): `9 m ln m`
pub fn bound_catalog(set: BoundSet, params: &SetParams) -> Result<f64> {
    match set {
        BoundSet::Sparse => {
            let s = need(params.s, "s")?;
            let p = need(params.p, "p")?;
            if s == 0 || s > p {
                return Err(invalid(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
            }
            let (s, p) = (s as f64, p as f64);
            Ok(2.0 * s * (p / s).ln() + 1.25 * s)
        }
        BoundSet::LowRank => {
            let r = need(params.r, "r")?;
            let (m1, m2) = match (params.m1, params.m2, params.m) {
                (Some(a), Some(b), _) => (a, b),
                (None, None, Some(m)) => (m, m),
                _ => return Err(invalid("missing parameters `m1` and `m2`")),
            };
            if r > m1.min(m2) || m1 == 0 || m2 == 0 {
                return Err(invalid(format!("need r <= min(m1, m2), got r = {r}, m1 = {m1}, m2 = {m2}")));
            }
            Ok(3.0 * r as f64 * (m1 + m2 - r) as f64)
        }
        BoundSet::Sign => {
            let p = need(params.p, "p")?;
            let k = params.k.unwrap_or(0);
            if k > p || p == 0 {
                return Err(invalid(format!("need k <= p, got k = {k}, p = {p}")));
            }
            Ok((p + k) as f64 / 2.0)
        }
        BoundSet::Orthogonal => {
            let m = need(params.m, "m")? as f64;
            if m < 1.0 {
                return Err(invalid("need m >= 1"));
            }
            Ok((3.0 * m * m - m) / 4.0)
        }
        BoundSet::VertexTransitive => {
            let m = need(params.m, "m")?;
            if m < 1 {
                return Err(invalid("need at least one vertex"));
            }
            Ok(9.0 * (m as f64).ln())
        }
        BoundSet::Permutation => {
            let m = need(params.m, "m")?;
            if m < 2 {
                return Err(invalid("need m >= 2"));
            }
            let m = m as f64;
            Ok(9.0 * m * m.ln())
        }
    }
}

/// Width bound for the tangent cone of a polytope whose normal cone occupies a
/// fraction `theta` of the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeBound {
    /// `3 sqrt(ln(4 / theta))`.
    pub raw: f64,
    /// `min(raw, sqrt(p))`; no cone in `R^p` has width above `sqrt(p)`.
    pub capped: f64,
}

pub fn bound_volume(theta: f64, p: usize) -> Result<VolumeBound> {
    if p < 9 {
        return Err(Error::Domain(format!(
            "the volume bound holds only for ambient dimension p >= 9, got p = {p}"
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid(format!("volume fraction must lie in (0, 1], got {theta}")));
    }
    let raw = 3.0 * (4.0 / theta).ln().sqrt();
    Ok(VolumeBound {
        raw,
        capped: raw.min((p as f64).sqrt()),
    })
}

/// Bound on the squared width of the polar of a cone with width `width`:
/// `p - width^2`.
pub fn duality_budget(p: usize, width: f64) -> Result<f64> {
    let w2 = width * width;
    if !(width >= 0.0) || w2 > p as f64 {
        return Err(invalid(format!("need 0 <= width^2 <= p, got width^2 = {w2}, p = {p}")));
    }
    Ok(p as f64 - w2)
}

/// Squared-width bound `p/2` for a self-dual cone.
pub fn self_dual_budget(p: usize) -> f64 {
    p as f64 / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementBudget {
    pub width: f64,
    pub width_sq: f64,
    pub epsilon: f64,
    /// Measurements sufficient for exact recovery with high probability.
    pub n_exact: usize,
    /// Measurements sufficient for minimum gain `epsilon` with high probability.
    pub n_robust: usize,
}

/// `ceil` that ignores rounding noise just above an integer.
fn ceil_tolerant(v: f64) -> usize {
    let c = (v - 1e-9 * v.abs().max(1.0)).ceil();
    c.max(0.0) as usize
}

pub fn measurement_budget(width: f64, epsilon: f64) -> Result<MeasurementBudget> {
    if !(width >= 0.0) || !width.is_finite() {
        return Err(invalid(format!("width must be a nonnegative number, got {width}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    let width_sq = width * width;
    Ok(MeasurementBudget {
        width,
        width_sq,
        epsilon,
        n_exact: ceil_tolerant(width_sq + 1.0),
        n_robust: ceil_tolerant((width_sq + 1.5) / (1.0 - epsilon).powi(2)),
    })
}

impl MeasurementBudget {
    /// Lower bound on the probability that `n` Gaussian measurements achieve
    /// minimum gain `epsilon` (exact recovery when `epsilon = 0`).
    pub fn success_prob_at(&self, n: usize) -> Result<f64> {
        let margin = lambda_k(n)? - self.width - (n as f64).sqrt() * self.epsilon;
        if margin < 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 - (-0.5 * margin * margin).exp())
    }
}

/// Expected dimension `min(p, (k + 1) dim_a + k)` of the tangent space of the
/// secant variety of `k`-sums of atoms from a manifold of dimension `dim_a`.
pub fn terracini_lower_bound(dim_a: usize, k: usize, p: usize) -> usize {
    p.min((k + 1) * dim_a + k)
}
