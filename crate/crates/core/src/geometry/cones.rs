//! Distances from a point to normal cones of atomic norms.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, shape_err, Result};
use crate::linalg;
use crate::prox::shrink;

const BISECTION_TOL: f64 = 1e-10;

fn check_support(g: &DVector<f64>, support: &[usize], signs: &[f64]) -> Result<()> {
    if support.len() != signs.len() {
        return Err(shape_err(format!("{} signs", support.len()), signs.len()));
    }
    if let Some(&i) = support.iter().find(|&&i| i >= g.len()) {
        return Err(invalid(format!("support index {i} out of range for length {}", g.len())));
    }
    Ok(())
}

/// Minimizer over `t >= 0` of
/// `sum_{i in S} (g_i - t s_i)^2 + sum_{j not in S} shrink(g_j, t)^2`.
fn l1_scale(g: &DVector<f64>, support: &[usize], signs: &[f64]) -> f64 {
    let mut on = vec![false; g.len()];
    for &i in support {
        on[i] = true;
    }
    // Half the derivative; nondecreasing in t because the objective is convex.
    let slope = |t: f64| -> f64 {
        let mut d = 0.0;
        for (&i, &s) in support.iter().zip(signs) {
            d -= s * (g[i] - t * s);
        }
        for (j, &v) in g.iter().enumerate() {
            if !on[j] {
                d -= shrink(v.abs(), t);
            }
        }
        d
    };
    let mut lo = 0.0;
    let mut hi = 20.0 + g.amax();
    if slope(lo) >= 0.0 {
        return 0.0;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nearest point to `g` in the normal cone of the l1 norm at a point with the
/// given support and signs. An empty support means the point is the origin,
/// whose normal cone is the whole space.
pub fn project_normal_cone_l1(g: &DVector<f64>, support: &[usize], signs: &[f64]) -> Result<DVector<f64>> {
    check_support(g, support, signs)?;
    if support.is_empty() {
        return Ok(g.clone());
    }
    let t = l1_scale(g, support, signs);
    let mut z = g.map(|v| v.clamp(-t, t));
    for (&i, &s) in support.iter().zip(signs) {
        z[i] = t * s;
    }
    Ok(z)
}

/// Exact distance from `g` to the l1 normal cone; see [`project_normal_cone_l1`].
pub fn dist_normal_cone_l1(g: &DVector<f64>, support: &[usize], signs: &[f64]) -> Result<f64> {
    Ok((g - project_normal_cone_l1(g, support, signs)?).norm())
}

/// Exact distance from `g` to the normal cone of the l-infinity norm at a
/// point whose saturated coordinates (`|x_i| = ||x||_inf`) are `saturated`
/// with the given signs. An empty set means the origin (distance 0).
pub fn dist_normal_cone_linf(g: &DVector<f64>, saturated: &[usize], signs: &[f64]) -> f64 {
    if saturated.is_empty() {
        return 0.0;
    }
    let mut on = vec![false; g.len()];
    let mut sq = 0.0;
    for (&i, &s) in saturated.iter().zip(signs) {
        on[i] = true;
        sq += (s * g[i]).min(0.0).powi(2);
    }
    for (j, &v) in g.iter().enumerate() {
        if !on[j] {
            sq += v * v;
        }
    }
    sq.sqrt()
}

fn check_frame(f: &DMatrix<f64>, name: &str) -> Result<()> {
    let dev = (f.transpose() * f - DMatrix::identity(f.ncols(), f.ncols())).amax();
    if dev > 1e-8 {
        return Err(invalid(format!("frame {name} is not orthonormal (Gram deviation {dev:.3e})")));
    }
    Ok(())
}

/// Upper bound on the distance from `G` to the nuclear-norm normal cone at a
/// point with singular frames `U`, `V`, using the normal-cone element
/// `||P(G)|| U V^T + P(G)` where `P` projects onto the orthogonal complement
/// of both frames.
pub fn dist_normal_cone_nuclear_ub(g: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let (m1, m2) = g.shape();
    if u.nrows() != m1 || v.nrows() != m2 || u.ncols() != v.ncols() {
        return Err(shape_err(
            format!("frames {m1} x r and {m2} x r"),
            format!("{:?} and {:?}", u.shape(), v.shape()),
        ));
    }
    check_frame(u, "U")?;
    check_frame(v, "V")?;
    let left = g - u * (u.transpose() * g);
    let perp = &left - (&left * v) * v.transpose();
    let op = if perp.is_empty() {
        0.0
    } else {
        linalg::singular_values(&perp).max()
    };
    let z = u * v.transpose() * op + &perp;
    Ok((g - z).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, RngStream};
    use rand::seq::index::sample;

    fn l1_objective(g: &DVector<f64>, support: &[usize], signs: &[f64], t: f64) -> f64 {
        let mut val = 0.0;
        for j in 0..g.len() {
            match support.iter().position(|&i| i == j) {
                Some(k) => val += (g[j] - t * signs[k]).powi(2),
                None => val += shrink(g[j].abs(), t).powi(2),
            }
        }
        val
    }

    #[test]
    fn l1_trivial_cases() {
        let g = DVector::zeros(5);
        assert_eq!(dist_normal_cone_l1(&g, &[1, 3], &[1.0, -1.0]).unwrap(), 0.0);
        let mut g = DVector::zeros(5);
        g[1] = 1.0;
        g[3] = -1.0;
        assert!(dist_normal_cone_l1(&g, &[1, 3], &[1.0, -1.0]).unwrap() < 1e-9);
        assert_eq!(dist_normal_cone_l1(&g, &[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn l1_matches_dense_grid() {
        let mut rng = RngStream::new(21, 0).generator();
        for _ in 0..5 {
            let g = normal_vec(&mut rng, 10);
            let support = sample(&mut rng, 10, 3).into_vec();
            let signs = vec![1.0, -1.0, 1.0];
            let hi = 20.0 + g.amax();
            let k = 1_000_000;
            let best = (0..=k)
                .map(|i| l1_objective(&g, &support, &signs, hi * i as f64 / k as f64))
                .fold(f64::INFINITY, f64::min);
            let d = dist_normal_cone_l1(&g, &support, &signs).unwrap();
            assert!((d * d - best).abs() <= 1e-6, "{} vs {}", d * d, best);
        }
    }

    #[test]
    fn linf_distance_formula() {
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        // Saturated {0 (+), 1 (+)}: g_1 points the wrong way.
        let d = dist_normal_cone_linf(&g, &[0, 1], &[1.0, 1.0]);
        assert!((d - (4.0f64 + 0.25).sqrt()).abs() < 1e-15);
        assert_eq!(dist_normal_cone_linf(&g, &[], &[]), 0.0);
    }

    fn frames(m1: usize, m2: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut u = DMatrix::zeros(m1, 1);
        u[(0, 0)] = 1.0;
        let mut v = DMatrix::zeros(m2, 1);
        v[(1, 0)] = 1.0;
        (u, v)
    }

    #[test]
    fn nuclear_construction_cases() {
        let (u, v) = frames(3, 4);
        // G = U V^T: the complement part vanishes, so Z = 0.
        let g = &u * v.transpose();
        assert!((dist_normal_cone_nuclear_ub(&g, &u, &v).unwrap() - 1.0).abs() < 1e-12);
        // G supported on the complement: distance = ||G|| sqrt(r).
        let mut g = DMatrix::zeros(3, 4);
        g[(1, 0)] = 2.0;
        g[(2, 2)] = -0.5;
        assert!((dist_normal_cone_nuclear_ub(&g, &u, &v).unwrap() - 2.0).abs() < 1e-12);
        let bad = DMatrix::from_element(3, 1, 1.0);
        assert!(dist_normal_cone_nuclear_ub(&g, &bad, &v).is_err());
    }
}
