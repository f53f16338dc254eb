//! Monte-Carlo Gaussian-width estimation.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::atoms::{AtomicSet, SetParams};
use crate::error::{invalid, Error, Result};
use crate::model::{synthesize_model, AtomicModel, LinearMap};
use crate::rng::{normal_vec, RngStream};

/// Whether a width estimate averages exact distances or upper bounds on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthKind {
    UpperBound,
    ExactOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub kind: WidthKind,
}

/// Expected norm of a standard Gaussian vector in `R^k`:
/// `sqrt(2) Gamma((k+1)/2) / Gamma(k/2)`.
pub fn lambda_k(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(invalid("lambda_k needs k >= 1"));
    }
    let k = k as f64;
    Ok(std::f64::consts::SQRT_2 * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp())
}

/// Compensated (Neumaier) sum; exact-order independent up to rounding of the
/// final result, which keeps parallel estimates reproducible.
fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Average `oracle(g)` over `n_samples` standard Gaussians in `R^p`. Sample `i`
/// is drawn from `rng.child(i)`, so the estimate does not depend on how the
/// samples are scheduled across threads.
pub fn mc_width<F>(oracle: F, p: usize, n_samples: usize, kind: WidthKind, rng: &RngStream) -> Result<WidthEstimate>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    if n_samples < 2 {
        return Err(invalid(format!(
            "width estimation needs at least 2 samples (stderr undefined), got {n_samples}"
        )));
    }
    if p == 0 {
        return Err(invalid("ambient dimension must be >= 1"));
    }
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let g = normal_vec(&mut rng.child(i).generator(), p);
            oracle(&g)
        })
        .collect::<Result<_>>()?;
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Numerical(format!("distance oracle returned {v}")));
    }
    let n = n_samples as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    let var = neumaier_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    Ok(WidthEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_samples,
        kind,
    })
}

/// Width estimate for a `k`-dimensional subspace of `R^p`: the distance from
/// `g` to its orthogonal complement is the norm of its first `k` coordinates.
pub fn subspace_width(k: usize, p: usize, n_samples: usize, rng: &RngStream) -> Result<WidthEstimate> {
    if k == 0 || k > p {
        return Err(invalid(format!("need 1 <= k <= p, got k = {k}, p = {p}")));
    }
    mc_width(
        |g| Ok(g.rows(0, k).norm()),
        p,
        n_samples,
        WidthKind::ExactOracle,
        rng,
    )
}

/// Width estimate of the tangent cone at a random model of the given
/// complexity. The model is drawn from `rng.child(0)` and the samples from
/// children of `rng.child(1)`.
pub fn model_width(
    set: &AtomicSet,
    params: &SetParams,
    n_samples: usize,
    rng: &RngStream,
) -> Result<(AtomicModel, WidthEstimate)> {
    let model = synthesize_model(set, params, &rng.child(0))?;
    let kind = set.normal_cone_distance(&model, &DVector::zeros(set.ambient_dim()))?.1;
    let est = mc_width(
        |g| Ok(set.normal_cone_distance(&model, g)?.0),
        set.ambient_dim(),
        n_samples,
        kind,
        &rng.child(1),
    )?;
    Ok((model, est))
}

/// Smallest `||Phi z||` over `n_dirs` random unit tangent directions at the
/// model. This over-estimates the true minimum gain over the tangent cone; it
/// is a diagnostic, not a certificate.
pub fn min_gain_estimate(map: &LinearMap, model: &AtomicModel, n_dirs: usize, rng: &RngStream) -> Result<f64> {
    let set = &model.set;
    if !set.has_tangent_sampler() {
        return Err(Error::MissingCapability {
            set: set.id(),
            capability: "a tangent sampler",
        });
    }
    if n_dirs == 0 {
        return Err(invalid("need at least one direction"));
    }
    let mut g = rng.generator();
    let mut best = f64::INFINITY;
    for _ in 0..n_dirs {
        let z = set.sample_tangent(model, &mut g)?;
        best = best.min(map.apply(&z)?.norm());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lambda_small_k() {
        assert!((lambda_k(1).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((lambda_k(2).unwrap() - (PI / 2.0).sqrt()).abs() < 1e-12);
        let l3 = lambda_k(3).unwrap();
        assert!((l3 - 2.0 * 2f64.sqrt() / PI.sqrt()).abs() < 1e-12);
        assert!((1.5..=3f64.sqrt()).contains(&l3));
        assert!(lambda_k(0).is_err());
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(vals), 2.0);
    }

    #[test]
    fn full_space_width_is_lambda_p() {
        let p = 30;
        let est = mc_width(|g| Ok(g.norm()), p, 2000, WidthKind::ExactOracle, &RngStream::new(1, 0)).unwrap();
        assert!((est.mean - lambda_k(p).unwrap()).abs() <= 3.0 * est.stderr);
    }

    #[test]
    fn rejects_single_sample() {
        assert!(mc_width(|g| Ok(g.norm()), 3, 1, WidthKind::ExactOracle, &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn estimate_is_reproducible() {
        let a = subspace_width(5, 40, 300, &RngStream::new(9, 3)).unwrap();
        let b = subspace_width(5, 40, 300, &RngStream::new(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gain_of_trivial_maps() {
        let set = AtomicSet::l1(6).unwrap();
        let params = SetParams {
            s: Some(2),
            ..Default::default()
        };
        let model = synthesize_model(&set, &params, &RngStream::new(2, 0)).unwrap();
        let id = LinearMap::identity(6).unwrap();
        let g = min_gain_estimate(&id, &model, 50, &RngStream::new(2, 1)).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let zero = LinearMap::zeros(3, 6).unwrap();
        assert_eq!(min_gain_estimate(&zero, &model, 50, &RngStream::new(2, 1)).unwrap(), 0.0);
        let perm = AtomicSet::birkhoff(3).unwrap();
        let pm = synthesize_model(&perm, &SetParams::default(), &RngStream::new(2, 0)).unwrap();
        assert!(matches!(
            min_gain_estimate(&LinearMap::identity(9).unwrap(), &pm, 5, &RngStream::new(2, 1)),
            Err(Error::MissingCapability { .. })
        ));
    }
}
