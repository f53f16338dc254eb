//! Measurement maps, ground-truth models and problem instances.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::atoms::{AtomicSet, SetParams};
use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::{normal, RngStream};

/// Dense measurement operator `R^p -> R^n`; the adjoint is the transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(invalid("measurement map needs n >= 1 and p >= 1"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("measurement map has non-finite entries"));
        }
        Ok(Self { matrix })
    }

    pub fn identity(p: usize) -> Result<Self> {
        Self::new(DMatrix::identity(p, p))
    }

    pub fn zeros(n: usize, p: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, p))
    }

    /// I.i.d. zero-mean Gaussian entries with the given variance, drawn in
    /// row-major order from `rng`.
    pub fn sample_gaussian(n: usize, p: usize, variance: f64, rng: &RngStream) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(invalid(format!("variance must be positive, got {variance}")));
        }
        if n == 0 || p == 0 {
            return Err(invalid("measurement map needs n >= 1 and p >= 1"));
        }
        let mut g = rng.generator();
        Ok(Self::sample_with(n, p, variance, &mut g))
    }

    pub(crate) fn sample_with<R: Rng + ?Sized>(n: usize, p: usize, variance: f64, rng: &mut R) -> Self {
        let sd = variance.sqrt();
        let mut matrix = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                matrix[(i, j)] = sd * normal(rng);
            }
        }
        Self { matrix }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.p() {
            return Err(shape_err(format!("vector of length p = {}", self.p()), x.len()));
        }
        Ok(&self.matrix * x)
    }

    pub fn adjoint(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.n() {
            return Err(shape_err(format!("vector of length n = {}", self.n()), z.len()));
        }
        Ok(self.matrix.tr_mul(z))
    }

    /// Operator-norm estimate by power iteration on `Phi^T Phi` from a fixed
    /// start, so the result is deterministic.
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        let p = self.p();
        let mut v = DVector::from_fn(p, |i, _| 1.0 + (i % 7) as f64 * 0.1);
        v /= v.norm();
        let mut est = 0.0;
        for _ in 0..iterations {
            let w = self.matrix.tr_mul(&(&self.matrix * &v));
            let nw = w.norm();
            if nw == 0.0 {
                return 0.0;
            }
            est = nw;
            v = w / nw;
        }
        est.sqrt()
    }
}

/// A ground-truth point written as a nonnegative combination of atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicModel {
    pub set: AtomicSet,
    pub atoms: Vec<DVector<f64>>,
    pub coefficients: Vec<f64>,
    pub ambient: DVector<f64>,
}

impl AtomicModel {
    pub fn new(set: AtomicSet, atoms: Vec<DVector<f64>>, coefficients: Vec<f64>) -> Result<Self> {
        if atoms.len() != coefficients.len() {
            return Err(shape_err(format!("{} coefficients", atoms.len()), coefficients.len()));
        }
        if let Some(c) = coefficients.iter().find(|c| !(**c >= 0.0)) {
            return Err(invalid(format!("coefficients must be nonnegative, got {c}")));
        }
        let p = set.ambient_dim();
        let mut ambient = DVector::zeros(p);
        for (a, &c) in atoms.iter().zip(&coefficients) {
            if !set.is_atom(a) {
                return Err(invalid(format!("vector is not an atom of `{}`", set.id())));
            }
            ambient.axpy(c, a, 1.0);
        }
        Ok(Self {
            set,
            atoms,
            coefficients,
            ambient,
        })
    }

    /// The zero model (no atoms).
    pub fn zero(set: AtomicSet) -> Self {
        Self {
            set,
            atoms: vec![],
            coefficients: vec![],
            ambient: DVector::zeros(set.ambient_dim()),
        }
    }
}

/// Draw a ground-truth model for `set` with the complexity given in `params`.
pub fn synthesize_model(set: &AtomicSet, params: &SetParams, rng: &RngStream) -> Result<AtomicModel> {
    set.sample_model(params, &mut rng.generator())
}

/// A measurement instance `y = Phi x + w`, `||w|| <= delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub map: LinearMap,
    pub y: DVector<f64>,
    pub set: AtomicSet,
    pub delta: Option<f64>,
    /// Ground-truth point, when known.
    pub truth: Option<DVector<f64>>,
}

fn format_err(key: &str, message: impl Into<String>) -> Error {
    Error::ProblemFormat {
        key: key.to_string(),
        message: message.into(),
    }
}

fn number(v: &Value, key: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| format_err(key, "expected a number"))
}

fn count(v: &Value, key: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| format_err(key, "expected a nonnegative integer"))
}

fn numbers(v: &Value, key: &str, len: usize) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| format_err(key, "expected an array of numbers"))?;
    if arr.len() != len {
        return Err(format_err(key, format!("expected {len} entries, found {}", arr.len())));
    }
    arr.iter()
        .map(|x| {
            let f = number(x, key)?;
            if f.is_finite() {
                Ok(f)
            } else {
                Err(format_err(key, "entries must be finite"))
            }
        })
        .collect()
}

impl Problem {
    pub fn new(map: LinearMap, y: DVector<f64>, set: AtomicSet, delta: Option<f64>) -> Result<Self> {
        if y.len() != map.n() {
            return Err(shape_err(format!("y of length n = {}", map.n()), y.len()));
        }
        if map.p() != set.ambient_dim() {
            return Err(shape_err(
                format!("p = {} for set `{}`", set.ambient_dim(), set.id()),
                map.p(),
            ));
        }
        if let Some(d) = delta {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(invalid(format!("delta must be a nonnegative number, got {d}")));
            }
        }
        Ok(Self {
            map,
            y,
            set,
            delta,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: DVector<f64>) -> Result<Self> {
        if truth.len() != self.map.p() {
            return Err(shape_err(format!("truth of length p = {}", self.map.p()), truth.len()));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| format_err("<root>", "expected a JSON object"))?;
        let get = |key: &str| obj.get(key).ok_or_else(|| format_err(key, "missing"));
        let n = count(get("n")?, "n")?;
        let p = count(get("p")?, "p")?;
        if n == 0 || p == 0 {
            return Err(format_err(if n == 0 { "n" } else { "p" }, "must be >= 1"));
        }
        let rows = get("phi")?
            .as_array()
            .ok_or_else(|| format_err("phi", "expected an array of rows"))?;
        if rows.len() != n {
            return Err(format_err("phi", format!("expected {n} rows, found {}", rows.len())));
        }
        let mut phi = DMatrix::zeros(n, p);
        for (i, row) in rows.iter().enumerate() {
            let vals = numbers(row, "phi", p)?;
            for (j, v) in vals.into_iter().enumerate() {
                phi[(i, j)] = v;
            }
        }
        let y = DVector::from_vec(numbers(get("y")?, "y", n)?);
        let set_id = get("set")?
            .as_str()
            .ok_or_else(|| format_err("set", "expected a string"))?;
        let params: SetParams = match obj.get("set_params") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| format_err("set_params", e.to_string()))?,
            None => SetParams::default(),
        };
        let set = AtomicSet::from_id(set_id, &params, Some(p)).map_err(|e| format_err("set", e.to_string()))?;
        let delta = match obj.get("delta") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let d = number(v, "delta")?;
                if !(d >= 0.0) {
                    return Err(format_err("delta", "must be nonnegative"));
                }
                Some(d)
            }
        };
        let map = LinearMap::new(phi).map_err(|e| format_err("phi", e.to_string()))?;
        let mut problem = Problem::new(map, y, set, delta)?;
        if let Some(v) = obj.get("x_true") {
            if !v.is_null() {
                problem.truth = Some(DVector::from_vec(numbers(v, "x_true", p)?));
            }
        }
        Ok(problem)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json(&value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Value {
        let m = self.map.matrix();
        let phi: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        let mut obj = Map::new();
        obj.insert("n".into(), json!(self.map.n()));
        obj.insert("p".into(), json!(self.map.p()));
        obj.insert("phi".into(), json!(phi));
        obj.insert("y".into(), json!(self.y.as_slice()));
        obj.insert("set".into(), json!(self.set.id()));
        obj.insert("set_params".into(), serde_json::to_value(self.set.params()).expect("plain struct"));
        if let Some(d) = self.delta {
            obj.insert("delta".into(), json!(d));
        }
        if let Some(t) = &self.truth {
            obj.insert("x_true".into(), json!(t.as_slice()));
        }
        Value::Object(obj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_small_cases() {
        let id = LinearMap::identity(2).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(id.apply(&x).unwrap(), x);
        let z = LinearMap::zeros(3, 2).unwrap();
        assert_eq!(z.apply(&x).unwrap(), DVector::zeros(3));
        let m = LinearMap::new(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0])).unwrap();
        let out = m.apply(&DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out, DVector::from_vec(vec![1.0, 5.0]));
        assert!(matches!(m.apply(&x), Err(Error::Shape { .. })));
        assert!(matches!(m.adjoint(&DVector::zeros(3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn gaussian_map_is_deterministic_and_validated() {
        let s = RngStream::new(5, 0);
        let a = LinearMap::sample_gaussian(1, 1, 1.0, &s).unwrap();
        let b = LinearMap::sample_gaussian(1, 1, 1.0, &s).unwrap();
        assert_eq!(a, b);
        assert!(LinearMap::sample_gaussian(2, 2, 0.0, &s).is_err());
        assert!(LinearMap::sample_gaussian(2, 2, -1.0, &s).is_err());
    }

    #[test]
    fn gaussian_map_entry_mean() {
        // Entry (0,0) of 10^4 independent 4x4 maps with variance 1/4.
        let s = RngStream::new(11, 0);
        let k = 10_000;
        let mean: f64 = (0..k)
            .map(|i| LinearMap::sample_gaussian(4, 4, 0.25, &s.child(i)).unwrap().matrix()[(0, 0)])
            .sum::<f64>()
            / k as f64;
        assert!(mean.abs() <= 4.0 * 0.5 / 100.0, "mean {mean}");
    }

    #[test]
    fn gaussian_map_entry_variance() {
        let s = RngStream::new(12, 0);
        let k = 100_000 / 6 + 1;
        let mut vals = Vec::new();
        for i in 0..k {
            vals.extend(LinearMap::sample_gaussian(2, 3, 0.5, &s.child(i as u64)).unwrap().matrix().iter().copied());
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Standard error of the sample variance of a Gaussian: sigma^2 sqrt(2/(n-1)).
        let se = 0.5 * (2.0 / (n - 1.0)).sqrt();
        assert!((var - 0.5).abs() <= 3.0 * se, "var {var} se {se}");
    }

    #[test]
    fn norm_estimate_matches_svd() {
        let m = LinearMap::sample_gaussian(6, 9, 1.0, &RngStream::new(3, 0)).unwrap();
        let top = crate::linalg::singular_values(m.matrix()).max();
        assert!((m.norm_estimate(200) - top).abs() <= 1e-6 * top);
    }

    #[test]
    fn synthesized_examples() {
        let rng = RngStream::new(1, 2);
        let perm = synthesize_model(&AtomicSet::birkhoff(3).unwrap(), &SetParams::default(), &rng).unwrap();
        let x = crate::linalg::unflatten(&perm.ambient, 3, 3);
        for i in 0..3 {
            assert_eq!(x.row(i).sum(), 1.0);
            assert_eq!(x.column(i).sum(), 1.0);
        }
        assert!(perm.ambient.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(perm.coefficients, vec![1.0]);

        let params = SetParams {
            s: Some(2),
            ..Default::default()
        };
        let sparse = synthesize_model(&AtomicSet::l1(5).unwrap(), &params, &rng).unwrap();
        assert_eq!(sparse.ambient.iter().filter(|v| **v != 0.0).count(), 2);

        let params = SetParams {
            r: Some(1),
            ..Default::default()
        };
        let low = synthesize_model(&AtomicSet::nuclear(4, 4).unwrap(), &params, &rng).unwrap();
        let s = crate::linalg::singular_values(&crate::linalg::unflatten(&low.ambient, 4, 4));
        assert!(s[1] < 1e-10);
    }

    #[test]
    fn problem_json_round_trip() {
        let set = AtomicSet::l1(3).unwrap();
        let map = LinearMap::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5])).unwrap();
        let p = Problem::new(map, DVector::from_vec(vec![0.1, -0.2]), set, Some(0.01))
            .unwrap()
            .with_truth(DVector::from_vec(vec![1.0, 0.0, 0.0]))
            .unwrap();
        let back = Problem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn problem_json_errors_name_the_key() {
        let base = json!({"n": 1, "p": 2, "phi": [[1.0, 2.0]], "y": [1.0], "set": "l1"});
        assert!(Problem::from_json(&base).is_ok());
        let cases = [
            ("phi", json!([[1.0]])),
            ("y", json!([1.0, 2.0])),
            ("set", json!("nope")),
            ("n", json!("one")),
            ("delta", json!(-1.0)),
        ];
        for (key, bad) in cases {
            let mut v = base.clone();
            v[key] = bad;
            match Problem::from_json(&v) {
                Err(Error::ProblemFormat { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{key}: {other:?}"),
            }
        }
        let mut v = base.clone();
        v.as_object_mut().unwrap().remove("y");
        assert!(matches!(Problem::from_json(&v), Err(Error::ProblemFormat { key, .. }) if key == "y"));
    }
}
