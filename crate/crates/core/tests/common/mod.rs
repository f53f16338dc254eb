//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Visit every permutation of `0..m` (Heap-style swaps).
pub fn for_each_permutation(m: usize, visit: &mut dyn FnMut(&[usize])) {
    fn go(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            go(p, k + 1, visit);
            p.swap(k, i);
        }
    }
    go(&mut (0..m).collect(), 0, visit);
}

/// `max_P <X, P>` by enumerating all permutation matrices.
pub fn max_over_permutations(x: &DMatrix<f64>) -> f64 {
    let m = x.nrows();
    let mut best = f64::NEG_INFINITY;
    for_each_permutation(m, &mut |p| {
        best = best.max((0..m).map(|i| x[(i, p[i])]).sum());
    });
    best
}

/// Euclidean projection onto the doubly stochastic matrices, by semismooth
/// Newton on the dual: `Z = (X + a 1^T + 1 b^T)_+` with the multipliers `a`,
/// `b` chosen so all row and column sums are one. The KKT conditions are
/// checked before returning, so the answer certifies itself.
pub fn birkhoff_projection_qp(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows();
    let primal = |d: &DVector<f64>| DMatrix::from_fn(m, m, |i, j| (x[(i, j)] + d[i] + d[m + j]).max(0.0));
    let residual = |z: &DMatrix<f64>| {
        DVector::from_fn(2 * m, |k, _| {
            if k < m {
                z.row(k).sum() - 1.0
            } else {
                z.column(k - m).sum() - 1.0
            }
        })
    };
    // Start with every entry active.
    let mut dual = DVector::zeros(2 * m);
    for i in 0..m {
        dual[i] = 1.0 - x.min();
    }
    let mut z = primal(&dual);
    let mut f = residual(&z);
    for _ in 0..500 {
        if f.amax() <= 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                if x[(i, j)] + dual[i] + dual[m + j] > 0.0 {
                    jac[(i, i)] += 1.0;
                    jac[(m + j, m + j)] += 1.0;
                    jac[(i, m + j)] += 1.0;
                    jac[(m + j, i)] += 1.0;
                }
            }
        }
        // The shift a + c, b - c is a null direction; the pseudo-inverse
        // picks the minimum-norm step.
        let step = jac.svd(true, true).solve(&(-&f), 1e-12).expect("svd solve");
        let merit = f.norm_squared();
        let mut t = 1.0;
        loop {
            let trial = &dual + &step * t;
            let zt = primal(&trial);
            let ft = residual(&zt);
            if ft.norm_squared() <= (1.0 - 1e-4 * t) * merit || t < 1e-12 {
                dual = trial;
                z = zt;
                f = ft;
                break;
            }
            t *= 0.5;
        }
    }
    let scale = 1.0 + x.amax();
    assert!(f.amax() <= 1e-12 * scale, "oracle did not converge: residual {}", f.amax());
    for i in 0..m {
        for j in 0..m {
            let s = x[(i, j)] + dual[i] + dual[m + j];
            assert!(z[(i, j)] >= 0.0);
            assert!(z[(i, j)] > 0.0 || s <= 1e-12 * scale, "complementarity violated");
        }
    }
    z
}

/// Row-major flattening, written out so the suites do not lean on the
/// library's own helper.
pub fn flat(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), (0..x.nrows()).flat_map(|i| (0..x.ncols()).map(move |j| x[(i, j)])))
}

pub fn unflat(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}
