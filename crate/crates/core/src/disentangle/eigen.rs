use nalgebra::{DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn select_top(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `k` largest eigenvalues (descending) and their eigenvectors as columns,
/// via a full symmetric eigendecomposition.
pub fn top_eigenpairs_dense(a: &Matrix, k: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("cannot take {k} eigenpairs of a {n}×{n} matrix")));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Degenerate("symmetric eigensolver did not converge".into()))?;
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let idx = select_top(&vals, k);
    let vecs = Matrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok((idx.iter().map(|&i| vals[i]).collect(), vecs))
}

/// Same contract as [`top_eigenpairs_dense`] using Lanczos iterations with
/// full reorthogonalization, growing the Krylov space until every wanted
/// Ritz pair has residual below `1e-10`.
pub fn top_eigenpairs_lanczos(a: &Matrix, k: usize, seed: u64) -> Result<(Vec<f64>, Matrix)> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("cannot take {k} eigenpairs of a {n}×{n} matrix")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    start.normalize_mut();
    let mut steps = (4 * k + 60).min(n);
    loop {
        let mut q = Matrix::zeros(n, steps + 1);
        q.set_column(0, &start);
        let mut alpha = Vec::with_capacity(steps);
        let mut beta: Vec<f64> = Vec::with_capacity(steps);
        let mut used = 0;
        for j in 0..steps {
            let qj = q.column(j).into_owned();
            let mut w = a * &qj;
            let aj = qj.dot(&w);
            alpha.push(aj);
            used = j + 1;
            for _ in 0..2 {
                let coeffs = q.columns(0, j + 1).transpose() * &w;
                w -= q.columns(0, j + 1) * coeffs;
            }
            let bj = w.norm();
            beta.push(bj);
            if bj < 1e-12 {
                break;
            }
            q.set_column(j + 1, &(w / bj));
        }
        let mut t = Matrix::zeros(used, used);
        for i in 0..used {
            t[(i, i)] = alpha[i];
            if i + 1 < used {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::try_new(t, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Degenerate("tridiagonal eigensolver did not converge".into()))?;
        let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if used < k {
            return Err(Error::Degenerate(format!(
                "Krylov space collapsed after {used} steps, fewer than {k} eigenpairs"
            )));
        }
        let idx = select_top(&vals, k);
        let last_beta = beta[used - 1];
        let converged = idx
            .iter()
            .all(|&i| (last_beta * eig.eigenvectors[(used - 1, i)]).abs() < 1e-10);
        if converged || used < steps || steps == n {
            let basis = q.columns(0, used);
            let mut vecs = Matrix::zeros(n, k);
            for (c, &i) in idx.iter().enumerate() {
                let mut v = basis * eig.eigenvectors.column(i);
                v.normalize_mut();
                vecs.set_column(c, &v);
            }
            return Ok((idx.iter().map(|&i| vals[i]).collect(), vecs));
        }
        steps = (2 * steps).min(n);
    }
}

/// Matrices up to this size use the dense solver.
pub const DENSE_LIMIT: usize = 512;

/// Dense decomposition for small matrices, Lanczos above [`DENSE_LIMIT`].
pub fn top_eigenpairs(a: &Matrix, k: usize, seed: u64) -> Result<(Vec<f64>, Matrix)> {
    if a.nrows() <= DENSE_LIMIT {
        top_eigenpairs_dense(a, k)
    } else {
        top_eigenpairs_lanczos(a, k, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos_matches_dense() {
        let n = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let a = (&b + b.transpose()) * 0.5;
        let (dv, dvec) = top_eigenpairs_dense(&a, 3).unwrap();
        let (lv, lvec) = top_eigenpairs_lanczos(&a, 3, 9).unwrap();
        for i in 0..3 {
            assert!((dv[i] - lv[i]).abs() < 1e-8);
            let overlap = dvec.column(i).dot(&lvec.column(i)).abs();
            assert!((overlap - 1.0).abs() < 1e-8, "{overlap}");
        }
    }
}
