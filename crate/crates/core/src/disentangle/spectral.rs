use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quantizer::kmeans_pp_indices;

use super::affinity::build_affinity;
use super::eigen::top_eigenpairs;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOptions {
    pub n_clusters: usize,
    pub seed: u64,
    /// Independent k-means runs; the one with the lowest inertia wins.
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            seed: 0,
            restarts: 50,
            max_iter: 300,
        }
    }
}

/// Row-normalized leading eigenvectors of `D^{-1/2} W D^{-1/2}`, i.e. the
/// eigenvectors of the smallest eigenvalues of `I − D^{-1/2} W D^{-1/2}`.
pub fn spectral_embedding(affinity: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    let m = affinity.nrows();
    let degrees: Vec<f64> = (0..m).map(|i| affinity.row(i).sum()).collect();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Degenerate(format!("point {i} is disconnected from the graph")));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let a = Matrix::from_fn(m, m, |i, j| inv_sqrt[i] * affinity[(i, j)] * inv_sqrt[j]);
    let (_, mut u) = top_eigenpairs(&a, k, seed)?;
    for mut row in u.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub inertia: f64,
}

fn lloyd(data: &Matrix, mut centers: Matrix, max_iter: usize) -> KMeansResult {
    let (m, d) = (data.nrows(), data.ncols());
    let k = centers.nrows();
    let mut labels = vec![usize::MAX; m];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist: f64 = (0..d).map(|j| (data[(i, j)] - centers[(c, j)]).powi(2)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += data.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centers.set_row(c, &mean);
            }
        }
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (0..d).map(|j| (data[(i, j)] - centers[(l, j)]).powi(2)).sum::<f64>())
        .sum();
    KMeansResult {
        labels,
        centers,
        inertia,
    }
}

/// Lloyd's algorithm from `restarts` k-means++ seedings drawn from one
/// seeded stream; returns the lowest-inertia run (earliest on ties).
pub fn kmeans(data: &Matrix, k: usize, restarts: usize, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    if restarts == 0 {
        return Err(Error::InvalidConfig("k-means needs at least one restart".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let idx = kmeans_pp_indices(data, k, &mut rng)?;
        let centers = Matrix::from_fn(k, data.ncols(), |r, c| data[(idx[r], c)]);
        let run = lloyd(data, centers, max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Ng–Jordan–Weiss spectral clustering with a median-σ Gaussian affinity.
pub fn spectral_clustering_with(points: &Matrix, opts: &SpectralOptions) -> Result<Vec<usize>> {
    if opts.n_clusters == 0 || points.nrows() < opts.n_clusters {
        return Err(Error::InsufficientData(format!(
            "{} points cannot form {} clusters",
            points.nrows(),
            opts.n_clusters
        )));
    }
    let w = build_affinity(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eig_seed: u64 = rng.random();
    let km_seed: u64 = rng.random();
    let u = spectral_embedding(&w, opts.n_clusters, eig_seed)?;
    Ok(kmeans(&u, opts.n_clusters, opts.restarts, opts.max_iter, km_seed)?.labels)
}

pub fn spectral_clustering(points: &Matrix, n_clusters: usize, seed: u64) -> Result<Vec<usize>> {
    spectral_clustering_with(
        points,
        &SpectralOptions {
            n_clusters,
            seed,
            ..SpectralOptions::default()
        },
    )
}

/// `cut(A, B) / vol(A) + cut(A, B) / vol(B)` for a 0/1 labelling.
pub fn normalized_cut(affinity: &Matrix, labels: &[usize]) -> Result<f64> {
    let m = affinity.nrows();
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            context: "normalized_cut labels",
            expected: m,
            got: labels.len(),
        });
    }
    let (mut cut, mut vol_a, mut vol_b) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let w = affinity[(i, j)];
            if labels[i] == 0 {
                vol_a += w;
            } else {
                vol_b += w;
            }
            if labels[i] == 0 && labels[j] != 0 {
                cut += w;
            }
        }
    }
    if vol_a == 0.0 || vol_b == 0.0 {
        return Err(Error::Degenerate("one side of the partition has zero volume".into()));
    }
    Ok(cut / vol_a + cut / vol_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tight_pairs() {
        let p = Matrix::from_row_slice(4, 2, &[0.0, 0.0, 0.1, 0.0, 5.0, 5.0, 5.1, 5.0]);
        let l = spectral_clustering(&p, 2, 0).unwrap();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
    }

    #[test]
    fn deterministic() {
        let p = Matrix::from_fn(30, 2, |r, c| ((r * 7 + c * 3) % 11) as f64 + if r < 15 { 0.0 } else { 20.0 });
        assert_eq!(spectral_clustering(&p, 2, 5).unwrap(), spectral_clustering(&p, 2, 5).unwrap());
    }

    #[test]
    fn too_few_points() {
        assert!(spectral_clustering(&Matrix::zeros(1, 2), 2, 0).is_err());
    }
}
