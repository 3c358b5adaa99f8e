mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use common::{gaussian, ncut, ncut_brute_force, rng};
use vorvq::disentangle::{
    build_affinity, clustering_metrics, kmeans, normalized_cut, spectral_clustering, spectral_embedding,
    top_eigenpairs_dense, top_eigenpairs_lanczos, LabeledEmbeddings,
};
use vorvq::Matrix;

fn blobs(m: usize, dim: usize, separation: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut r = rng(seed);
    let truth: Vec<usize> = (0..m).map(|i| i % 2).collect();
    let pts = Matrix::from_fn(m, dim, |i, c| {
        let shift = if c == 0 && truth[i] == 1 { separation } else { 0.0 };
        shift + r.sample::<f64, _>(StandardNormal)
    });
    (pts, truth)
}

/// Small point sets made of two loose groups, so the optimal cut is well
/// defined and k-means on the spectral embedding can find it.
fn grouped(m: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let split = r.random_range(2..=m - 2);
    let gap = r.random_range(6.0..10.0);
    Matrix::from_fn(m, 2, |i, _| {
        (if i < split { 0.0 } else { gap }) + 0.3 * r.sample::<f64, _>(StandardNormal)
    })
}

#[test]
fn affinity_contract() {
    let mut p = gaussian(6, 2, &mut rng(1));
    let row = p.row(4).clone_owned();
    p.row_mut(5).copy_from(&row);
    let w = build_affinity(&p).unwrap();
    assert_eq!(w, w.transpose());
    assert_eq!(w[(4, 5)], 1.0);
    for i in 0..6 {
        assert_eq!(w[(i, i)], 0.0);
        for j in 0..6 {
            if i != j {
                assert!(w[(i, j)] > 0.0 && w[(i, j)] <= 1.0);
            }
        }
    }
    let d01 = (p.row(0) - p.row(1)).norm();
    let d02 = (p.row(0) - p.row(2)).norm();
    assert_eq!(d01 < d02, w[(0, 1)] > w[(0, 2)]);
    assert!(build_affinity(&Matrix::from_element(4, 2, 1.0)).is_err());
    assert!(build_affinity(&Matrix::zeros(1, 2)).is_err());
}

#[test]
fn metrics_examples() {
    let m = clustering_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
    assert!((m.accuracy - 0.75).abs() < 1e-15);
    assert!((m.macro_recall - 0.75).abs() < 1e-15);
    // F1: class 0 = 2/3, class 1 = 0.8
    assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
    let perfect = clustering_metrics(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap();
    assert_eq!((perfect.accuracy, perfect.macro_recall, perfect.macro_f1), (1.0, 1.0, 1.0));
    assert!(clustering_metrics(&[0, 1], &[1, 1]).is_err());
    assert!(clustering_metrics(&[0, 1, 0], &[1, 0]).is_err());
}

#[test]
fn separated_embeddings_score_perfectly() {
    let mut r = rng(2);
    let a = gaussian(50, 3, &mut r);
    let b = gaussian(50, 3, &mut r).add_scalar(40.0);
    let m = LabeledEmbeddings::from_parts(&a, &b).unwrap().evaluate(0).unwrap();
    assert_eq!((m.accuracy, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0));
}

#[test]
fn ten_sigma_blobs_are_recovered() {
    for seed in 0..3 {
        let (pts, truth) = blobs(200, 4, 10.0, seed);
        let pred = spectral_clustering(&pts, 2, seed).unwrap();
        assert_eq!(clustering_metrics(&pred, &truth).unwrap().accuracy, 1.0);
    }
}

#[test]
fn large_input_uses_iterative_solver_and_still_separates() {
    let (pts, truth) = blobs(700, 3, 10.0, 5);
    let pred = spectral_clustering(&pts, 2, 1).unwrap();
    assert_eq!(clustering_metrics(&pred, &truth).unwrap().accuracy, 1.0);
}

#[test]
fn lanczos_agrees_with_dense() {
    let (pts, _) = blobs(120, 3, 3.0, 6);
    let w = build_affinity(&pts).unwrap();
    let d: Vec<f64> = w.row_iter().map(|r| r.sum().sqrt().recip()).collect();
    let a = Matrix::from_fn(120, 120, |i, j| d[i] * w[(i, j)] * d[j]);
    let (ld, vd) = top_eigenpairs_dense(&a, 3).unwrap();
    let (ll, vl) = top_eigenpairs_lanczos(&a, 3, 0).unwrap();
    for k in 0..3 {
        assert!((ld[k] - ll[k]).abs() < 1e-9);
        let dot = vd.column(k).dot(&vl.column(k)).abs();
        assert!((dot - 1.0).abs() < 1e-7);
    }
    assert!((ld[0] - 1.0).abs() < 1e-12);
}

#[test]
fn duplicated_points_share_a_cluster() {
    let (base, _) = blobs(40, 2, 2.0, 7);
    let twice = Matrix::from_fn(80, 2, |i, c| base[(i / 2, c)]);
    let pred = spectral_clustering(&twice, 2, 3).unwrap();
    for i in 0..40 {
        assert_eq!(pred[2 * i], pred[2 * i + 1]);
    }
}

#[test]
fn kmeans_on_two_points_per_cluster() {
    let data = Matrix::from_row_slice(4, 1, &[0.0, 0.1, 5.0, 5.1]);
    let r = kmeans(&data, 2, 5, 100, 0).unwrap();
    assert_eq!(r.labels[0], r.labels[1]);
    assert_eq!(r.labels[2], r.labels[3]);
    assert_ne!(r.labels[0], r.labels[2]);
    assert!((r.inertia - 0.01).abs() < 1e-12);
}

#[test]
fn embedding_rows_are_unit_norm() {
    let (pts, _) = blobs(30, 2, 3.0, 8);
    let e = spectral_embedding(&build_affinity(&pts).unwrap(), 2, 0).unwrap();
    for r in 0..e.nrows() {
        assert!((e.row(r).norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn clustering_is_deterministic() {
    let (pts, _) = blobs(60, 3, 1.0, 9);
    assert_eq!(spectral_clustering(&pts, 2, 4).unwrap(), spectral_clustering(&pts, 2, 4).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn chosen_bipartition_attains_minimum_ncut(seed in any::<u64>(), m in 4usize..=8) {
        let pts = grouped(m, seed);
        let w = build_affinity(&pts).unwrap();
        let pred = spectral_clustering(&pts, 2, seed).unwrap();
        let got = normalized_cut(&w, &pred).unwrap();
        prop_assert!((got - ncut(&w, &pred)).abs() < 1e-12);
        prop_assert!((got - ncut_brute_force(&w)).abs() < 1e-9, "got {} best {}", got, ncut_brute_force(&w));
    }

    #[test]
    fn metrics_invariant_under_label_swap(labels in proptest::collection::vec(0usize..2, 4..40), seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut truth = labels.clone();
        truth[0] = 0;
        truth[1] = 1;
        let pred: Vec<usize> = (0..truth.len()).map(|_| r.random_range(0..2)).collect();
        let swapped: Vec<usize> = pred.iter().map(|p| 1 - p).collect();
        prop_assert_eq!(clustering_metrics(&pred, &truth).unwrap(), clustering_metrics(&swapped, &truth).unwrap());
    }
}
