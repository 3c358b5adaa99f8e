use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, to_row_major, Matrix};

/// k-means++ seeding over the rows of `data`, returning row indices.
///
/// The first index is uniform; each later one is drawn with probability
/// proportional to the squared distance to the nearest chosen row. If every
/// remaining row coincides with a chosen one the draw falls back to uniform
/// over unchosen rows, so the `k` indices are always distinct.
pub fn kmeans_pp_indices<R: Rng>(data: &Matrix, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let m = data.nrows();
    let d = data.ncols();
    if k == 0 {
        return Err(Error::InvalidConfig("k-means++ needs k >= 1".into()));
    }
    if d == 0 {
        return Err(Error::InvalidConfig("k-means++ needs d >= 1".into()));
    }
    if m < k {
        return Err(Error::InsufficientData(format!(
            "k-means++ needs at least {k} rows, got {m}"
        )));
    }
    let rows = to_row_major(data);
    let row = |i: usize| &rows[i * d..(i + 1) * d];

    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; m];
    let first = rng.random_range(0..m);
    chosen.push(first);
    taken[first] = true;
    let mut nearest: Vec<f64> = (0..m).map(|i| squared_distance(row(i), row(first))).collect();
    nearest[first] = 0.0;

    while chosen.len() < k {
        let total: f64 = nearest
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(v, _)| v)
            .sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = None;
            for i in 0..m {
                if taken[i] || nearest[i] <= 0.0 {
                    continue;
                }
                acc += nearest[i];
                last_positive = Some(i);
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the final partial sum
            pick.or(last_positive).expect("positive mass implies a candidate")
        } else {
            let free: Vec<usize> = (0..m).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        taken[pick] = true;
        for i in 0..m {
            let dist = squared_distance(row(i), row(pick));
            if dist < nearest[i] {
                nearest[i] = dist;
            }
        }
        nearest[pick] = 0.0;
    }
    Ok(chosen)
}

/// k-means++ seeding; returns the `k × d` matrix of chosen rows.
pub fn kmeans_pp_init(data: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = kmeans_pp_indices(data, k, &mut rng)?;
    Ok(Matrix::from_fn(k, data.ncols(), |r, c| data[(idx[r], c)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhausting_the_data_returns_every_row() {
        let data = Matrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = kmeans_pp_indices(&data, 4, &mut rng).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_center_is_a_data_row() {
        let data = Matrix::from_row_slice(3, 1, &[1.5, -2.0, 7.0]);
        let c = kmeans_pp_init(&data, 1, 11).unwrap();
        assert!([1.5, -2.0, 7.0].contains(&c[(0, 0)]));
    }

    #[test]
    fn duplicate_rows_still_give_distinct_indices() {
        let data = Matrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = kmeans_pp_indices(&data, 3, &mut rng).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let data = Matrix::zeros(2, 3);
        assert!(matches!(
            kmeans_pp_init(&data, 3, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let data = Matrix::from_fn(30, 3, |r, c| ((r * 7 + c * 3) % 11) as f64);
        assert_eq!(
            kmeans_pp_init(&data, 5, 9).unwrap(),
            kmeans_pp_init(&data, 5, 9).unwrap()
        );
    }
}
