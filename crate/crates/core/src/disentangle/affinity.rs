use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Symmetric `M × M` matrix of squared Euclidean distances between rows.
pub fn pairwise_sq_distances(points: &Matrix) -> Matrix {
    let m = points.nrows();
    let t = points.transpose();
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        let xi = t.column(i);
        for j in (i + 1)..m {
            let d = (xi - t.column(j)).norm_squared();
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// Median over the `M (M − 1) / 2` distinct pairs (mean of the two middle
/// values when the count is even).
pub fn median_pairwise_distance(sq: &Matrix) -> f64 {
    let m = sq.nrows();
    let mut d: Vec<f64> = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            d.push(sq[(i, j)].sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let n = d.len();
    let mid = n / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Gaussian affinity `exp(−‖x_i − x_j‖² / 2σ²)` with `σ` the median pairwise
/// distance and a zero diagonal.
pub fn build_affinity(points: &Matrix) -> Result<Matrix> {
    if points.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "affinity needs at least 2 points, got {}",
            points.nrows()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering points"));
    }
    let sq = pairwise_sq_distances(points);
    let sigma = median_pairwise_distance(&sq);
    if !(sigma > 0.0) {
        return Err(Error::Degenerate(
            "median pairwise distance is zero; points are (mostly) identical".into(),
        ));
    }
    let denom = 2.0 * sigma * sigma;
    let m = points.nrows();
    Ok(Matrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { (-sq[(i, j)] / denom).exp() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_count() {
        let p = Matrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        let sq = pairwise_sq_distances(&p);
        assert_eq!(median_pairwise_distance(&sq), 2.0);
        let p = Matrix::from_row_slice(4, 1, &[0.0, 1.0, 3.0, 7.0]);
        // distances 1, 3, 7, 2, 6, 4
        assert_eq!(median_pairwise_distance(&pairwise_sq_distances(&p)), 3.5);
    }

    #[test]
    fn identical_points_are_degenerate() {
        assert!(build_affinity(&Matrix::from_element(5, 2, 1.0)).is_err());
        assert!(build_affinity(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn duplicate_pair_has_unit_affinity() {
        let p = Matrix::from_row_slice(4, 1, &[0.0, 0.0, 2.0, 5.0]);
        let w = build_affinity(&p).unwrap();
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(0, 0)], 0.0);
        assert_eq!(w, w.transpose());
    }
}
