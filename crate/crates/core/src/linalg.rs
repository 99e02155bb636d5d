//! Dense symmetric factorizations and triangular products for Gaussian
//! sampling.
//!
//! Covariance matrices here are dense, symmetric positive definite, and can
//! reach dimension ~10^4, so the factorization is blocked and leans on the
//! matrix-multiply kernel for the trailing updates. A separate unblocked
//! routine serves the small conditional systems where bit-stable leading
//! principal factors matter more than speed.

use crate::error::{Error, Result};
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2};

/// Block size for the right-looking factorization and triangular products.
const BLOCK: usize = 128;

/// Relative jitter ladder tried on factorization failure, scaled by the mean
/// diagonal entry. Ladder values are far below any covariance scale of
/// interest and far above unit roundoff accumulated over ~10^4 columns.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Lower Cholesky factor together with the diagonal jitter that produced it.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: Array2<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn l(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// Absolute diagonal shift that was added before factoring (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn into_l(self) -> Array2<f64> {
        self.l
    }
}

fn check_square(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what} needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Unblocked row-oriented lower Cholesky.
///
/// Inner sums run over ascending indices, so the factor of a leading principal
/// submatrix is bit-identical to the leading block of the full factor. The
/// conditional samplers rely on that to couple coarse and fine anchors.
pub fn unblocked_cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    check_square(a, "cholesky")?;
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Factorization {
                        pivot_index: i,
                        pivot_value: sum,
                        jitter: 0.0,
                        diag_ratio: sum / a[(i, i)].abs().max(f64::MIN_POSITIVE),
                    });
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// In-place factorization of the small diagonal block `a[s..e, s..e]`.
fn factor_diag_block(a: &mut Array2<f64>, start: usize, end: usize, jitter: f64) -> Result<()> {
    for i in start..end {
        for j in start..=i {
            let mut sum = a[(i, j)];
            if i == j {
                sum += jitter;
            }
            for k in start..j {
                sum -= a[(i, k)] * a[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Factorization {
                        pivot_index: i,
                        pivot_value: sum,
                        jitter,
                        diag_ratio: sum / (a[(i, i)].abs() + jitter).max(f64::MIN_POSITIVE),
                    });
                }
                a[(i, i)] = sum.sqrt();
            } else {
                a[(i, j)] = sum / a[(j, j)];
            }
        }
    }
    Ok(())
}

/// Blocked right-looking lower Cholesky of `a` with a fixed diagonal shift.
/// On success the lower triangle of `a` holds L and the strict upper triangle
/// is zeroed.
fn blocked_cholesky_in_place(a: &mut Array2<f64>, jitter: f64) -> Result<()> {
    let n = a.nrows();
    let mut kb = 0;
    while kb < n {
        let ke = (kb + BLOCK).min(n);
        factor_diag_block(a, kb, ke, jitter)?;
        if ke < n {
            // Diagonal block copy releases the borrow for the panel solve.
            let diag = a.slice(s![kb..ke, kb..ke]).to_owned();
            {
                let mut panel = a.slice_mut(s![ke..n, kb..ke]);
                for mut row in panel.rows_mut() {
                    for j in 0..(ke - kb) {
                        let mut sum = row[j];
                        for k in 0..j {
                            sum -= row[k] * diag[(j, k)];
                        }
                        row[j] = sum / diag[(j, j)];
                    }
                }
            }
            // Trailing update reads a panel copy so the target blocks can be
            // borrowed mutably one at a time.
            let panel = a.slice(s![ke..n, kb..ke]).to_owned();
            let mut jb = ke;
            while jb < n {
                let je = (jb + BLOCK).min(n);
                let mut ib = jb;
                while ib < n {
                    let ie = (ib + BLOCK).min(n);
                    let left = panel.slice(s![ib - ke..ie - ke, ..]);
                    let right = panel.slice(s![jb - ke..je - ke, ..]);
                    let mut target = a.slice_mut(s![ib..ie, jb..je]);
                    general_mat_mul(-1.0, &left, &right.t(), 1.0, &mut target);
                    ib = ie;
                }
                jb = je;
            }
        }
        kb = ke;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Lower Cholesky factorization with a diagonal jitter ladder.
///
/// Covariance matrices assembled from quadrature can carry eigenvalues a few
/// ulps below zero; the ladder retries with growing diagonal shifts (relative
/// to the mean diagonal) and reports the shift that succeeded. A matrix that
/// is indefinite beyond the last rung is rejected with the failing pivot.
pub fn cholesky(a: &Array2<f64>) -> Result<CholeskyFactor> {
    check_square(a, "cholesky")?;
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Dimension("cholesky needs a nonempty matrix".into()));
    }
    let mean_diag = a.diag().iter().map(|d| d.abs()).sum::<f64>() / n as f64;
    let mut last = None;
    for &rel in &JITTER_LADDER {
        let jitter = rel * mean_diag;
        let mut work = a.clone();
        match blocked_cholesky_in_place(&mut work, jitter) {
            Ok(()) => {
                return Ok(CholeskyFactor { l: work, jitter });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("ladder is nonempty"))
}

/// Batched triangular product `Z L^T`: row p of `z` holds a standard normal
/// vector and row p of the result holds the correlated sample `L z_p`.
///
/// Blocked so the strictly-lower structure of `L` skips the zero half of the
/// multiply; panels go through the matrix-multiply kernel.
pub fn tri_mul_batch(l: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Dimension(format!(
            "triangular factor must be square, got {}x{}",
            n,
            l.ncols()
        )));
    }
    if z.ncols() != n {
        return Err(Error::Dimension(format!(
            "draw matrix has {} columns, factor has dimension {n}",
            z.ncols()
        )));
    }
    let m = z.nrows();
    let mut out = Array2::<f64>::zeros((m, n));
    let mut jb = 0;
    while jb < n {
        let je = (jb + BLOCK).min(n);
        let mut kb = 0;
        while kb <= jb {
            let ke = (kb + BLOCK).min(n);
            let zb = z.slice(s![.., kb..ke]);
            let lb = l.slice(s![jb..je, kb..ke]);
            let mut ob = out.slice_mut(s![.., jb..je]);
            general_mat_mul(1.0, &zb, &lb.t(), 1.0, &mut ob);
            kb = ke;
        }
        jb = je;
    }
    Ok(out)
}

/// Prefix of the triangular product for one draw vector: returns
/// (L z)[0..len] using ascending-index dot products, so the result for a
/// shorter prefix is bit-identical to the head of a longer one.
pub fn tri_mul_prefix(l: ArrayView2<'_, f64>, z: &[f64], len: usize) -> Result<Vec<f64>> {
    let n = l.nrows();
    if l.ncols() != n || z.len() < len || len > n {
        return Err(Error::Dimension(format!(
            "prefix product needs len <= dim, got len {len}, dim {n}, draws {}",
            z.len()
        )));
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let mut sum = 0.0;
        for k in 0..=i {
            sum += l[(i, k)] * z[k];
        }
        out.push(sum);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array1;

    /// Deterministic well-conditioned SPD test matrix.
    fn spd(n: usize) -> Array2<f64> {
        let b = Array2::from_shape_fn((n, n), |(i, j)| {
            ((i * 31 + j * 17 + 3) % 23) as f64 / 23.0 - 0.4
        });
        let mut a = b.t().dot(&b);
        for i in 0..n {
            a[(i, i)] += n as f64;
        }
        a
    }

    #[test]
    fn factor_reconstructs_matrix() {
        for &n in &[1usize, 5, 64, 129, 300] {
            let a = spd(n);
            let f = cholesky(&a).unwrap();
            assert_eq!(f.jitter(), 0.0);
            let back = f.l().dot(&f.l().t());
            let scale = a.diag().iter().fold(0.0f64, |m, d| m.max(*d));
            for ((i, j), v) in back.indexed_iter() {
                assert!(
                    (v - a[(i, j)]).abs() <= 1e-12 * scale,
                    "({i},{j}): {v} vs {}",
                    a[(i, j)]
                );
            }
        }
    }

    #[test]
    fn blocked_agrees_with_unblocked() {
        let a = spd(200);
        let blocked = cholesky(&a).unwrap();
        let plain = unblocked_cholesky(&a).unwrap();
        for ((i, j), v) in plain.indexed_iter() {
            assert_relative_eq!(*v, blocked.l()[(i, j)], epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn unblocked_prefixes_are_bit_stable() {
        let a = spd(40);
        let full = unblocked_cholesky(&a).unwrap();
        for &k in &[1usize, 7, 23, 40] {
            let head = unblocked_cholesky(&a.slice(s![..k, ..k]).to_owned()).unwrap();
            for i in 0..k {
                for j in 0..k {
                    assert_eq!(
                        head[(i, j)].to_bits(),
                        full[(i, j)].to_bits(),
                        "prefix {k} differs at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn jitter_ladder_rescues_semidefinite_matrix() {
        // Rank-one Gram matrix: exactly singular, so the strict factorization
        // fails and a positive rung must be reported.
        let v = Array1::from_shape_fn(30, |i| 1.0 + (i as f64) * 0.1);
        let col = v.clone().insert_axis(ndarray::Axis(1));
        let a = col.dot(&col.t());
        let f = cholesky(&a).unwrap();
        assert!(f.jitter() > 0.0);
        let back = f.l().dot(&f.l().t());
        let scale = a.diag().iter().fold(0.0f64, |m, d| m.max(*d));
        for ((i, j), v) in back.indexed_iter() {
            assert!((v - a[(i, j)]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected_with_pivot() {
        let mut a = Array2::<f64>::eye(6);
        a[(4, 4)] = -3.0;
        match cholesky(&a) {
            Err(Error::Factorization {
                pivot_index,
                pivot_value,
                ..
            }) => {
                assert_eq!(pivot_index, 4);
                assert!(pivot_value < 0.0);
            }
            other => panic!("expected factorization failure, got {other:?}"),
        }
    }

    #[test]
    fn tri_mul_matches_naive_product() {
        let a = spd(150);
        let l = cholesky(&a).unwrap().into_l();
        let z = Array2::from_shape_fn((7, 150), |(p, k)| ((p * 131 + k * 7 + 1) % 19) as f64 - 9.0);
        let fast = tri_mul_batch(l.view(), z.view()).unwrap();
        for p in 0..z.nrows() {
            for i in 0..150 {
                let mut want = 0.0;
                for k in 0..=i {
                    want += l[(i, k)] * z[(p, k)];
                }
                assert_relative_eq!(fast[(p, i)], want, epsilon = 1e-9, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn prefix_product_matches_head_of_longer_run() {
        let a = spd(25);
        let l = unblocked_cholesky(&a).unwrap();
        let z: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let long = tri_mul_prefix(l.view(), &z, 25).unwrap();
        let short = tri_mul_prefix(l.view(), &z, 9).unwrap();
        for i in 0..9 {
            assert_eq!(short[i].to_bits(), long[i].to_bits());
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let a = spd(4);
        let z = Array2::<f64>::zeros((2, 5));
        let l = cholesky(&a).unwrap().into_l();
        assert!(tri_mul_batch(l.view(), z.view()).is_err());
        assert!(tri_mul_prefix(l.view(), &[0.0; 2], 3).is_err());
        assert!(cholesky(&Array2::<f64>::zeros((2, 3))).is_err());
    }
}
