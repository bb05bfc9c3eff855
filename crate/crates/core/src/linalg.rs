//! Dense complex linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::{cis, lit, HrisError, Real, Result};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Unnormalized `n x n` DFT matrix, `F[r, c] = exp(-j 2pi r c / n)`.
pub fn dft_matrix<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::from_fn(n, n, |r, c| dft_entry(n, r, c))
}

/// Single DFT entry with the exponent reduced modulo `n` before scaling.
#[inline]
pub fn dft_entry<T: Real>(n: usize, r: usize, c: usize) -> Complex<T> {
    let k = ((r % n) * (c % n)) % n;
    cis(-T::two_pi() * lit::<T>(k as f64) / lit::<T>(n as f64))
}

/// Singular values in non-increasing order.
pub fn singular_values<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<T> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

fn rank_tolerance<T: Real>(rows: usize, cols: usize, sigma_max: T) -> T {
    lit::<T>(rows.max(cols) as f64) * T::default_epsilon() * sigma_max
}

/// Numerical rank with the usual `max(m, n) * eps * sigma_max` threshold.
pub fn numerical_rank<T: Real>(m: &CMatrix<T>) -> usize {
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else { return 0 };
    if smax <= T::zero() {
        return 0;
    }
    let tol = rank_tolerance(m.nrows(), m.ncols(), smax);
    sv.iter().filter(|&&s| s > tol).count()
}

/// 2-norm condition number; infinite for rank-deficient input.
pub fn condition_number<T: Real>(m: &CMatrix<T>) -> T {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > T::zero() && sv.len() == m.ncols().min(m.nrows()) => hi / lo,
        _ => T::max_value().unwrap_or_else(T::one),
    }
}

/// Rank shortfall of a least-squares operator, reported by [`least_squares`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficiency {
    pub rank: usize,
    pub required: usize,
}

/// Solves `min_X ||A X - B||_F` for full-column-rank `A`.
///
/// The solve goes through the SVD of `A`, which yields the normal-equation
/// solution `(A^H A)^{-1} A^H B` without squaring the condition number.
pub fn least_squares<T: Real>(
    a: &CMatrix<T>,
    b: &CMatrix<T>,
) -> std::result::Result<CMatrix<T>, RankDeficiency> {
    assert_eq!(a.nrows(), b.nrows(), "least_squares: row mismatch");
    let required = a.ncols();
    if a.nrows() < required {
        return Err(RankDeficiency {
            rank: numerical_rank(a),
            required,
        });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    let tol = rank_tolerance(a.nrows(), a.ncols(), smax);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if smax <= T::zero() || rank < required {
        return Err(RankDeficiency { rank, required });
    }
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut ub = u.adjoint() * b;
    for (i, mut row) in ub.row_iter_mut().enumerate() {
        let inv = Complex::new(T::one() / svd.singular_values[i], T::zero());
        row *= inv;
    }
    Ok(v_t.adjoint() * ub)
}

/// Reduced pseudo-inverse `(A^H A)^{-1} A^H` of a full-column-rank matrix.
pub fn left_pseudo_inverse<T: Real>(
    a: &CMatrix<T>,
) -> std::result::Result<CMatrix<T>, RankDeficiency> {
    least_squares(a, &CMatrix::identity(a.nrows(), a.nrows()))
}

/// Squared Frobenius norm.
pub fn frob_sq<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// `||est - truth||_F^2 / ||truth||_F^2`.
pub fn nmse<T: Real>(est: &CMatrix<T>, truth: &CMatrix<T>) -> T {
    assert_eq!(est.shape(), truth.shape(), "nmse: shape mismatch");
    frob_sq(&(est - truth)) / frob_sq(truth)
}

/// `||est - truth||_F / ||truth||_F`.
pub fn relative_error<T: Real>(est: &CMatrix<T>, truth: &CMatrix<T>) -> T {
    nmse(est, truth).sqrt()
}

/// Linear to decibels, `10 log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HrisError::dim(context, expected, got))
    }
}

pub(crate) fn check_shape(
    context: &'static str,
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HrisError::dim(
            context,
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", got.0, got.1),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn dft_is_unitary_up_to_scale() {
        let f = dft_matrix::<f64>(16);
        let g = f.adjoint() * &f;
        for r in 0..16 {
            for col in 0..16 {
                let want = if r == col { 16.0 } else { 0.0 };
                assert!((g[(r, col)] - c(want, 0.0)).norm() < 1e-10);
            }
        }
        assert_relative_eq!(condition_number(&f), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn least_squares_matches_hand_solved_normal_equations() {
        // A = [[1, 0], [0, 1], [1, 1]], b = [1, 2, 4]
        // A^H A = [[2, 1], [1, 2]], A^H b = [5, 6] -> x = [4/3, 7/3]
        let a = CMatrix::from_row_slice(
            3,
            2,
            &[
                c(1., 0.),
                c(0., 0.),
                c(0., 0.),
                c(1., 0.),
                c(1., 0.),
                c(1., 0.),
            ],
        );
        let b = CMatrix::from_row_slice(3, 1, &[c(1., 0.), c(2., 0.), c(4., 0.)]);
        let x = least_squares(&a, &b).unwrap();
        assert!((x[(0, 0)] - c(4. / 3., 0.)).norm() < 1e-12);
        assert!((x[(1, 0)] - c(7. / 3., 0.)).norm() < 1e-12);
    }

    #[test]
    fn least_squares_reports_rank() {
        let a = CMatrix::from_row_slice(
            3,
            2,
            &[
                c(1., 0.),
                c(2., 0.),
                c(2., 0.),
                c(4., 0.),
                c(3., 1.),
                c(6., 2.),
            ],
        );
        let b = CMatrix::zeros(3, 1);
        assert_eq!(
            least_squares(&a, &b).unwrap_err(),
            RankDeficiency {
                rank: 1,
                required: 2
            }
        );
        let wide = CMatrix::<f64>::from_element(2, 3, c(1., 0.));
        assert_eq!(
            least_squares(&wide, &CMatrix::zeros(2, 1))
                .unwrap_err()
                .required,
            3
        );
        let zero = CMatrix::<f64>::zeros(4, 2);
        assert_eq!(
            least_squares(&zero, &CMatrix::zeros(4, 1))
                .unwrap_err()
                .rank,
            0
        );
    }

    #[test]
    fn rank_of_truncated_dft() {
        let f = dft_matrix::<f64>(8);
        assert_eq!(numerical_rank(&f.rows(0, 5).into_owned()), 5);
        assert_eq!(numerical_rank(&f), 8);
    }
}
