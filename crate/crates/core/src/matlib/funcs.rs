//! Matrix functions (exponential, principal logarithm, square root) and the
//! Kronecker/vectorization toolkit.
//!
//! `vec` is column-major: `vec(A)` stacks the columns of `A`. The inverse
//! `vec⁻¹_{m×n}` is exposed both as a reshape and as the explicit Kronecker
//! product formula `(vec(I_n)ᵀ ⊗ I_m)(I_n ⊗ ℓ)`, and the two agree exactly.

use crate::matlib::decomp::{eigenvalues, Lu};
use crate::matlib::{LinalgError, Mat};
use crate::scalar::Real;

/// Tolerances governing [`matrix_log`].
#[derive(Clone, Copy, Debug)]
pub struct LogOptions {
    /// Eigenvalues with modulus below this are treated as zero.
    pub zero_eig_tol: f64,
    /// Eigenvalues with `|Im λ|` below this and `Re λ < 0` lie on the cut.
    pub branch_cut_tol: f64,
    /// Relative reconstruction residual `‖exp(log A) − A‖_F / ‖A‖_F` above
    /// which the result is rejected as not a real logarithm.
    pub residue_tol: f64,
}

impl Default for LogOptions {
    fn default() -> Self {
        LogOptions {
            zero_eig_tol: 1e-12,
            branch_cut_tol: 1e-12,
            residue_tol: 1e-9,
        }
    }
}

// Padé (13/13) coefficients for the exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a (13/13) Padé
/// approximant.
pub fn matrix_exp<T: Real>(a: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = a.norm_one();
    let theta13 = T::lit(5.371920351148152);
    let mut s = 0i32;
    if norm > theta13 {
        s = (norm / theta13).log2().ceil().to_i32().unwrap_or(0).max(0);
    }
    let scaled = a.scale(T::lit(2f64.powi(-s)));
    let b: Vec<T> = PADE13.iter().map(|&c| T::lit(c)).collect();
    let id = Mat::identity(n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |coefs: [usize; 4]| {
        let mut m = a6.scale(b[coefs[0]]);
        m.axpy(b[coefs[1]], &a4);
        m.axpy(b[coefs[2]], &a2);
        m.axpy(b[coefs[3]], &id);
        m
    };
    let mut u_inner = a6.scale(b[13]);
    u_inner.axpy(b[11], &a4);
    u_inner.axpy(b[9], &a2);
    let mut u = &a6 * &u_inner;
    u = &u + &lin([7, 5, 3, 1]);
    let u = &scaled * &u;
    let mut v_inner = a6.scale(b[12]);
    v_inner.axpy(b[10], &a4);
    v_inner.axpy(b[8], &a2);
    let v = &(&a6 * &v_inner) + &lin([6, 4, 2, 0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = Lu::new(&q)?.solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Principal square root by the Denman–Beavers iteration. Requires no
/// eigenvalues on the closed negative real axis.
pub fn matrix_sqrt<T: Real>(a: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    let mut y = a.clone();
    let mut z = Mat::identity(n);
    let half = T::lit(0.5);
    let tol = T::epsilon() * T::lit(10.0) * T::from_count(n.max(1));
    for _ in 0..100 {
        let y_inv = Lu::new(&y)?.inverse();
        let z_inv = Lu::new(&z)?.inverse();
        let y_next = (&y + &z_inv).scale(half);
        let z_next = (&z + &y_inv).scale(half);
        let delta = (&y_next - &y).norm_fro() / y_next.norm_fro().max(T::min_positive_value());
        y = y_next;
        z = z_next;
        if delta <= tol {
            return Ok(y);
        }
    }
    Err(LinalgError::DecompositionFailed("Denman-Beavers square root"))
}

/// Principal matrix logarithm with default tolerances.
pub fn matrix_log<T: Real>(a: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    matrix_log_with(a, &LogOptions::default())
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// The spectrum is screened first: an eigenvalue of (near) zero modulus or
/// on the closed negative real axis has no real principal logarithm. Square
/// roots are then taken until `‖A − I‖₁ ≤ 1/4`, the logarithm of the
/// remainder is summed from the `atanh` series of `(A − I)(A + I)⁻¹`, and the
/// result is scaled back by `2^k`.
pub fn matrix_log_with<T: Real>(a: &Mat<T>, opts: &LogOptions) -> Result<Mat<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    for (re, im) in eigenvalues(a)? {
        let (re, im) = (re.as_f64(), im.as_f64());
        if re.hypot(im) < opts.zero_eig_tol || (im.abs() < opts.branch_cut_tol && re < 0.0) {
            return Err(LinalgError::LogUndefined { re, im });
        }
    }
    let id = Mat::identity(n);
    let mut x = a.clone();
    let mut k = 0i32;
    while (&x - &id).norm_one() > T::lit(0.25) {
        if k >= 64 {
            return Err(LinalgError::DecompositionFailed("inverse scaling and squaring"));
        }
        x = matrix_sqrt(&x)?;
        k += 1;
    }
    let num = &x - &id;
    let den = &x + &id;
    // Z = (X - I)(X + I)^{-1}; X - I and X + I commute
    let z = Lu::new(&den.transpose())?.solve(&num.transpose()).transpose();
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut acc = z.clone();
    let tol = T::epsilon() * T::lit(0.1);
    for j in 1..200 {
        term = &term * &z2;
        let coef = T::one() / T::from_count(2 * j + 1);
        acc.axpy(coef, &term);
        if term.norm_one() * coef <= tol * acc.norm_one().max(T::min_positive_value()) {
            break;
        }
    }
    let log = acc.scale(T::lit(2.0 * 2f64.powi(k)));
    let recon = matrix_exp(&log)?;
    let residue = ((&recon - a).norm_fro() / a.norm_fro()).as_f64();
    if !residue.is_finite() || residue > opts.residue_tol {
        return Err(LinalgError::LogNotReal { residue });
    }
    Ok(log)
}

/// Kronecker product, `(mp) × (nq)`.
pub fn kron<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (p, q) = b.shape();
    Mat::from_fn(a.rows() * p, a.cols() * q, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)])
}

/// Column-major vectorization.
pub fn vec<T: Real>(a: &Mat<T>) -> Vec<T> {
    a.as_slice().to_vec()
}

/// Inverse vectorization by reshaping: the `m × n` matrix whose
/// column-major vectorization is `l`.
pub fn vec_inverse<T: Real>(l: &[T], m: usize, n: usize) -> Result<Mat<T>, LinalgError> {
    if l.len() != m * n {
        return Err(LinalgError::Dimension(format!(
            "vector of length {} cannot be reshaped to {m}x{n}",
            l.len()
        )));
    }
    Ok(Mat::from_fn(m, n, |i, j| l[j * m + i]))
}

/// Inverse vectorization through the Kronecker identity
/// `vec⁻¹_{m×n}(ℓ) = (vec(I_n)ᵀ ⊗ I_m)(I_n ⊗ ℓ)`.
pub fn vec_inverse_kron<T: Real>(l: &[T], m: usize, n: usize) -> Result<Mat<T>, LinalgError> {
    if l.len() != m * n {
        return Err(LinalgError::Dimension(format!(
            "vector of length {} cannot be reshaped to {m}x{n}",
            l.len()
        )));
    }
    let vec_in = Mat::row_vector(&vec(&Mat::<T>::identity(n)));
    let left = kron(&vec_in, &Mat::identity(m));
    let right = kron(&Mat::identity(n), &Mat::column_vector(l));
    left.matmul(&right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn m(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_row_slices(rows)
    }

    #[test]
    fn exp_closed_forms() {
        assert!(matrix_exp(&Mat::<f64>::zeros(2, 2)).unwrap().approx_eq(&Mat::identity(2), 0.0));
        let d = matrix_exp(&m(&[&[1.0, 0.0], &[0.0, -1.0]])).unwrap();
        assert!(d.approx_eq(&m(&[&[E, 0.0], &[0.0, 1.0 / E]]), 1e-14));
        let nil = matrix_exp(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert!(nil.approx_eq(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), 1e-15));
    }

    #[test]
    fn exp_large_norm_scaling() {
        let e = matrix_exp(&m(&[&[-10.0, 0.0], &[0.0, 3.0]])).unwrap();
        assert!(((e[(0, 0)] - (-10f64).exp()) / (-10f64).exp()).abs() < 1e-12);
        assert!(((e[(1, 1)] - 3f64.exp()) / 3f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn log_closed_forms() {
        let z = matrix_log(&Mat::<f64>::identity(2)).unwrap();
        assert!(z.approx_eq(&Mat::zeros(2, 2), 1e-15));
        let l = matrix_log(&m(&[&[E, 0.0], &[0.0, E * E]])).unwrap();
        assert!(l.approx_eq(&m(&[&[1.0, 0.0], &[0.0, 2.0]]), 1e-13));
    }

    #[test]
    fn log_of_rotation_is_real() {
        let theta: f64 = 1.2;
        let r = m(&[&[theta.cos(), -theta.sin()], &[theta.sin(), theta.cos()]]);
        let l = matrix_log(&r).unwrap();
        assert!(l.approx_eq(&m(&[&[0.0, -theta], &[theta, 0.0]]), 1e-12));
    }

    #[test]
    fn log_rejects_branch_cut_and_singular() {
        let neg = m(&[&[-0.5, 0.0], &[0.0, 1.0]]);
        assert!(matches!(matrix_log(&neg), Err(LinalgError::LogUndefined { .. })));
        let sing = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(matrix_log(&sing), Err(LinalgError::LogUndefined { .. })));
    }

    #[test]
    fn sqrt_squares_back() {
        let a = m(&[&[4.0, 1.0], &[0.0, 9.0]]);
        let s = matrix_sqrt(&a).unwrap();
        assert!((&s * &s).approx_eq(&a, 1e-12));
    }

    #[test]
    fn kron_hand_cases() {
        let k = kron(&Mat::<f64>::identity(2), &m(&[&[5.0]]));
        assert!(k.approx_eq(&m(&[&[5.0, 0.0], &[0.0, 5.0]]), 0.0));
        let k = kron(&m(&[&[1.0, 2.0]]), &m(&[&[0.0], &[1.0]]));
        assert!(k.approx_eq(&m(&[&[0.0, 0.0], &[1.0, 2.0]]), 0.0));
    }

    #[test]
    fn vec_hand_cases() {
        assert_eq!(vec(&m(&[&[1.0, 3.0], &[2.0, 4.0]])), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&m(&[&[7.0, 8.0]])), vec![7.0, 8.0]);
        let a = vec_inverse(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert!(a.approx_eq(&m(&[&[1.0, 3.0], &[2.0, 4.0]]), 0.0));
        let a = vec_inverse(&[9.0], 1, 1).unwrap();
        assert_eq!(a[(0, 0)], 9.0);
        assert!(vec_inverse(&[1.0, 2.0, 3.0], 2, 2).is_err());
        let b = vec_inverse_kron(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert!(b.approx_eq(&m(&[&[1.0, 3.0], &[2.0, 4.0]]), 0.0));
    }

    #[test]
    fn exp_in_single_precision() {
        let d = matrix_exp(&Mat::<f32>::from_row_slices(&[&[1.0, 0.0], &[0.0, -1.0]])).unwrap();
        assert!((d[(0, 0)] - std::f32::consts::E).abs() < 1e-5);
    }
}
