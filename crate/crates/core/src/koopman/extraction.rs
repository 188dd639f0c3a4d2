//! Selection matrices mapping the stacked coefficient vector `Γ` to the block
//! matrices `Γ_j` and `B`.
//!
//! `Γ` stacks `λ_{ij}` with `(i, j) ↦ (i−1)·N_F + j` (1-based), where `i`
//! ranges over the `n + m` coordinates of `χ` and `j` over the `N_F = nM + m`
//! basis entries. Only the first `n·N_F` entries (state rows) are extracted;
//! the input-derivative rows are discarded.

use crate::matlib::{vec_inverse, LinalgError, Mat};
use crate::scalar::Real;

/// Euclidean remainder of `p` by `q` (both positive here).
fn rem(p: usize, q: usize) -> usize {
    p % q
}

/// `E_{j'}` (`n² × (m+n)(nM+m)`), built from the three-case index rule with
/// 1-based `a`, `b` and `j'`.
pub fn extraction_e<T: Real>(jp: usize, n: usize, m: usize, blocks: usize) -> Mat<T> {
    assert!(jp >= 1 && jp <= blocks, "block index {jp} outside 1..={blocks}");
    let nf = n * blocks + m;
    let mut e = Mat::zeros(n * n, (m + n) * nf);
    for a in 1..=n * n {
        let b = if rem(a, n) != 0 {
            (a / n) * nf + (jp - 1) * n + rem(a, n)
        } else {
            (a / n - 1) * nf + jp * n
        };
        e[(a - 1, b - 1)] = T::one();
    }
    e
}

/// `B̃` (`mn × (m+n)(nM+m)`), same conventions as [`extraction_e`].
pub fn extraction_btilde<T: Real>(n: usize, m: usize, blocks: usize) -> Mat<T> {
    let nf = n * blocks + m;
    let mut bt = Mat::zeros(m * n, (m + n) * nf);
    for c in 1..=m * n {
        let d = if rem(c, m) != 0 {
            (c / m) * nf + n * blocks + rem(c, m)
        } else {
            (c / m) * nf
        };
        bt[(c - 1, d - 1)] = T::one();
    }
    bt
}

/// `Γ_{j'} = (vec⁻¹_{n×n}(E_{j'}Γ))ᵀ` and `B = (vec⁻¹_{m×n}(B̃Γ))ᵀ`.
pub fn extract_uniform<T: Real>(
    gamma: &[T],
    n: usize,
    m: usize,
    blocks: usize,
) -> Result<(Vec<Mat<T>>, Mat<T>), LinalgError> {
    let expected = (n + m) * (n * blocks + m);
    if gamma.len() != expected {
        return Err(LinalgError::Dimension(format!(
            "coefficient vector has length {}, expected (n+m)(nM+m) = {expected}",
            gamma.len()
        )));
    }
    let g = Mat::column_vector(gamma);
    let gammas = (1..=blocks)
        .map(|jp| {
            let sel = extraction_e::<T>(jp, n, m, blocks).matmul(&g)?;
            Ok(vec_inverse(sel.as_slice(), n, n)?.transpose())
        })
        .collect::<Result<Vec<_>, LinalgError>>()?;
    let sel = extraction_btilde::<T>(n, m, blocks).matmul(&g)?;
    let b = vec_inverse(sel.as_slice(), m, n)?.transpose();
    Ok((gammas, b))
}

/// Direct layout for blocks of arbitrary sizes `k_j`:
/// `Γ_j[i][c] = λ_{i, off_j + c}` and `B[i][k] = λ_{i, Σk + k}`.
pub fn extract_blocks<T: Real>(
    gamma: &[T],
    n: usize,
    m: usize,
    sizes: &[usize],
) -> Result<(Vec<Mat<T>>, Mat<T>), LinalgError> {
    let total: usize = sizes.iter().sum();
    let nf = total + m;
    if gamma.len() != (n + m) * nf {
        return Err(LinalgError::Dimension(format!(
            "coefficient vector has length {}, expected {}",
            gamma.len(),
            (n + m) * nf
        )));
    }
    let lambda = |i: usize, j: usize| gamma[i * nf + j];
    let mut off = 0;
    let gammas = sizes
        .iter()
        .map(|&k| {
            let g = Mat::from_fn(n, k, |i, c| lambda(i, off + c));
            off += k;
            g
        })
        .collect();
    let b = Mat::from_fn(n, m, |i, k| lambda(i, total + k));
    Ok((gammas, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case_selects_first_two_positions() {
        let e = extraction_e::<f64>(1, 1, 1, 1);
        assert_eq!(e.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let b = extraction_btilde::<f64>(1, 1, 1);
        assert_eq!(b.row(0), vec![0.0, 1.0, 0.0, 0.0]);
        let (g, bb) = extract_uniform(&[2.0, 3.0, 4.0, 5.0], 1, 1, 1).unwrap();
        assert_eq!(g[0].as_slice(), &[2.0]);
        assert_eq!(bb.as_slice(), &[3.0]);
    }

    #[test]
    fn two_state_selection_positions() {
        let e = extraction_e::<f64>(1, 2, 1, 1);
        let picked: Vec<usize> = (0..4)
            .map(|a| (0..e.cols()).find(|&b| e[(a, b)] == 1.0).unwrap() + 1)
            .collect();
        assert_eq!(picked, vec![1, 2, 4, 5]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(extract_uniform(&[1.0, 2.0], 1, 1, 1).is_err());
        assert!(extract_blocks(&[1.0, 2.0], 1, 1, &[1]).is_err());
    }
}
