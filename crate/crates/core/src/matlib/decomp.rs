use crate::matlib::{LinalgError, Mat};
use crate::scalar::Real;

const JACOBI_MAX_SWEEPS: usize = 100;
const HQR_MAX_ITS: usize = 60;

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
    sign: T,
}

impl<T: Real> Lu<T> {
    pub fn new(a: &Mat<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare(a.rows(), a.cols()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        let scale = a.max_abs();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= T::epsilon() * scale * T::from_count(n) || pmax == T::zero() {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &Mat<T>) -> Mat<T> {
        let mut out = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = self.solve_vec(b.column(j));
            for (i, v) in col.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn inverse(&self) -> Mat<T> {
        self.solve(&Mat::identity(self.lu.rows()))
    }

    pub fn det(&self) -> T {
        self.lu.diagonal().into_iter().fold(self.sign, |acc, d| acc * d)
    }
}

pub fn inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    Ok(Lu::new(a)?.inverse())
}

/// Lower Cholesky factor of a symmetric positive definite matrix. Returns
/// `None` when a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: &Mat<T>) -> Option<Mat<T>> {
    if !a.is_square() {
        return None;
    }
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse<T: Real>(a: &Mat<T>) -> Option<Mat<T>> {
    let l = cholesky(a)?;
    let n = a.rows();
    // invert L by forward substitution, then A^{-1} = L^{-T} L^{-1}
    let mut linv = Mat::zeros(n, n);
    for j in 0..n {
        linv[(j, j)] = T::one() / l[(j, j)];
        for i in j + 1..n {
            let mut s = T::zero();
            for k in j..i {
                s -= l[(i, k)] * linv[(k, j)];
            }
            linv[(i, j)] = s / l[(i, i)];
        }
    }
    Some(&linv.transpose() * &linv)
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with singular values
/// sorted in descending order.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Mat<T>,
    pub singular_values: Vec<T>,
    pub v: Mat<T>,
}

impl<T: Real> Svd<T> {
    /// One-sided Jacobi (Hestenes) SVD.
    pub fn new(a: &Mat<T>) -> Result<Self, LinalgError> {
        if a.rows() < a.cols() {
            let t = Svd::new(&a.transpose())?;
            return Ok(Svd {
                u: t.v,
                singular_values: t.singular_values,
                v: t.u,
            });
        }
        let (m, n) = a.shape();
        let mut u = a.clone();
        let mut v = Mat::identity(n);
        let eps = T::epsilon();
        // columns below this squared norm are round-off and need no rotation
        let negligible = {
            let f = a.as_slice().iter().fold(T::zero(), |acc, &x| acc + x * x);
            f * eps * eps
        };
        let mut converged = n < 2;
        for _ in 0..JACOBI_MAX_SWEEPS {
            if converged {
                break;
            }
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                    for i in 0..m {
                        let (up, uq) = (u[(i, p)], u[(i, q)]);
                        alpha += up * up;
                        beta += uq * uq;
                        gamma += up * uq;
                    }
                    if gamma.abs() <= eps * (alpha * beta).sqrt()
                        || gamma == T::zero()
                        || alpha <= negligible
                        || beta <= negligible
                    {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let (up, uq) = (u[(i, p)], u[(i, q)]);
                        u[(i, p)] = c * up - s * uq;
                        u[(i, q)] = s * up + c * uq;
                    }
                    for i in 0..n {
                        let (vp, vq) = (v[(i, p)], v[(i, q)]);
                        v[(i, p)] = c * vp - s * vq;
                        v[(i, q)] = s * vp + c * vq;
                    }
                }
            }
            converged = !rotated;
        }
        if !converged {
            return Err(LinalgError::DecompositionFailed("one-sided Jacobi SVD"));
        }
        let mut sigma: Vec<T> = (0..n)
            .map(|j| u.column(j).iter().map(|&x| x * x).sum::<T>().sqrt())
            .collect();
        for (j, &s) in sigma.iter().enumerate() {
            if s > T::zero() {
                for i in 0..m {
                    u[(i, j)] /= s;
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap_or(std::cmp::Ordering::Equal));
        let u_sorted = Mat::from_fn(m, n, |i, j| u[(i, order[j])]);
        let v_sorted = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
        sigma = order.iter().map(|&j| sigma[j]).collect();
        Ok(Svd {
            u: u_sorted,
            singular_values: sigma,
            v: v_sorted,
        })
    }

    /// Default rank cutoff `max(m, n) · ε · σ_max`.
    pub fn default_tolerance(&self) -> T {
        let dim = self.u.rows().max(self.v.rows());
        T::from_count(dim) * T::epsilon() * self.singular_values.first().copied().unwrap_or(T::zero())
    }

    pub fn rank(&self, tol: T) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    /// Largest over smallest singular value (infinite when rank deficient).
    pub fn condition_number(&self) -> T {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > T::zero() => hi / lo,
            (Some(_), Some(_)) => T::infinity(),
            _ => T::one(),
        }
    }

}

/// Orthonormal basis (as columns) of the null space of `a`, where singular
/// values at or below `tol` count as zero.
pub fn null_space<T: Real>(a: &Mat<T>, tol: T) -> Result<Mat<T>, LinalgError> {
    let (r, d) = a.shape();
    // pad wide inputs with zero rows so that V is square
    let padded;
    let a = if r < d {
        padded = Mat::from_fn(d, d, |i, j| if i < r { a[(i, j)] } else { T::zero() });
        &padded
    } else {
        a
    };
    let svd = Svd::new(a)?;
    let rank = svd.rank(tol);
    Ok(Mat::from_fn(d, d - rank, |i, j| svd.v[(i, rank + j)]))
}

/// Moore–Penrose pseudoinverse via SVD; singular values at or below
/// `rank_tol` are treated as zero. `None` selects the default cutoff.
pub fn pinv<T: Real>(a: &Mat<T>, rank_tol: Option<T>) -> Result<Mat<T>, LinalgError> {
    let svd = Svd::new(a)?;
    let tol = rank_tol.unwrap_or_else(|| svd.default_tolerance());
    Ok(pinv_from_svd(&svd, tol))
}

pub fn pinv_from_svd<T: Real>(svd: &Svd<T>, tol: T) -> Mat<T> {
    let (m, k) = svd.u.shape();
    let n = svd.v.rows();
    let mut out = Mat::zeros(n, m);
    for (l, &s) in svd.singular_values.iter().enumerate().take(k) {
        if s <= tol || s == T::zero() {
            continue;
        }
        let inv = T::one() / s;
        for j in 0..m {
            let uj = svd.u[(j, l)] * inv;
            if uj == T::zero() {
                continue;
            }
            for i in 0..n {
                out[(i, j)] += svd.v[(i, l)] * uj;
            }
        }
    }
    out
}

/// Spectral decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal, column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: Mat<T>,
}

impl<T: Real> SymEig<T> {
    pub fn reconstruct(&self) -> Mat<T> {
        let v = &self.eigenvectors;
        let scaled = Mat::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        &scaled * &v.transpose()
    }
}

/// Cyclic Jacobi eigensolver. The input is symmetrized as `(A + Aᵀ)/2`
/// before iterating.
pub fn sym_eig<T: Real>(a: &Mat<T>) -> Result<SymEig<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = Mat::identity(n);
    let scale = m.norm_fro();
    let mut done = n < 2 || scale == T::zero();
    let tiny = T::epsilon() * T::epsilon() * scale * scale;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if done {
            break;
        }
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= tiny {
            done = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !done {
        return Err(LinalgError::DecompositionFailed("cyclic Jacobi eigensolver"));
    }
    let diag = m.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[x].partial_cmp(&diag[y]).unwrap_or(std::cmp::Ordering::Equal));
    Ok(SymEig {
        eigenvalues: order.iter().map(|&k| diag[k]).collect(),
        eigenvectors: Mat::from_fn(n, n, |i, j| v[(i, order[j])]),
    })
}

/// Smallest eigenvalue of a symmetric matrix (`+∞` for the empty matrix).
pub fn min_eig<T: Real>(a: &Mat<T>) -> Result<T, LinalgError> {
    Ok(sym_eig(a)?.eigenvalues.first().copied().unwrap_or(T::infinity()))
}

pub fn max_eig<T: Real>(a: &Mat<T>) -> Result<T, LinalgError> {
    Ok(sym_eig(a)?.eigenvalues.last().copied().unwrap_or(T::neg_infinity()))
}

/// Nearest positive semidefinite matrix in Frobenius norm: eigenvalues clipped
/// at zero.
pub fn psd_project<T: Real>(a: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    let mut eig = sym_eig(a)?;
    for l in eig.eigenvalues.iter_mut() {
        *l = l.max(T::zero());
    }
    Ok(eig.reconstruct().symmetrize())
}

/// Eigenvalues of a general real matrix as `(re, im)` pairs, via Householder
/// reduction to Hessenberg form and the shifted QR iteration.
pub fn eigenvalues<T: Real>(a: &Mat<T>) -> Result<Vec<(T, T)>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = hessenberg(a);
    hqr(&mut h)
}

fn hessenberg<T: Real>(a: &Mat<T>) -> Vec<Vec<T>> {
    let n = a.rows();
    let mut h: Vec<Vec<T>> = a.to_rows();
    for k in 0..n.saturating_sub(2) {
        let alpha_norm: T = (k + 1..n).map(|i| h[i][k] * h[i][k]).sum::<T>().sqrt();
        if alpha_norm == T::zero() {
            continue;
        }
        let alpha = if h[k + 1][k] > T::zero() { -alpha_norm } else { alpha_norm };
        let mut v: Vec<T> = vec![T::zero(); n];
        v[k + 1] = h[k + 1][k] - alpha;
        for i in k + 2..n {
            v[i] = h[i][k];
        }
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        // H <- (I - 2vvᵀ/vᵀv) H
        for j in 0..n {
            let s: T = (k + 1..n).map(|i| v[i] * h[i][j]).sum();
            let f = two * s / vnorm2;
            for i in k + 1..n {
                h[i][j] -= f * v[i];
            }
        }
        // H <- H (I - 2vvᵀ/vᵀv)
        for row in h.iter_mut() {
            let s: T = (k + 1..n).map(|j| row[j] * v[j]).sum();
            let f = two * s / vnorm2;
            for j in k + 1..n {
                row[j] -= f * v[j];
            }
        }
    }
    h
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
#[allow(unused_assignments)]
fn hqr<T: Real>(a: &mut [Vec<T>]) -> Result<Vec<(T, T)>, LinalgError> {
    let n = a.len() as isize;
    let eps = T::epsilon();
    let mut wr = vec![T::zero(); n as usize];
    let mut wi = vec![T::zero(); n as usize];
    let mut anorm = T::zero();
    for i in 0..n as usize {
        for j in i.saturating_sub(1)..n as usize {
            anorm += a[i][j].abs();
        }
    }
    let idx = |i: isize| i as usize;
    let mut nn: isize = n - 1;
    let mut t = T::zero();
    let (mut p, mut q, mut r) = (T::zero(), T::zero(), T::zero());
    let (mut x, mut y, mut z, mut w);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = a[idx(l - 1)][idx(l - 1)].abs() + a[idx(l)][idx(l)].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[idx(l)][idx(l - 1)].abs() <= eps * s {
                    a[idx(l)][idx(l - 1)] = T::zero();
                    break;
                }
                l -= 1;
            }
            x = a[idx(nn)][idx(nn)];
            if l == nn {
                wr[idx(nn)] = x + t;
                wi[idx(nn)] = T::zero();
                nn -= 1;
                break;
            }
            y = a[idx(nn - 1)][idx(nn - 1)];
            w = a[idx(nn)][idx(nn - 1)] * a[idx(nn - 1)][idx(nn)];
            if l == nn - 1 {
                p = T::lit(0.5) * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= T::zero() {
                    z = p + z.abs() * p.signum();
                    wr[idx(nn - 1)] = x + z;
                    wr[idx(nn)] = x + z;
                    if z != T::zero() {
                        wr[idx(nn)] = x - w / z;
                    }
                    wi[idx(nn - 1)] = T::zero();
                    wi[idx(nn)] = T::zero();
                } else {
                    wr[idx(nn - 1)] = x + p;
                    wr[idx(nn)] = x + p;
                    wi[idx(nn - 1)] = z;
                    wi[idx(nn)] = -z;
                }
                nn -= 2;
                break;
            }
            if its == HQR_MAX_ITS {
                return Err(LinalgError::DecompositionFailed("Hessenberg QR iteration"));
            }
            if its == 10 || its == 20 || its == 40 {
                // exceptional shift
                t += x;
                for i in 0..=idx(nn) {
                    a[i][i] -= x;
                }
                let s = a[idx(nn)][idx(nn - 1)].abs() + a[idx(nn - 1)][idx(nn - 2)].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            loop {
                z = a[idx(m)][idx(m)];
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / a[idx(m + 1)][idx(m)] + a[idx(m)][idx(m + 1)];
                q = a[idx(m + 1)][idx(m + 1)] - z - r - s0;
                r = a[idx(m + 2)][idx(m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[idx(m)][idx(m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[idx(m - 1)][idx(m - 1)].abs() + z.abs() + a[idx(m + 1)][idx(m + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m..nn - 1 {
                a[idx(i + 2)][idx(i)] = T::zero();
                if i != m {
                    a[idx(i + 2)][idx(i - 1)] = T::zero();
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[idx(k)][idx(k - 1)];
                    q = a[idx(k + 1)][idx(k - 1)];
                    r = T::zero();
                    if k + 1 != nn {
                        r = a[idx(k + 2)][idx(k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != T::zero() {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt() * if p < T::zero() { -T::one() } else { T::one() };
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            a[idx(k)][idx(k - 1)] = -a[idx(k)][idx(k - 1)];
                        }
                    } else {
                        a[idx(k)][idx(k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in idx(k)..=idx(nn) {
                        p = a[idx(k)][j] + q * a[idx(k + 1)][j];
                        if k + 1 != nn {
                            p += r * a[idx(k + 2)][j];
                            a[idx(k + 2)][j] -= p * z;
                        }
                        a[idx(k + 1)][j] -= p * y;
                        a[idx(k)][j] -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in idx(l)..=idx(mmin) {
                        p = x * a[i][idx(k)] + y * a[i][idx(k + 1)];
                        if k + 1 != nn {
                            p += z * a[i][idx(k + 2)];
                            a[i][idx(k + 2)] -= p * r;
                        }
                        a[i][idx(k + 1)] -= p * q;
                        a[i][idx(k)] -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).collect())
}
