use proptest::prelude::*;

use koopiss::dynsys::{integrate, InputSignal, TrueSystem};
use koopiss::matlib::{
    kron, matrix_exp, matrix_log, min_eig, pinv, psd_project, vec, vec_inverse, vec_inverse_kron, Mat,
};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 128, ..ProptestConfig::default() }
}

fn mat_strategy(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=6, 1usize..=6)
}

/// Random `rows × cols` matrix of rank at most `r`, built as a product.
fn low_rank() -> impl Strategy<Value = Mat<f64>> {
    (dims(), 1usize..=6).prop_flat_map(|((m, n), r)| {
        (mat_strategy(m, r, 2.0), mat_strategy(r, n, 2.0)).prop_map(|(a, b)| &a * &b)
    })
}

fn square(max: usize, scale: f64) -> impl Strategy<Value = Mat<f64>> {
    (1usize..=max).prop_flat_map(move |n| mat_strategy(n, n, scale))
}

fn rel_close(a: &Mat<f64>, b: &Mat<f64>, tol: f64) -> bool {
    (a - b).norm_fro() <= tol * (1.0 + a.norm_fro().max(b.norm_fro()))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn pseudoinverse_satisfies_penrose_conditions(a in low_rank()) {
        let p = pinv(&a, None).unwrap();
        let apa = &(&a * &p) * &a;
        let pap = &(&p * &a) * &p;
        let ap = &a * &p;
        let pa = &p * &a;
        let scale = (1.0 + a.norm_fro()) * (1.0 + p.norm_fro());
        let tol = 1e-8 * scale * scale;
        prop_assert!((&apa - &a).norm_fro() <= tol);
        prop_assert!((&pap - &p).norm_fro() <= tol);
        prop_assert!((&ap - &ap.transpose()).norm_fro() <= tol);
        prop_assert!((&pa - &pa.transpose()).norm_fro() <= tol);
    }

    #[test]
    fn exp_and_log_are_inverse(a in square(5, 0.6)) {
        // spectral radius below π keeps log on the principal branch
        let e = matrix_exp(&a).unwrap();
        let l = matrix_log(&e).unwrap();
        prop_assert!(rel_close(&l, &a, 1e-6), "log(exp(A)) != A");
        let back = matrix_exp(&l).unwrap();
        prop_assert!(rel_close(&back, &e, 1e-6), "exp(log(M)) != M");
    }

    #[test]
    fn reshape_and_kronecker_inverse_agree(((m, n), v) in dims().prop_flat_map(|(m, n)| {
        (Just((m, n)), prop::collection::vec(-10.0f64..10.0, m * n))
    })) {
        let a = vec_inverse(&v, m, n).unwrap();
        let b = vec_inverse_kron(&v, m, n).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        prop_assert_eq!(vec(&a), v);
    }

    #[test]
    fn kronecker_mixed_product(
        (a, c) in (1usize..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(p, q, r)| (mat_strategy(p, q, 2.0), mat_strategy(q, r, 2.0))),
        (b, d) in (1usize..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(p, q, r)| (mat_strategy(p, q, 2.0), mat_strategy(q, r, 2.0))),
    ) {
        let left = &kron(&a, &b) * &kron(&c, &d);
        let right = kron(&(&a * &c), &(&b * &d));
        prop_assert!(rel_close(&left, &right, 1e-12));
    }

    #[test]
    fn psd_projection_is_nearest_psd(a in square(5, 3.0), s in square(5, 3.0)) {
        let a = a.symmetrize();
        let p = psd_project(&a).unwrap();
        prop_assert!(min_eig(&p).unwrap() >= -1e-10 * (1.0 + a.norm_fro()));
        prop_assert!(rel_close(&psd_project(&p).unwrap(), &p, 1e-10));
        if s.rows() == a.rows() {
            let other = &s * &s.transpose();
            prop_assert!((&a - &p).norm_fro() <= (&a - &other).norm_fro() + 1e-9);
        }
    }

    #[test]
    fn rk4_has_fourth_order_convergence(a in square(3, 1.5)) {
        let n = a.rows();
        let exact = matrix_exp(&a).unwrap();
        let x0: Vec<f64> = (0..n).map(|i| 1.0 - 0.3 * i as f64).collect();
        let truth = exact.mul_vec(&x0);
        let sys = TrueSystem::linear(a.clone(), Mat::zeros(n, 1)).unwrap();
        let err = |h: f64| {
            let tr = integrate(&sys, &x0, &InputSignal::zero(1), 1.0, h).unwrap();
            let last = tr.last_state();
            last.iter().zip(&truth).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        // skip systems too slow for the leading error term to rise above rounding
        prop_assume!(e1 > 1e-11);
        let ratio = e1 / e2;
        prop_assert!((8.0..=32.0).contains(&ratio), "ratio {ratio} (errors {e1:e}, {e2:e})");
    }
}
