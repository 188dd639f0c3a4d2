use proptest::prelude::*;

use koopiss::dictionary::{ExtensionTransform, SbfSet};
use koopiss::iss::{assemble_extended, assemble_plain, ExtendedOptions, LmiStructure, LmiValues};
use koopiss::koopman::PersidskiiModel;
use koopiss::matlib::Mat;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// `Q` written out entry by entry over `ζ = (x, f_1, …, f_M, w)`.
fn q_by_entries(s: &LmiStructure<f64>, v: &LmiValues<f64>) -> Mat<f64> {
    let n = s.n;
    let mut off = vec![n];
    for &k in &s.sizes {
        off.push(off.last().unwrap() + k);
    }
    let w0 = *off.last().unwrap();
    let dim = w0 + n;
    let mut q = Mat::zeros(dim, dim);
    let (p, a0) = (&v.p, &s.a0);
    for i in 0..n {
        for k in 0..n {
            let mut e = 0.0;
            for l in 0..n {
                e += a0[(l, i)] * p[(l, k)] + p[(i, l)] * a0[(l, k)];
            }
            if i == k && s.has_xi0 {
                e += v.xi0[i];
            }
            q[(i, k)] = e;
            q[(i, w0 + k)] = p[(i, k)];
        }
    }
    for j in 0..s.sizes.len() {
        let (aj, rj, lam) = (&s.a[j], &s.r[j], &v.lambdas[j]);
        for i in 0..n {
            for c in 0..s.sizes[j] {
                let mut e = rj[(c, i)] * v.upsilon0[j][c];
                for l in 0..n {
                    e += p[(i, l)] * aj[(l, c)] + a0[(l, i)] * rj[(c, l)] * lam[c];
                }
                q[(i, off[j] + c)] = e;
            }
        }
        for a in 0..s.sizes[j] {
            for k in 0..n {
                q[(off[j] + a, w0 + k)] = lam[a] * rj[(a, k)];
            }
        }
    }
    for sb in 0..s.sizes.len() {
        for z in sb..s.sizes.len() {
            for a in 0..s.sizes[sb] {
                for b in 0..s.sizes[z] {
                    let mut e = 0.0;
                    for l in 0..n {
                        e += s.a[sb][(l, a)] * s.r[z][(b, l)] * v.lambdas[z][b]
                            + v.lambdas[sb][a] * s.r[sb][(a, l)] * s.a[z][(l, b)];
                    }
                    if a == b {
                        if sb == z {
                            e += v.xis[sb][a];
                        } else if let Some(d) = v.upsilon(sb + 1, z + 1) {
                            e += d[a];
                        }
                    }
                    q[(off[sb] + a, off[z] + b)] = e;
                }
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            q[(w0 + i, w0 + k)] = -v.phi[(i, k)];
        }
    }
    for c in 0..dim {
        for r in c + 1..dim {
            q[(r, c)] = q[(c, r)];
        }
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn plain_assembly_matches_entrywise_formula(
        g1 in mat(2, 2), g2 in mat(2, 2), z in prop::collection::vec(-2.0f64..2.0, 64),
    ) {
        let sbfs = SbfSet::uniform(&["identity", "tanh"], 2).unwrap();
        let model = PersidskiiModel::new(vec![g1, g2], Mat::identity(2), sbfs).unwrap();
        let prob = assemble_plain(&model).unwrap();
        let v = prob.structure.unpack(&z[..prob.variable_count()]);
        let q = prob.structure.q_matrix(&v);
        prop_assert!(q.approx_eq(&q_by_entries(&prob.structure, &v), 1e-12));
    }

    #[test]
    fn changed_variable_assembly_matches_entrywise_formula(
        r in mat(3, 2), a0 in mat(2, 2), g1 in mat(2, 3), g2 in mat(2, 3),
        z in prop::collection::vec(-2.0f64..2.0, 128),
    ) {
        let sbfs = SbfSet::from_names(&[vec!["identity".to_string(); 3], vec!["tanh".to_string(); 3]]).unwrap();
        let ext = ExtensionTransform { offsets: None, r: Some(vec![r.clone(), r]) };
        let model = PersidskiiModel::extended(vec![g1, g2], Mat::identity(2), sbfs, ext)
            .unwrap()
            .with_a0(a0)
            .unwrap();
        let prob = assemble_extended(&model, ExtendedOptions::default()).unwrap();
        prop_assert!(!prob.structure.pairs.is_empty());
        let v = prob.structure.unpack(&z[..prob.variable_count()]);
        let q = prob.structure.q_matrix(&v);
        prop_assert!(q.approx_eq(&q_by_entries(&prob.structure, &v), 1e-12));
        // the compiled affine form agrees with direct evaluation
        for (c, (kind, direct)) in prob.constraints.iter().zip(prob.evaluate(&v)) {
            prop_assert_eq!(c.kind, kind);
            let compiled = c.expr.eval(&z[..prob.variable_count()]);
            prop_assert!(compiled.approx_eq(&direct, 1e-12));
        }
    }
}
