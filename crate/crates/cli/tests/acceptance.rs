//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use koopiss::dictionary::SbfSet;
use koopiss::dynsys::{integrate, InputSignal, TrueSystem};
use koopiss::iss::{
    assemble_extended, assemble_plain, check_certificate, compute_margins, solve, ConstraintKind,
    ExtendedOptions, IssCertificate, SolverOptions, Verdict,
};
use koopiss::koopman::{extract_uniform, PersidskiiModel};
use koopiss::matlib::{matrix_exp, matrix_log, pinv, sym_eig, vec_inverse, vec_inverse_kron, Mat};
use koopiss_cli::config::PipelineConfig;
use koopiss_cli::pipeline::{run_pipeline, RunOutcome, TIMINGS_FILE};

type Check = Result<String, String>;

/// Feasible certificates met anywhere in the suite, audited by criterion 4.
#[derive(Default)]
struct Feasible(Vec<(String, IssCertificate, PersidskiiModel<f64>)>);

impl Feasible {
    fn note(&mut self, label: &str, cert: &IssCertificate, model: &PersidskiiModel<f64>) {
        if cert.is_feasible() {
            self.0.push((label.to_string(), cert.clone(), model.clone()));
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_config(name: &str, out: &Path) -> Result<RunOutcome, String> {
    let mut cfg = PipelineConfig::load(&configs_dir().join(name)).map_err(|e| e.to_string())?;
    cfg.output.dir = out.to_path_buf();
    run_pipeline(&cfg).map_err(|e| e.to_string())
}

fn certified(o: &RunOutcome) -> Result<(&PersidskiiModel<f64>, &IssCertificate), String> {
    if let Some(st) = o.report.failed_at {
        return Err(format!("run failed at {}: {}", st.name(), o.report.error.clone().unwrap_or_default()));
    }
    Ok((o.model.as_ref().unwrap(), o.certificate.as_ref().unwrap()))
}

fn scalar(g: f64) -> PersidskiiModel<f64> {
    let sbfs = SbfSet::uniform(&["identity"], 1).unwrap();
    PersidskiiModel::new(vec![Mat::diag(&[g])], Mat::diag(&[1.0]), sbfs).unwrap()
}

fn two_block() -> PersidskiiModel<f64> {
    let sbfs = SbfSet::uniform(&["identity", "cube"], 2).unwrap();
    let g1 = Mat::from_row_slices(&[&[-1.0, 0.4], &[-0.2, -1.5]]);
    let g2 = Mat::from_row_slices(&[&[-0.5, 0.0], &[0.1, -0.3]]);
    PersidskiiModel::new(vec![g1, g2], Mat::identity(2), sbfs).unwrap()
}

fn plain_certificate(model: &PersidskiiModel<f64>) -> IssCertificate {
    let prob = assemble_plain(model).unwrap();
    let opts = SolverOptions::default();
    let sol = solve(&prob, &opts).unwrap();
    IssCertificate::from_solution(&prob, &sol, &opts).with_model_digest(model.digest())
}

fn linear_oracle(tmp: &Path, feasible: &mut Feasible) -> Check {
    let start = Instant::now();
    let o = run_config("linear.toml", &tmp.join("linear"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let (model, cert) = certified(&o)?;
    feasible.note("linear", cert, model);
    let a = Mat::from_row_slices(&[&[-1.0, 0.2], &[0.0, -0.5]]);
    let d = Mat::from_row_slices(&[&[1.0], &[0.5]]);
    let ea = (&model.gammas[0] - &a).max_abs();
    let ed = (&model.b - &d).max_abs();
    let detail = format!("max |Gamma_1 - A| = {ea:.1e}, max |B - D| = {ed:.1e}, {elapsed:.2} s");
    if ea <= 1e-3 && ed <= 1e-3 && elapsed < 5.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn extraction_audit() -> Check {
    let start = Instant::now();
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    for n in 1..=4 {
        for m in 1..=4 {
            for blocks in 1..=3 {
                let nf = n * blocks + m;
                // entry k of the coefficient vector carries its own position
                let gamma: Vec<f64> = (0..(n + m) * nf).map(|k| k as f64).collect();
                let lambda = |i: usize, j: usize| (i * nf + j) as f64;
                let (gammas, b) = extract_uniform(&gamma, n, m, blocks).map_err(|e| e.to_string())?;
                for (jp, g) in gammas.iter().enumerate() {
                    let want = Mat::from_fn(n, n, |i, c| lambda(i, jp * n + c));
                    mismatches += g.as_slice().iter().zip(want.as_slice()).filter(|(x, y)| x != y).count();
                }
                let want_b = Mat::from_fn(n, m, |i, k| lambda(i, n * blocks + k));
                mismatches += b.as_slice().iter().zip(want_b.as_slice()).filter(|(x, y)| x != y).count();
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!("{cases} shapes, {mismatches} mismatched positions, {elapsed:.3} s");
    if mismatches == 0 && elapsed < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lmi_fixtures(feasible: &mut Feasible) -> Check {
    let mut verdicts = Vec::new();
    for (g, want) in [(-1.0, Verdict::Feasible), (1.0, Verdict::Infeasible), (0.0, Verdict::Infeasible)] {
        let model = scalar(g);
        let cert = plain_certificate(&model);
        feasible.note(&format!("scalar {g}"), &cert, &model);
        if cert.verdict != want {
            return Err(format!("scalar model {g}: {:?}, expected {want:?}", cert.verdict));
        }
        verdicts.push(format!("{g}: {:?}", cert.verdict));
    }
    // hand certificate P = 0, Λ = Ξ = Φ = 1, Υ₀₁ = 0 for ẋ = −f(x) + u
    let prob = assemble_plain(&scalar(-1.0)).unwrap();
    let mut v = prob.structure.zero_values();
    v.lambdas[0][0] = 1.0;
    v.xis[0][0] = 1.0;
    v.phi = Mat::diag(&[1.0]);
    // ζ = (x, f, w): the x row vanishes with P = 0 and A₀ = 0
    let hand_q = Mat::from_row_slices(&[&[0.0, 0.0, 0.0], &[0.0, -2.0 + 1.0, 1.0], &[0.0, 1.0, -1.0]]);
    let q = prob.structure.q_matrix(&v);
    if !q.approx_eq(&hand_q, 1e-14) {
        return Err(format!("assembled Q {q:?} differs from the hand value"));
    }
    // normalized so that trace P + ΣΛ + trace Φ = 1
    let scale = 1.0 / (v.p.trace() + v.lambdas[0][0] + v.phi.trace());
    let q_max = sym_eig(&q.scale(scale)).unwrap().eigenvalues.iter().fold(f64::MIN, |a, &b| a.max(b));
    let pos = scale * (v.p[(0, 0)] + v.rho * v.lambdas[0][0]);
    let diss = scale * v.xis[0][0];
    let phi = scale * v.phi[(0, 0)];
    let margins = compute_margins(&prob, &v).unwrap();
    let reported = |k: ConstraintKind| margins.iter().find(|m| m.name == k.name()).unwrap().value * scale;
    let consistent = (reported(ConstraintKind::Positivity) - pos).abs() < 1e-14
        && (reported(ConstraintKind::Dissipation) - diss).abs() < 1e-14
        && (reported(ConstraintKind::PhiPositive) - phi).abs() < 1e-14;
    let detail = format!(
        "verdicts [{}]; hand certificate: max eig Q = {q_max:.1e}, strict margins {pos}, {diss}, {phi}",
        verdicts.join(", ")
    );
    if q_max <= 1e-14 && pos.min(diss).min(phi) >= 1e-6 && consistent {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn audit_all(feasible: &Feasible) -> Check {
    let mut failed = Vec::new();
    for (label, cert, model) in &feasible.0 {
        match check_certificate(cert, model, 500, 0) {
            Ok(r) if r.passed && r.samples == 500 => {}
            Ok(r) => failed.push(format!(
                "{label}: {} positivity, {} decrease, {} identity failures",
                r.positivity_failures, r.decrease_failures, r.identity_failures
            )),
            Err(e) => failed.push(format!("{label}: {e}")),
        }
    }
    let labels: Vec<&str> = feasible.0.iter().map(|(l, _, _)| l.as_str()).collect();
    if feasible.0.is_empty() {
        Err("no feasible certificate to audit".into())
    } else if failed.is_empty() {
        Ok(format!("{} certificates x 500 samples [{}]", labels.len(), labels.join(", ")))
    } else {
        Err(failed.join("; "))
    }
}

fn kernel_properties() -> Check {
    let cfg = Config { cases: 100, failure_persistence: None, ..Config::default() };
    let mut summary = Vec::new();
    let mut run = |name: &str, res: Result<(), String>| {
        summary.push(name.to_string());
        res.map_err(|e| format!("{name}: {e}"))
    };
    let entries = |r: usize, c: usize| prop::collection::vec(-2.0f64..2.0, r * c);

    let low_rank = (1usize..=6, 1usize..=6, 1usize..=6).prop_flat_map(move |(m, n, r)| {
        (entries(m, r), entries(r, n)).prop_map(move |(a, b)| {
            &Mat::from_fn(m, r, |i, j| a[i * r + j]) * &Mat::from_fn(r, n, |i, j| b[i * n + j])
        })
    });
    run(
        "Moore-Penrose",
        TestRunner::new(cfg.clone())
            .run(&low_rank, |a| {
                let p = pinv(&a, None).unwrap();
                let tol = 1e-8 * (1.0 + a.norm_fro()).powi(2) * (1.0 + p.norm_fro()).powi(2);
                let ap = &a * &p;
                let pa = &p * &a;
                prop_assert!((&(&ap * &a) - &a).norm_fro() <= tol);
                prop_assert!((&(&pa * &p) - &p).norm_fro() <= tol);
                prop_assert!((&ap - &ap.transpose()).norm_fro() <= tol);
                prop_assert!((&pa - &pa.transpose()).norm_fro() <= tol);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    let small = (1usize..=5).prop_flat_map(move |n| {
        prop::collection::vec(-0.6f64..0.6, n * n).prop_map(move |v| Mat::from_fn(n, n, |i, j| v[i * n + j]))
    });
    run(
        "exp/log",
        TestRunner::new(cfg.clone())
            .run(&small, |a| {
                let e = matrix_exp(&a).unwrap();
                let back = matrix_exp(&matrix_log(&e).unwrap()).unwrap();
                prop_assert!((&back - &e).norm_fro() <= 1e-6 * e.norm_fro());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    let shaped = (1usize..=6, 1usize..=6)
        .prop_flat_map(|(m, n)| (Just(m), Just(n), prop::collection::vec(-100.0f64..100.0, m * n)));
    run(
        "vec/vec^-1",
        TestRunner::new(cfg.clone())
            .run(&shaped, |(m, n, l)| {
                let a = vec_inverse(&l, m, n).unwrap();
                let b = vec_inverse_kron(&l, m, n).unwrap();
                prop_assert_eq!(a.as_slice(), b.as_slice());
                prop_assert_eq!(a.as_slice(), &l[..]);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    let decay = (0.5f64..2.0, -3.0f64..3.0, 0.05f64..0.2).prop_filter("x0 away from 0", |(_, x0, _)| x0.abs() > 0.1);
    run(
        "RK4 order",
        TestRunner::new(cfg)
            .run(&decay, |(k, x0, h)| {
                let sys = TrueSystem::linear(Mat::diag(&[-k]), Mat::zeros(1, 1)).unwrap();
                let t_end = 2.0;
                let exact = x0 * (-k * t_end).exp();
                let err = |dt: f64| {
                    let tr = integrate(&sys, &[x0], &InputSignal::zero(1), t_end, dt).unwrap();
                    (tr.last_state()[0] - exact).abs()
                };
                let (e1, e2) = (err(t_end / (t_end / h).round()), err(t_end / (2.0 * (t_end / h).round())));
                let ratio = e1 / e2;
                prop_assert!((8.0..=32.0).contains(&ratio), "ratio {}", ratio);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;
    Ok(format!("{} suites x 100 instances", summary.len()))
}

fn traffic_reproduction(tmp: &Path, feasible: &mut Feasible) -> Check {
    let start = Instant::now();
    let clean = run_config("traffic.toml", &tmp.join("traffic"))?;
    let disturbed = run_config("traffic_disturbed.toml", &tmp.join("traffic_disturbed"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let (cm, cc) = certified(&clean)?;
    feasible.note("traffic", cc, cm);
    let (dm, dc) = certified(&disturbed)?;
    feasible.note("traffic disturbed", dc, dm);
    let tr = clean.report.trajectory.as_ref().unwrap();
    let res_clean = clean.report.identification.as_ref().unwrap().gamma_residual;
    let res_dist = disturbed.report.identification.as_ref().unwrap().gamma_residual;
    let mut problems = Vec::new();
    if tr.rmse > 1e-2 * tr.rms {
        problems.push(format!("RMSE {:.3e} exceeds 1e-2 x RMS {:.3e}", tr.rmse, tr.rms));
    }
    if cc.verdict != Verdict::Feasible {
        problems.push(format!("clean verdict {:?}", cc.verdict));
    }
    if !(res_dist > res_clean) {
        problems.push("disturbed residual not above the clean one".into());
    }
    if elapsed >= 60.0 {
        problems.push(format!("took {elapsed:.1} s"));
    }
    let detail = format!(
        "RMSE/RMS = {:.4}; residual clean {res_clean:.3e}, disturbed {res_dist:.3e}; verdicts '{}' / '{}'; {elapsed:.1} s",
        tr.relative_rmse,
        cc.verdict.line(),
        dc.verdict.line()
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", problems.join("; ")))
    }
}

fn extended_reduction(tmp: &Path, feasible: &mut Feasible) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let fixtures: Vec<(String, PersidskiiModel<f64>)> = {
        let mut f = vec![
            ("scalar -1".to_string(), scalar(-1.0)),
            ("scalar 1".to_string(), scalar(1.0)),
            ("scalar 0".to_string(), scalar(0.0)),
            ("two-block".to_string(), two_block()),
        ];
        for name in ["linear.toml", "traffic.toml", "unstable_scalar.toml"] {
            let o = run_config(name, &tmp.join(format!("ext_{name}")))?;
            f.push((name.to_string(), o.model.ok_or("no model")?));
        }
        f
    };
    let opts = SolverOptions::default();
    for (label, model) in &fixtures {
        let t1 = assemble_plain(model).map_err(|e| e.to_string())?;
        let c1 = assemble_extended(model, ExtendedOptions { pin_xi0: true }).map_err(|e| e.to_string())?;
        if t1.variable_count() != c1.variable_count() {
            return Err(format!("{label}: variable counts differ"));
        }
        if label == "two-block" {
            for _ in 0..50 {
                let z: Vec<f64> = (0..t1.variable_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (a, b) = (t1.structure.unpack(&z), c1.structure.unpack(&z));
                for ((ka, ma), (kb, mb)) in t1.evaluate(&a).into_iter().zip(c1.evaluate(&b)) {
                    if ka != kb {
                        return Err(format!("constraint order differs: {} vs {}", ka.name(), kb.name()));
                    }
                    worst = worst.max((&ma - &mb).max_abs());
                }
            }
        }
        let s1 = solve(&t1, &opts).map_err(|e| e.to_string())?;
        let s2 = solve(&c1, &opts).map_err(|e| e.to_string())?;
        let cert = IssCertificate::from_solution(&c1, &s2, &opts).with_model_digest(model.digest());
        feasible.note(&format!("{label} (reduced)"), &cert, model);
        if s1.verdict != s2.verdict {
            return Err(format!("{label}: {:?} vs {:?}", s1.verdict, s2.verdict));
        }
    }
    let detail = format!("50 assignments, max entry difference {worst:.1e}; {} fixtures agree", fixtures.len());
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != TIMINGS_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism(tmp: &Path) -> Check {
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    let mut files = 0;
    for name in &names {
        let a = tmp.join(format!("det_a_{name}"));
        let b = tmp.join(format!("det_b_{name}"));
        run_config(name, &a)?;
        run_config(name, &b)?;
        let (fa, fb) = (read_dir(&a), read_dir(&b));
        if fa.keys().ne(fb.keys()) {
            return Err(format!("{name}: different artifact sets"));
        }
        for (f, bytes) in &fa {
            if fb[f] != *bytes {
                return Err(format!("{name}: {f} differs between runs"));
            }
        }
        files += fa.len();
    }
    Ok(format!("{} configurations, {files} artifacts byte-identical", names.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let tmp = tmp.path();
    let mut feasible = Feasible::default();
    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    results.push((1, "linear end-to-end oracle", linear_oracle(tmp, &mut feasible)));
    results.push((2, "extraction layout audit", extraction_audit()));
    results.push((3, "scalar LMI fixtures", lmi_fixtures(&mut feasible)));
    results.push((5, "numerical kernel properties", kernel_properties()));
    results.push((6, "traffic model reproduction", traffic_reproduction(tmp, &mut feasible)));
    results.push((7, "reduced inequalities agree", extended_reduction(tmp, &mut feasible)));
    results.push((8, "determinism", determinism(tmp)));
    results.push((4, "certificate self-audit", audit_all(&feasible)));
    results.sort_by_key(|r| r.0);

    let mut failures = 0;
    for (id, title, res) in &results {
        match res {
            Ok(d) => println!("criterion {id} ({title}): PASS: {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {id} ({title}): FAIL: {d}");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failures, results.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
