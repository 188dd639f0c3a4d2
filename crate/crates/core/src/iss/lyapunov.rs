//! Numerical audit of a certificate through the Lyapunov function
//! `V(x) = xᵀPx + 2 Σ_j Σ_i Λ^j_i ∫₀^{(R_j x)_i} f_j^i(ν) dν`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::certificate::IssCertificate;
use super::lmi::{assemble_extended, assemble_plain, ExtendedOptions, LmiPath, LmiStructure, LmiValues};
use super::IssError;
use crate::koopman::PersidskiiModel;
use crate::matlib::{dot, Mat};
use crate::scalar::Real;

/// Terms of `V̇ = ζᵀQζ − (Ξ terms) − (Υ terms) + wᵀΦw`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeTerms<T> {
    pub vdot: T,
    pub qform: T,
    pub xi: T,
    pub upsilon: T,
    pub phi: T,
}

impl<T: Real> DerivativeTerms<T> {
    pub fn identity_value(&self) -> T {
        self.qform - self.xi - self.upsilon + self.phi
    }

    /// Mismatch relative to the size of the terms involved.
    pub fn relative_mismatch(&self) -> T {
        let scale = self.vdot.abs() + self.qform.abs() + self.xi.abs() + self.upsilon.abs() + self.phi.abs();
        if scale == T::zero() {
            T::zero()
        } else {
            (self.vdot - self.identity_value()).abs() / scale
        }
    }
}

pub struct LyapunovEvaluator<'a, T> {
    pub model: &'a PersidskiiModel<T>,
    pub structure: LmiStructure<T>,
    pub values: LmiValues<T>,
}

impl<'a, T: Real> LyapunovEvaluator<'a, T> {
    pub fn new(model: &'a PersidskiiModel<T>, cert: &IssCertificate) -> Result<Self, IssError> {
        let prob = match cert.path {
            LmiPath::Plain => assemble_plain(model)?,
            LmiPath::Extended => {
                assemble_extended(model, ExtendedOptions { pin_xi0: cert.xi0.is_none() })?
            }
        };
        let values = cert.values(&prob.structure)?;
        Ok(LyapunovEvaluator { model, structure: prob.structure, values })
    }

    pub fn from_values(model: &'a PersidskiiModel<T>, structure: LmiStructure<T>, values: LmiValues<T>) -> Self {
        LyapunovEvaluator { model, structure, values }
    }

    fn args(&self, j: usize, x: &[T]) -> Vec<T> {
        self.structure.r[j].mul_vec(x)
    }

    pub fn v(&self, x: &[T]) -> T {
        let mut v = dot(x, &self.values.p.mul_vec(x));
        for j in 0..self.structure.block_count() {
            let fns = self.model.sbfs.block(j);
            for (i, a) in self.args(j, x).into_iter().enumerate() {
                let l = self.values.lambdas[j][i];
                if l != T::zero() {
                    v += T::lit(2.0) * l * fns[i].primitive(a);
                }
            }
        }
        v
    }

    /// `∇V = 2Px + 2 Σ_j R_jᵀ Λ^j f_j(R_j x)`.
    pub fn grad(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        let mut g: Vec<T> = self.values.p.mul_vec(x).into_iter().map(|v| two * v).collect();
        for j in 0..self.structure.block_count() {
            let f = self.model.sbfs.eval_block(j, &self.args(j, x));
            let weighted: Vec<T> = f.iter().zip(&self.values.lambdas[j]).map(|(a, l)| two * *a * *l).collect();
            let back = self.structure.r[j].transpose().mul_vec(&weighted);
            for (gi, b) in g.iter_mut().zip(back) {
                *gi += b;
            }
        }
        g
    }

    /// Total input term `w = Bu (+ c)`.
    pub fn input_term(&self, u: &[T]) -> Vec<T> {
        let mut w = self.model.b.mul_vec(u);
        if let Some(c) = &self.model.offset {
            for (wi, ci) in w.iter_mut().zip(c) {
                *wi += *ci;
            }
        }
        w
    }

    pub fn vdot(&self, x: &[T], u: &[T]) -> T {
        dot(&self.grad(x), &self.model.vector_field(x, u))
    }

    /// `V̇` at zero total input `w = 0`, i.e. with `u = 0` and any constant
    /// drift removed.
    pub fn vdot_unforced(&self, x: &[T]) -> T {
        let mut f = self.model.vector_field(x, &vec![T::zero(); self.model.m]);
        if let Some(c) = &self.model.offset {
            for (fi, ci) in f.iter_mut().zip(c) {
                *fi -= *ci;
            }
        }
        dot(&self.grad(x), &f)
    }

    /// `V̇` from the gradient, together with the terms of the quadratic-form
    /// identity.
    pub fn derivative_terms(&self, x: &[T], u: &[T]) -> DerivativeTerms<T> {
        let s = &self.structure;
        let v = &self.values;
        let two = T::lit(2.0);
        let fs: Vec<Vec<T>> = (0..s.block_count())
            .map(|j| self.model.sbfs.eval_block(j, &self.args(j, x)))
            .collect();
        let w = self.input_term(u);
        let mut zeta = x.to_vec();
        for f in &fs {
            zeta.extend_from_slice(f);
        }
        zeta.extend_from_slice(&w);
        let q = s.q_matrix(v);
        let qform = dot(&zeta, &q.mul_vec(&zeta));
        let mut xi = dot(x, &Mat::diag(&v.xi0).mul_vec(x));
        let mut ups = T::zero();
        for j in 0..s.block_count() {
            xi += fs[j].iter().zip(&v.xis[j]).map(|(f, d)| *f * *d * *f).sum::<T>();
            let a = self.args(j, x);
            ups += two * a.iter().zip(&v.upsilon0[j]).zip(&fs[j]).map(|((a, d), f)| *a * *d * *f).sum::<T>();
        }
        for ((sb, zb), d) in &v.upsilons {
            ups += two
                * fs[sb - 1]
                    .iter()
                    .zip(d)
                    .zip(&fs[zb - 1])
                    .map(|((a, d), b)| *a * *d * *b)
                    .sum::<T>();
        }
        let phi = dot(&w, &v.phi.mul_vec(&w));
        DerivativeTerms { vdot: self.vdot(x, u), qform, xi, upsilon: ups, phi }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub samples: usize,
    pub positivity_failures: usize,
    pub decrease_failures: usize,
    pub identity_failures: usize,
    pub max_identity_error: f64,
    pub digest_matches: Option<bool>,
    pub witness: Option<Witness>,
}

/// Random states with directions uniform on the sphere and norms
/// log-uniform in `[lo, hi]`.
pub fn sample_states<T: Real>(n: usize, count: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let r = 10f64.powf(rng.random_range(lo.log10()..=hi.log10()));
            d.iter_mut().for_each(|v| *v *= r / norm);
            d.into_iter().map(T::lit).collect()
        })
        .collect()
}

pub const IDENTITY_TOLERANCE: f64 = 1e-6;

/// Samples `count` states with `‖x‖ ∈ [1e-3, 1e3]` and checks `V > 0`,
/// `V̇ < 0` at zero total input, and the quadratic-form identity at a random input.
pub fn check_certificate<T: Real>(
    cert: &IssCertificate,
    model: &PersidskiiModel<T>,
    count: usize,
    seed: u64,
) -> Result<CheckReport, IssError> {
    if !cert.is_feasible() {
        return Err(IssError::Precondition("only feasible certificates can be checked".into()));
    }
    let eval = LyapunovEvaluator::new(model, cert)?;
    let digest_matches = cert.model_digest.as_ref().map(|d| *d == model.digest());
    let mut rep = CheckReport {
        passed: true,
        samples: count,
        positivity_failures: 0,
        decrease_failures: 0,
        identity_failures: 0,
        max_identity_error: 0.0,
        digest_matches,
        witness: None,
    };
    let xs = sample_states::<T>(model.n, count, 1e-3, 1e3, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let zero_u = vec![T::zero(); model.m];
    for x in &xs {
        let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
        let fail = |rep: &mut CheckReport, u: &[T], reason: String| {
            if rep.witness.is_none() {
                rep.witness = Some(Witness { x: xf.clone(), u: u.iter().map(|v| v.as_f64()).collect(), reason });
            }
        };
        let v = eval.v(x);
        if !(v > T::zero()) {
            rep.positivity_failures += 1;
            fail(&mut rep, &zero_u, format!("V = {v:e}"));
        }
        let vd = eval.vdot_unforced(x);
        if !(vd < T::zero()) {
            rep.decrease_failures += 1;
            fail(&mut rep, &zero_u, format!("V̇ = {vd:e} at zero input"));
        }
        let u: Vec<T> = (0..model.m).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let terms = eval.derivative_terms(x, &u);
        let err = terms.relative_mismatch().as_f64();
        rep.max_identity_error = rep.max_identity_error.max(err);
        if !(err <= IDENTITY_TOLERANCE) {
            rep.identity_failures += 1;
            fail(&mut rep, &u, format!("quadratic-form identity off by {err:e} (relative)"));
        }
    }
    rep.passed = rep.positivity_failures == 0
        && rep.decrease_failures == 0
        && rep.identity_failures == 0
        && digest_matches != Some(false);
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub passed: bool,
    pub max_relative_error: f64,
    pub worst_point: Option<Vec<f64>>,
}

pub const GRADIENT_TOLERANCE: f64 = 1e-5;

/// Analytic `∇V` against central differences with step
/// `1e-6·max(1, |x_i|)`.
pub fn gradient_check<T: Real>(eval: &LyapunovEvaluator<'_, T>, points: &[Vec<T>]) -> GradientReport {
    let mut worst = 0.0f64;
    let mut worst_point = None;
    for x in points {
        let g = eval.grad(x);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        for i in 0..x.len() {
            let h = T::lit(1e-6) * x[i].abs().max(T::one());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = ((eval.v(&xp) - eval.v(&xm)) / (h + h)).as_f64();
            let denom = gmax.max(1e-12);
            let err = if gmax == 0.0 && fd.abs() <= 1e-12 { 0.0 } else { (fd - g[i].as_f64()).abs() / denom };
            if err > worst {
                worst = err;
                worst_point = Some(x.iter().map(|v| v.as_f64()).collect());
            }
        }
    }
    GradientReport { passed: worst <= GRADIENT_TOLERANCE, max_relative_error: worst, worst_point }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{ExtensionTransform, SbfSet, ScalarFn};
    use crate::iss::{certify, SolverOptions};

    fn two_block() -> PersidskiiModel<f64> {
        let sbfs = SbfSet::uniform(&["identity", "cube"], 2).unwrap();
        let g1 = Mat::from_row_slices(&[&[-1.0, 0.4], &[-0.2, -1.5]]);
        let g2 = Mat::from_row_slices(&[&[-0.5, 0.0], &[0.1, -0.3]]);
        PersidskiiModel::new(vec![g1, g2], Mat::identity(2), sbfs).unwrap()
    }

    fn changed_variables() -> PersidskiiModel<f64> {
        let sbfs = SbfSet::uniform(&["identity", "cube"], 2).unwrap();
        let r = Mat::from_row_slices(&[&[1.0, 0.0], &[0.5, 1.0]]);
        let ext = ExtensionTransform {
            offsets: Some(vec![vec![0.0, 0.0], vec![0.1, -0.2]]),
            r: Some(vec![r.clone(), r]),
        };
        let a1 = Mat::from_row_slices(&[&[-1.0, 0.4], &[-0.2, -1.5]]);
        let a2 = Mat::from_row_slices(&[&[-0.5, 0.0], &[0.1, -0.3]]);
        PersidskiiModel::extended(vec![a1, a2], Mat::identity(2), sbfs, ext)
            .unwrap()
            .with_a0(Mat::identity(2).scale(-0.5))
            .unwrap()
    }

    /// Blocks on different arguments with no linear part: `Q` vanishes on
    /// the kernel of `[A_1 A_2]`, which leaves `Ξ¹` singular.
    fn split_arguments() -> PersidskiiModel<f64> {
        let blocks = vec![vec![ScalarFn::<f64>::named("identity").unwrap(); 2], vec![ScalarFn::named("tanh").unwrap()]];
        let sbfs = SbfSet::new(blocks).unwrap();
        let ext = ExtensionTransform {
            offsets: None,
            r: Some(vec![Mat::identity(2), Mat::from_row_slices(&[&[1.0, -1.0]])]),
        };
        let a1 = Mat::from_row_slices(&[&[-2.0, 0.5], &[0.0, -1.0]]);
        let a2 = Mat::from_row_slices(&[&[-0.3], &[0.3]]);
        PersidskiiModel::extended(vec![a1, a2], Mat::from_row_slices(&[&[1.0], &[0.0]]), sbfs, ext).unwrap()
    }

    #[test]
    fn degenerate_face_is_not_certified() {
        let cert = certify(&split_arguments(), &SolverOptions::default()).unwrap();
        assert!(!cert.is_feasible(), "{:?}", cert.solver);
    }

    #[test]
    fn certificate_passes_audit() {
        for m in [two_block(), changed_variables()] {
            let cert = certify(&m, &SolverOptions::default()).unwrap();
            assert!(cert.is_feasible(), "{:?}", cert.solver);
            let rep = check_certificate(&cert, &m, 500, 11).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert_eq!(rep.digest_matches, Some(true));
        }
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        for m in [two_block(), changed_variables()] {
            let cert = certify(&m, &SolverOptions::default()).unwrap();
            let eval = LyapunovEvaluator::new(&m, &cert).unwrap();
            let pts = sample_states::<f64>(m.n, 100, 1e-2, 1e2, 3);
            let rep = gradient_check(&eval, &pts);
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn identity_holds_for_arbitrary_values() {
        let m = changed_variables();
        let prob = crate::iss::assemble(&m).unwrap();
        let z: Vec<f64> = (0..prob.variable_count()).map(|i| ((i * 5 % 7) as f64 - 3.0) / 2.0).collect();
        let eval = LyapunovEvaluator::from_values(&m, prob.structure.clone(), prob.structure.unpack(&z));
        for x in sample_states::<f64>(2, 50, 1e-2, 1e2, 5) {
            let t = eval.derivative_terms(&x, &vec![0.7; m.m]);
            assert!(t.relative_mismatch() < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn digest_mismatch_fails_the_check() {
        let m = two_block();
        let cert = certify(&m, &SolverOptions::default()).unwrap();
        let mut other = m.clone();
        other.b = Mat::identity(2).scale(2.0);
        let rep = check_certificate(&cert, &other, 50, 1).unwrap();
        assert_eq!(rep.digest_matches, Some(false));
        assert!(!rep.passed);
    }

    #[test]
    fn infeasible_certificate_is_rejected() {
        let sbfs = SbfSet::uniform(&["identity"], 1).unwrap();
        let m = PersidskiiModel::new(vec![Mat::diag(&[1.0])], Mat::diag(&[1.0]), sbfs).unwrap();
        let cert = certify(&m, &SolverOptions::default()).unwrap();
        assert!(matches!(check_certificate(&cert, &m, 10, 0), Err(IssError::Precondition(_))));
    }

    #[test]
    fn certificate_json_round_trip() {
        let m = two_block();
        let cert = certify(&m, &SolverOptions::default()).unwrap();
        let back = IssCertificate::from_json(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
        let prob = crate::iss::assemble(&m).unwrap();
        assert!(back.values::<f64>(&prob.structure).is_ok());
    }
}
