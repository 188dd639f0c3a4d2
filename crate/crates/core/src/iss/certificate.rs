use serde::{Deserialize, Serialize};

use super::lmi::{ConstraintKind, LmiPath, LmiProblem, LmiStructure, LmiValues};
use super::solver::{Solution, SolverDiagnostics, SolverOptions, Verdict};
use super::IssError;
use crate::koopman::PersidskiiModel;
use crate::matlib::{min_eig, Mat};
use crate::scalar::Real;

/// Smallest eigenvalue of a constraint written in `⪰ 0` form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub strict: bool,
    pub value: f64,
}

/// Recomputes every margin from the block formulas. Sign constraints are
/// summarized by their smallest entry.
pub fn compute_margins<T: Real>(prob: &LmiProblem<T>, v: &LmiValues<T>) -> Result<Vec<Margin>, IssError> {
    let mut out = Vec::new();
    let mut nonneg: Option<T> = None;
    for c in &prob.constraints {
        let m = prob.structure.constraint_value(c.kind, v);
        let value = min_eig(&m.symmetrize())?;
        if let ConstraintKind::Nonnegative(_) = c.kind {
            nonneg = Some(nonneg.map_or(value, |a| a.min(value)));
            continue;
        }
        out.push(Margin { name: c.name(), strict: c.strict, value: value.as_f64() });
    }
    if let Some(v) = nonneg {
        out.push(Margin { name: "Lambda, Xi, Upsilon >= 0".into(), strict: false, value: v.as_f64() });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpsilonEntry {
    pub s: usize,
    pub z: usize,
    pub diag: Vec<f64>,
}

/// A solved (or refuted) instance of the ISS inequalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssCertificate {
    pub kind: String,
    pub version: u32,
    pub path: LmiPath,
    pub verdict: Verdict,
    pub n: usize,
    pub block_sizes: Vec<usize>,
    pub phi: usize,
    pub mu: usize,
    pub p: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub xi0: Option<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub upsilon0: Vec<Vec<f64>>,
    pub upsilon: Vec<UpsilonEntry>,
    #[serde(rename = "Phi")]
    pub phi_matrix: Vec<Vec<f64>>,
    pub rho: f64,
    pub margins: Vec<Margin>,
    pub q_max_eigenvalue: f64,
    pub eps_strict: f64,
    pub eps_slack: f64,
    pub solver: SolverDiagnostics,
    pub model_digest: Option<String>,
}

fn rows<T: Real>(a: &Mat<T>) -> Vec<Vec<f64>> {
    a.to_rows().into_iter().map(|r| r.into_iter().map(|v| v.as_f64()).collect()).collect()
}

fn f64s<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_rows<T: Real>(r: &[Vec<f64>], n: usize, what: &str) -> Result<Mat<T>, IssError> {
    let m = Mat::from_rows(&r.iter().map(|row| row.iter().map(|&x| T::lit(x)).collect()).collect::<Vec<_>>())
        .map_err(|e| IssError::Format(format!("{what}: {e}")))?;
    if m.shape() != (n, n) {
        return Err(IssError::Format(format!("{what} must be {n}x{n}")));
    }
    Ok(m)
}

impl IssCertificate {
    pub fn from_solution<T: Real>(prob: &LmiProblem<T>, sol: &Solution<T>, opts: &SolverOptions) -> Self {
        let s = &prob.structure;
        let v = &sol.values;
        let q_max = sol
            .margins
            .iter()
            .find(|m| m.name == ConstraintKind::NegQ.name())
            .map_or(f64::NAN, |m| -m.value);
        IssCertificate {
            kind: "iss-certificate".into(),
            version: 1,
            path: s.path,
            verdict: sol.verdict,
            n: s.n,
            block_sizes: s.sizes.clone(),
            phi: s.phi,
            mu: s.mu,
            p: rows(&v.p),
            lambda: v.lambdas.iter().map(|d| f64s(d)).collect(),
            xi0: s.has_xi0.then(|| f64s(&v.xi0)),
            xi: v.xis.iter().map(|d| f64s(d)).collect(),
            upsilon0: v.upsilon0.iter().map(|d| f64s(d)).collect(),
            upsilon: v
                .upsilons
                .iter()
                .map(|((a, b), d)| UpsilonEntry { s: *a, z: *b, diag: f64s(d) })
                .collect(),
            phi_matrix: rows(&v.phi),
            rho: v.rho.as_f64(),
            margins: sol.margins.clone(),
            q_max_eigenvalue: q_max,
            eps_strict: opts.eps_strict,
            eps_slack: opts.eps_slack,
            solver: sol.diagnostics.clone(),
            model_digest: None,
        }
    }

    pub fn with_model_digest(mut self, digest: String) -> Self {
        self.model_digest = Some(digest);
        self
    }

    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }

    /// Typed values, checked against the structure they are meant for.
    pub fn values<T: Real>(&self, s: &LmiStructure<T>) -> Result<LmiValues<T>, IssError> {
        if self.path != s.path || self.n != s.n || self.block_sizes != s.sizes {
            return Err(IssError::Format(format!(
                "certificate ({} n={} blocks={:?}) does not match the model ({} n={} blocks={:?})",
                self.path.label(),
                self.n,
                self.block_sizes,
                s.path.label(),
                s.n,
                s.sizes
            )));
        }
        let lits = |v: &[f64]| -> Vec<T> { v.iter().map(|&x| T::lit(x)).collect() };
        let mut out = s.zero_values();
        out.p = from_rows(&self.p, s.n, "P")?;
        out.phi = from_rows(&self.phi_matrix, s.n, "Phi")?;
        out.rho = T::lit(self.rho);
        let check = |got: &[Vec<f64>], what: &str| -> Result<(), IssError> {
            if got.len() != s.sizes.len() || got.iter().zip(&s.sizes).any(|(g, &k)| g.len() != k) {
                return Err(IssError::Format(format!("{what} blocks do not match the block sizes")));
            }
            Ok(())
        };
        check(&self.lambda, "Lambda")?;
        check(&self.xi, "Xi")?;
        check(&self.upsilon0, "Upsilon0")?;
        out.lambdas = self.lambda.iter().map(|d| lits(d)).collect();
        out.xis = self.xi.iter().map(|d| lits(d)).collect();
        out.upsilon0 = self.upsilon0.iter().map(|d| lits(d)).collect();
        if let Some(x0) = &self.xi0 {
            if x0.len() != s.n {
                return Err(IssError::Format("Xi0 must have length n".into()));
            }
            out.xi0 = lits(x0);
        }
        for e in &self.upsilon {
            match out.upsilons.iter_mut().find(|(k, _)| *k == (e.s, e.z)) {
                Some((_, d)) if d.len() == e.diag.len() => *d = lits(&e.diag),
                _ => {
                    return Err(IssError::Format(format!("unexpected Upsilon{},{} block", e.s, e.z)));
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IssError> {
        let c: IssCertificate = serde_json::from_str(text).map_err(|e| IssError::Format(e.to_string()))?;
        if c.kind != "iss-certificate" {
            return Err(IssError::Format(format!("not a certificate (kind {:?})", c.kind)));
        }
        Ok(c)
    }
}

/// Assembles the path matching the model's form, solves, and stamps the
/// model digest.
pub fn certify<T: Real>(model: &PersidskiiModel<T>, opts: &SolverOptions) -> Result<IssCertificate, IssError> {
    let prob = super::lmi::assemble(model)?;
    let sol = super::solver::solve(&prob, opts)?;
    Ok(IssCertificate::from_solution(&prob, &sol, opts).with_model_digest(model.digest()))
}
