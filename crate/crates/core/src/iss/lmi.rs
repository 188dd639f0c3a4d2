//! Variables, block formulas and constraint lists of the ISS matrix
//! inequalities.
//!
//! The `ζ` ordering behind `Q` is `[x; f_1; …; f_M; w]` where `w` is the
//! total input term (`Bu`, plus the constant drift when the model has one).
//! Every constraint is evaluated from its block formula; the affine form used
//! by the solver is recovered by probing unit assignments, so the two can
//! never disagree.

use serde::{Deserialize, Serialize};

use super::IssError;
use crate::koopman::PersidskiiModel;
use crate::matlib::Mat;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmiPath {
    Plain,
    Extended,
}

impl LmiPath {
    pub fn label(self) -> &'static str {
        match self {
            LmiPath::Plain => "plain",
            LmiPath::Extended => "extended",
        }
    }
}

/// Which variable block a scalar unknown belongs to. Block indices are
/// 1-based as in the inequalities (`Xi(0)` is `Ξ⁰`, `Upsilon(0, j)` is
/// `Υ_{0,j}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarBlock {
    P,
    Lambda(usize),
    Xi(usize),
    Upsilon(usize, usize),
    Phi,
}

/// One scalar unknown: entry `(row, col)` of its block (`row == col` for the
/// diagonal blocks; `row ≤ col` for the symmetric ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variable {
    pub block: VarBlock,
    pub row: usize,
    pub col: usize,
}

impl Variable {
    /// Entries of `Λ`, `Ξ` and `Υ` are sign constrained.
    pub fn is_nonnegative(&self) -> bool {
        matches!(self.block, VarBlock::Lambda(_) | VarBlock::Xi(_) | VarBlock::Upsilon(..))
    }

    pub fn label(&self) -> String {
        match self.block {
            VarBlock::P => format!("P[{},{}]", self.row + 1, self.col + 1),
            VarBlock::Phi => format!("Phi[{},{}]", self.row + 1, self.col + 1),
            VarBlock::Lambda(j) => format!("Lambda{j}[{}]", self.row + 1),
            VarBlock::Xi(j) => format!("Xi{j}[{}]", self.row + 1),
            VarBlock::Upsilon(s, z) => format!("Upsilon{s},{z}[{}]", self.row + 1),
        }
    }
}

/// Model data the inequalities are built from, in the general
/// `ẋ = A₀x + Σ A_j F_j(R_j x) + w` form.
#[derive(Clone, Debug)]
pub struct LmiStructure<T> {
    pub path: LmiPath,
    pub n: usize,
    /// `k_j`.
    pub sizes: Vec<usize>,
    pub phi: usize,
    pub mu: usize,
    /// `A_j`, each `n × k_j`.
    pub a: Vec<Mat<T>>,
    pub a0: Mat<T>,
    /// `R_j`, each `k_j × n`.
    pub r: Vec<Mat<T>>,
    /// Whether `Ξ⁰` is a variable (otherwise it is fixed at zero).
    pub has_xi0: bool,
    /// Pairs `(s, z)`, `1 ≤ s < z ≤ M`, that carry a `Υ_{s,z}` variable.
    pub pairs: Vec<(usize, usize)>,
}

impl<T: Real> LmiStructure<T> {
    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    /// Side length of `Q`: `n + Σk_j + n`.
    pub fn q_dim(&self) -> usize {
        2 * self.n + self.sizes.iter().sum::<usize>()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.sizes.len() + 2);
        let mut acc = self.n;
        off.push(0);
        for &k in &self.sizes {
            off.push(acc);
            acc += k;
        }
        off.push(acc);
        off
    }

    /// Variable list in solver order: `P`, `Λ^j`, `Ξ⁰`, `Ξ^j`, `Υ_{0,j}`,
    /// `Υ_{s,z}`, `Φ`.
    pub fn variables(&self) -> Vec<Variable> {
        let n = self.n;
        let mut vars = Vec::new();
        let sym = |block, vars: &mut Vec<Variable>| {
            for col in 0..n {
                for row in 0..=col {
                    vars.push(Variable { block, row, col });
                }
            }
        };
        let diag = |block, k: usize, vars: &mut Vec<Variable>| {
            for i in 0..k {
                vars.push(Variable { block, row: i, col: i });
            }
        };
        sym(VarBlock::P, &mut vars);
        for (j, &k) in self.sizes.iter().enumerate() {
            diag(VarBlock::Lambda(j + 1), k, &mut vars);
        }
        if self.has_xi0 {
            diag(VarBlock::Xi(0), n, &mut vars);
        }
        for (j, &k) in self.sizes.iter().enumerate() {
            diag(VarBlock::Xi(j + 1), k, &mut vars);
        }
        for (j, &k) in self.sizes.iter().enumerate() {
            diag(VarBlock::Upsilon(0, j + 1), k, &mut vars);
        }
        for &(s, z) in &self.pairs {
            diag(VarBlock::Upsilon(s, z), self.sizes[s - 1], &mut vars);
        }
        sym(VarBlock::Phi, &mut vars);
        vars
    }

    pub fn zero_values(&self) -> LmiValues<T> {
        LmiValues {
            p: Mat::zeros(self.n, self.n),
            lambdas: self.sizes.iter().map(|&k| vec![T::zero(); k]).collect(),
            xi0: vec![T::zero(); self.n],
            xis: self.sizes.iter().map(|&k| vec![T::zero(); k]).collect(),
            upsilon0: self.sizes.iter().map(|&k| vec![T::zero(); k]).collect(),
            upsilons: self
                .pairs
                .iter()
                .map(|&(s, z)| ((s, z), vec![T::zero(); self.sizes[s - 1]]))
                .collect(),
            phi: Mat::zeros(self.n, self.n),
            rho: T::one(),
        }
    }

    /// Structured values from a solver vector (inverse of [`Self::pack`]).
    pub fn unpack(&self, z: &[T]) -> LmiValues<T> {
        let mut v = self.zero_values();
        for (var, &val) in self.variables().iter().zip(z) {
            v.set(var, val);
        }
        v
    }

    pub fn pack(&self, v: &LmiValues<T>) -> Vec<T> {
        self.variables().iter().map(|var| v.get(var)).collect()
    }

    /// `Q` from its block formulas.
    pub fn q_matrix(&self, v: &LmiValues<T>) -> Mat<T> {
        let mm = self.block_count();
        let off = self.offsets();
        let mut q = Mat::zeros(self.q_dim(), self.q_dim());
        let p = &v.p;
        let xi0 = Mat::diag(&v.xi0);
        // first block row
        let q11 = &(&(&self.a0.transpose() * p) + &(p * &self.a0)) + &xi0;
        q.set_block(0, 0, &q11);
        for j in 0..mm {
            let lam = Mat::diag(&v.lambdas[j]);
            let rt = self.r[j].transpose();
            let ups0 = Mat::diag(&v.upsilon0[j]);
            let blk = &(&(p * &self.a[j]) + &(&(&self.a0.transpose() * &rt) * &lam)) + &(&rt * &ups0);
            q.set_block(0, off[j + 1], &blk);
        }
        q.set_block(0, off[mm + 1], p);
        // nonlinearity rows
        for s in 0..mm {
            let lam_s = Mat::diag(&v.lambdas[s]);
            let rs_as = &self.r[s] * &self.a[s];
            let diag_blk = &(&(&rs_as.transpose() * &lam_s) + &(&lam_s * &rs_as)) + &Mat::diag(&v.xis[s]);
            q.set_block(off[s + 1], off[s + 1], &diag_blk);
            for z in s + 1..mm {
                let lam_z = Mat::diag(&v.lambdas[z]);
                let mut blk = &(&(&self.a[s].transpose() * &self.r[z].transpose()) * &lam_z)
                    + &(&(&lam_s * &self.r[s]) * &self.a[z]);
                if let Some(d) = v.upsilon(s + 1, z + 1) {
                    blk = &blk + &Mat::diag(d);
                }
                q.set_block(off[s + 1], off[z + 1], &blk);
            }
            q.set_block(off[s + 1], off[mm + 1], &(&lam_s * &self.r[s]));
        }
        q.set_block(off[mm + 1], off[mm + 1], &(-&v.phi));
        // mirror the upper triangle
        let d = q.rows();
        for c in 0..d {
            for r in c + 1..d {
                q[(r, c)] = q[(c, r)];
            }
        }
        q
    }

    /// `P + ρ Σ_{j≤μ} R_jᵀ Λ^j R_j`.
    pub fn positivity_matrix(&self, v: &LmiValues<T>) -> Mat<T> {
        let mut out = v.p.clone();
        for j in 0..self.mu {
            let lam = Mat::diag(&v.lambdas[j]);
            let term = &(&self.r[j].transpose() * &lam) * &self.r[j];
            out.axpy(v.rho, &term);
        }
        out.symmetrize()
    }

    /// `Ξ⁰ + Σ_{s≤φ} R_sᵀ(Ξ^s + 2Υ_{0,s} + 2Σ_{s<z≤φ} Υ_{s,z})R_s`.
    pub fn dissipation_matrix(&self, v: &LmiValues<T>) -> Mat<T> {
        let two = T::lit(2.0);
        let mut out = Mat::diag(&v.xi0);
        for s in 1..=self.phi {
            let mut d: Vec<T> = v.xis[s - 1]
                .iter()
                .zip(&v.upsilon0[s - 1])
                .map(|(&x, &u)| x + two * u)
                .collect();
            for z in s + 1..=self.phi {
                if let Some(u) = v.upsilon(s, z) {
                    for (di, &ui) in d.iter_mut().zip(u) {
                        *di += two * ui;
                    }
                }
            }
            let r = &self.r[s - 1];
            out = &out + &(&(&r.transpose() * &Mat::diag(&d)) * r);
        }
        out.symmetrize()
    }

    /// The named constraint matrix at `v`.
    pub fn constraint_value(&self, kind: ConstraintKind, v: &LmiValues<T>) -> Mat<T> {
        match kind {
            ConstraintKind::PsdP => v.p.clone(),
            ConstraintKind::Positivity => self.positivity_matrix(v),
            ConstraintKind::NegQ => -&self.q_matrix(v),
            ConstraintKind::Dissipation => self.dissipation_matrix(v),
            ConstraintKind::PhiPositive => v.phi.clone(),
            ConstraintKind::Nonnegative(i) => {
                let var = self.variables()[i];
                Mat::diag(&[v.get(&var)])
            }
        }
    }
}

/// Values of every variable block.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiValues<T> {
    pub p: Mat<T>,
    pub lambdas: Vec<Vec<T>>,
    /// Zero when `Ξ⁰` is not a variable.
    pub xi0: Vec<T>,
    pub xis: Vec<Vec<T>>,
    pub upsilon0: Vec<Vec<T>>,
    pub upsilons: Vec<((usize, usize), Vec<T>)>,
    pub phi: Mat<T>,
    pub rho: T,
}

impl<T: Real> LmiValues<T> {
    pub fn upsilon(&self, s: usize, z: usize) -> Option<&Vec<T>> {
        self.upsilons.iter().find(|(k, _)| *k == (s, z)).map(|(_, d)| d)
    }

    pub fn get(&self, var: &Variable) -> T {
        let (r, c) = (var.row, var.col);
        match var.block {
            VarBlock::P => self.p[(r, c)],
            VarBlock::Phi => self.phi[(r, c)],
            VarBlock::Lambda(j) => self.lambdas[j - 1][r],
            VarBlock::Xi(0) => self.xi0[r],
            VarBlock::Xi(j) => self.xis[j - 1][r],
            VarBlock::Upsilon(0, j) => self.upsilon0[j - 1][r],
            VarBlock::Upsilon(s, z) => self.upsilon(s, z).map_or(T::zero(), |d| d[r]),
        }
    }

    pub fn set(&mut self, var: &Variable, val: T) {
        let (r, c) = (var.row, var.col);
        match var.block {
            VarBlock::P => {
                self.p[(r, c)] = val;
                self.p[(c, r)] = val;
            }
            VarBlock::Phi => {
                self.phi[(r, c)] = val;
                self.phi[(c, r)] = val;
            }
            VarBlock::Lambda(j) => self.lambdas[j - 1][r] = val,
            VarBlock::Xi(0) => self.xi0[r] = val,
            VarBlock::Xi(j) => self.xis[j - 1][r] = val,
            VarBlock::Upsilon(0, j) => self.upsilon0[j - 1][r] = val,
            VarBlock::Upsilon(s, z) => {
                if let Some((_, d)) = self.upsilons.iter_mut().find(|(k, _)| *k == (s, z)) {
                    d[r] = val;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `P ⪰ 0`.
    PsdP,
    /// `P + ρΣΛ ≻ 0`.
    Positivity,
    /// `−Q ⪰ 0`.
    NegQ,
    /// `ΣΞ + 2ΣΥ ≻ 0`.
    Dissipation,
    /// `Φ ≻ 0`.
    PhiPositive,
    /// Sign constraint on variable `i`.
    Nonnegative(usize),
}

impl ConstraintKind {
    pub fn name(self) -> String {
        match self {
            ConstraintKind::PsdP => "P >= 0".into(),
            ConstraintKind::Positivity => "P + rho*sum(Lambda) > 0".into(),
            ConstraintKind::NegQ => "Q <= 0".into(),
            ConstraintKind::Dissipation => "sum(Xi) + 2*sum(Upsilon) > 0".into(),
            ConstraintKind::PhiPositive => "Phi > 0".into(),
            ConstraintKind::Nonnegative(i) => format!("nonnegative #{i}"),
        }
    }
}

/// `C₀ + Σ_i z_i C_i`; coefficient matrices that vanish are stored as `None`.
#[derive(Clone, Debug)]
pub struct AffineSym<T> {
    pub constant: Mat<T>,
    pub coeffs: Vec<Option<Mat<T>>>,
}

impl<T: Real> AffineSym<T> {
    pub fn dim(&self) -> usize {
        self.constant.rows()
    }

    pub fn eval(&self, z: &[T]) -> Mat<T> {
        let mut out = self.constant.clone();
        for (c, &zi) in self.coeffs.iter().zip(z) {
            if let Some(c) = c {
                out.axpy(zi, c);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct LmiConstraint<T> {
    pub kind: ConstraintKind,
    pub strict: bool,
    pub expr: AffineSym<T>,
}

impl<T: Real> LmiConstraint<T> {
    pub fn name(&self) -> String {
        self.kind.name()
    }
}

/// The full feasibility problem: every constraint requires its matrix to be
/// positive semidefinite (`strict`: positive definite), plus the homogeneous
/// normalization `trace(P) + ΣΛ + trace(Φ) = 1`.
#[derive(Clone, Debug)]
pub struct LmiProblem<T> {
    pub structure: LmiStructure<T>,
    pub variables: Vec<Variable>,
    pub constraints: Vec<LmiConstraint<T>>,
    /// Coefficients of the normalization row.
    pub pin: Vec<T>,
}

impl<T: Real> LmiProblem<T> {
    fn compile(structure: LmiStructure<T>) -> Self {
        let variables = structure.variables();
        let nv = variables.len();
        let mut kinds = vec![
            (ConstraintKind::PsdP, false),
            (ConstraintKind::Positivity, true),
            (ConstraintKind::NegQ, false),
            (ConstraintKind::Dissipation, true),
            (ConstraintKind::PhiPositive, true),
        ];
        for (i, v) in variables.iter().enumerate() {
            if v.is_nonnegative() {
                kinds.push((ConstraintKind::Nonnegative(i), false));
            }
        }
        let zero = structure.zero_values();
        let constraints = kinds
            .into_iter()
            .map(|(kind, strict)| {
                let constant = structure.constraint_value(kind, &zero);
                let coeffs = variables
                    .iter()
                    .map(|var| {
                        let mut v = zero.clone();
                        v.set(var, T::one());
                        let c = &structure.constraint_value(kind, &v) - &constant;
                        if c.max_abs() == T::zero() {
                            None
                        } else {
                            Some(c)
                        }
                    })
                    .collect();
                LmiConstraint { kind, strict, expr: AffineSym { constant, coeffs } }
            })
            .collect();
        let pin = variables
            .iter()
            .map(|v| match v.block {
                VarBlock::P | VarBlock::Phi if v.row == v.col => T::one(),
                VarBlock::Lambda(_) => T::one(),
                _ => T::zero(),
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(pin.len(), nv);
        LmiProblem { structure, variables, constraints, pin }
    }

    pub fn path(&self) -> LmiPath {
        self.structure.path
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn constraint(&self, kind: ConstraintKind) -> Option<&LmiConstraint<T>> {
        self.constraints.iter().find(|c| c.kind == kind)
    }

    /// Constraint matrices at the given values, from the block formulas.
    pub fn evaluate(&self, v: &LmiValues<T>) -> Vec<(ConstraintKind, Mat<T>)> {
        self.constraints
            .iter()
            .map(|c| (c.kind, self.structure.constraint_value(c.kind, v)))
            .collect()
    }
}

/// Plain inequalities for `ẋ = Σ Γ_j f_j(x) + Bu` (plus an optional
/// constant drift, absorbed into the input term).
pub fn assemble_plain<T: Real>(model: &PersidskiiModel<T>) -> Result<LmiProblem<T>, IssError> {
    if model.a0.is_some() || model.ext.r.is_some() {
        return Err(IssError::Config(
            "the plain inequalities need a model without A0 or variable changes; use the extended path".into(),
        ));
    }
    let sbfs = &model.sbfs;
    if sbfs.phi() == 0 {
        return Err(IssError::Hypothesis(
            "at least one nonlinearity block must be radially unbounded (phi >= 1)".into(),
        ));
    }
    let n = model.n;
    let mm = model.block_count();
    let pairs = (1..=mm).flat_map(|s| (s + 1..=mm).map(move |z| (s, z))).collect();
    let structure = LmiStructure {
        path: LmiPath::Plain,
        n,
        sizes: vec![n; mm],
        phi: sbfs.phi(),
        mu: sbfs.mu(),
        a: model.gammas.clone(),
        a0: Mat::zeros(n, n),
        r: vec![Mat::identity(n); mm],
        has_xi0: false,
        pairs,
    };
    Ok(LmiProblem::compile(structure))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExtendedOptions {
    /// Fix `Ξ⁰ = 0` instead of treating it as a variable.
    pub pin_xi0: bool,
}


/// Inequalities for `ẋ = A₀x + Σ A_j F_j(R_j x) + w`. A missing `A₀` is
/// zero and missing `R_j` are identities. `Υ_{s,z}` couples blocks `s` and
/// `z` only when they share the same argument (`R_s = R_z`).
pub fn assemble_extended<T: Real>(
    model: &PersidskiiModel<T>,
    opts: ExtendedOptions,
) -> Result<LmiProblem<T>, IssError> {
    let sbfs = &model.sbfs;
    if sbfs.phi() == 0 {
        return Err(IssError::Hypothesis(
            "at least one nonlinearity block must be radially unbounded (phi >= 1)".into(),
        ));
    }
    let n = model.n;
    let sizes = sbfs.block_sizes();
    let mm = sizes.len();
    let r: Vec<Mat<T>> = match &model.ext.r {
        Some(rs) => rs.clone(),
        None => vec![Mat::identity(n); mm],
    };
    for (j, (rj, &k)) in r.iter().zip(&sizes).enumerate() {
        if rj.shape() != (k, n) {
            return Err(IssError::Config(format!(
                "R_{} is {}x{}, expected {k}x{n}",
                j + 1,
                rj.rows(),
                rj.cols()
            )));
        }
        if model.gammas[j].shape() != (n, k) {
            return Err(IssError::Config(format!("A_{} must be {n}x{k}", j + 1)));
        }
    }
    let a0 = model.a0.clone().unwrap_or_else(|| Mat::zeros(n, n));
    let pairs = (1..=mm)
        .flat_map(|s| (s + 1..=mm).map(move |z| (s, z)))
        .filter(|&(s, z)| r[s - 1] == r[z - 1])
        .collect();
    let structure = LmiStructure {
        path: LmiPath::Extended,
        n,
        sizes,
        phi: sbfs.phi(),
        mu: sbfs.mu(),
        a: model.gammas.clone(),
        a0,
        r,
        has_xi0: !opts.pin_xi0,
        pairs,
    };
    Ok(LmiProblem::compile(structure))
}

/// Picks the path from the model's form.
pub fn assemble<T: Real>(model: &PersidskiiModel<T>) -> Result<LmiProblem<T>, IssError> {
    if model.is_plain() {
        assemble_plain(model)
    } else {
        assemble_extended(model, ExtendedOptions::default())
    }
}
