//! Sector basis functions, the basis map `G(χ)` and the lifting map `P(χ)`.
//!
//! `χ = (x, u) ∈ ℝ^{n+m}`. The basis has `N_F = Σ_j k_j + m` entries: block
//! `j` contributes `f_j^1((R_j x)_1) … f_j^{k_j}((R_j x)_{k_j})` (with
//! `R_j = I`, `k_j = n` unless a variable change is configured), followed by
//! the `m` input coordinates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matlib::{LinalgError, Mat, Svd};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DictError {
    #[error("unknown basis function {0:?}")]
    UnknownFunction(String),
    #[error("{function} is not finite at {point}")]
    Evaluation { function: String, point: String },
    #[error("{function} violates the sector condition: {reason}")]
    Sector { function: String, reason: String },
    #[error("lifting functions are linearly dependent: {function} lies in the span of the preceding ones (rank {rank} of {count})")]
    RankDeficient { function: String, rank: usize, count: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Scalar1<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Identity,
    Tanh,
    Cube,
    Arctan,
    SigmoidCentered,
    OddRelu,
    SignedSquare,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::Identity,
        Builtin::Tanh,
        Builtin::Cube,
        Builtin::Arctan,
        Builtin::SigmoidCentered,
        Builtin::OddRelu,
        Builtin::SignedSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Identity => "identity",
            Builtin::Tanh => "tanh",
            Builtin::Cube => "cube",
            Builtin::Arctan => "arctan",
            Builtin::SigmoidCentered => "sigmoid_centered",
            Builtin::OddRelu => "odd_relu",
            Builtin::SignedSquare => "signed_square",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    fn eval<T: Real>(self, v: T) -> T {
        let half = T::lit(0.5);
        match self {
            Builtin::Identity => v,
            Builtin::Tanh => v.tanh(),
            Builtin::Cube => v * v * v,
            Builtin::Arctan => v.atan(),
            Builtin::SigmoidCentered => half * (half * v).tanh(),
            Builtin::OddRelu => v.max(T::zero()) - (-v).max(T::zero()),
            Builtin::SignedSquare => v * v.abs(),
        }
    }

    fn deriv<T: Real>(self, v: T) -> T {
        let one = T::one();
        match self {
            Builtin::Identity | Builtin::OddRelu => one,
            Builtin::Tanh => {
                let t = v.tanh();
                one - t * t
            }
            Builtin::Cube => T::lit(3.0) * v * v,
            Builtin::Arctan => one / (one + v * v),
            Builtin::SigmoidCentered => {
                let t = (T::lit(0.5) * v).tanh();
                T::lit(0.25) * (one - t * t)
            }
            Builtin::SignedSquare => T::lit(2.0) * v.abs(),
        }
    }

    /// `∫₀^v f`.
    fn primitive<T: Real>(self, v: T) -> T {
        let half = T::lit(0.5);
        let a = v.abs();
        // ln cosh(a) and the softplus offset written to avoid overflow.
        let ln_cosh = |a: T| a + (-(a + a)).exp().ln_1p() - T::lit(std::f64::consts::LN_2);
        match self {
            Builtin::Identity | Builtin::OddRelu => half * v * v,
            Builtin::Tanh => ln_cosh(a),
            Builtin::Cube => T::lit(0.25) * v * v * v * v,
            Builtin::Arctan => v * v.atan() - half * (v * v).ln_1p(),
            // σ(v) − ½ = ½ tanh(v/2), so the primitive is ln cosh(v/2).
            Builtin::SigmoidCentered => ln_cosh(half * a),
            Builtin::SignedSquare => a * a * a / T::lit(3.0),
        }
    }

    fn flags(self) -> (bool, bool) {
        match self {
            Builtin::Identity | Builtin::Cube | Builtin::OddRelu | Builtin::SignedSquare => (true, true),
            Builtin::Tanh | Builtin::Arctan | Builtin::SigmoidCentered => (false, true),
        }
    }
}

#[derive(Clone)]
enum FnKind<T> {
    Builtin(Builtin),
    Custom {
        f: Scalar1<T>,
        df: Option<Scalar1<T>>,
        prim: Option<Scalar1<T>>,
    },
}

/// Scalar function with derivative, primitive and growth metadata.
///
/// `radially_unbounded` means `|f(ν)| → ∞` as `|ν| → ∞`; `primitive_unbounded`
/// means `∫₀^ν f → ∞`. Built-ins carry analytic flags; custom functions
/// default to `false` for both until asserted with [`ScalarFn::with_flags`].
#[derive(Clone)]
pub struct ScalarFn<T> {
    name: String,
    kind: FnKind<T>,
    pub radially_unbounded: bool,
    pub primitive_unbounded: bool,
}

impl<T: Real> ScalarFn<T> {
    pub fn builtin(b: Builtin) -> Self {
        let (ru, pu) = b.flags();
        ScalarFn {
            name: b.name().to_string(),
            kind: FnKind::Builtin(b),
            radially_unbounded: ru,
            primitive_unbounded: pu,
        }
    }

    pub fn named(name: &str) -> Result<Self, DictError> {
        Builtin::from_name(name)
            .map(Self::builtin)
            .ok_or_else(|| DictError::UnknownFunction(name.to_string()))
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        ScalarFn {
            name: name.into(),
            kind: FnKind::Custom {
                f: Arc::new(f),
                df: None,
                prim: None,
            },
            radially_unbounded: false,
            primitive_unbounded: false,
        }
    }

    pub fn with_derivative(mut self, d: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        if let FnKind::Custom { df, .. } = &mut self.kind {
            *df = Some(Arc::new(d));
        }
        self
    }

    pub fn with_primitive(mut self, p: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        if let FnKind::Custom { prim, .. } = &mut self.kind {
            *prim = Some(Arc::new(p));
        }
        self
    }

    pub fn with_flags(mut self, radially_unbounded: bool, primitive_unbounded: bool) -> Self {
        self.radially_unbounded = radially_unbounded;
        self.primitive_unbounded = primitive_unbounded;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn as_builtin(&self) -> Option<Builtin> {
        match self.kind {
            FnKind::Builtin(b) => Some(b),
            FnKind::Custom { .. } => None,
        }
    }

    pub fn eval(&self, v: T) -> T {
        match &self.kind {
            FnKind::Builtin(b) => b.eval(v),
            FnKind::Custom { f, .. } => f(v),
        }
    }

    /// Analytic derivative when known, central differences otherwise.
    pub fn deriv(&self, v: T) -> T {
        match &self.kind {
            FnKind::Builtin(b) => b.deriv(v),
            FnKind::Custom { df: Some(d), .. } => d(v),
            FnKind::Custom { f, .. } => {
                let h = T::lit(1e-6) * T::one().max(v.abs());
                (f(v + h) - f(v - h)) / (h + h)
            }
        }
    }

    pub fn has_analytic_primitive(&self) -> bool {
        matches!(self.kind, FnKind::Builtin(_) | FnKind::Custom { prim: Some(_), .. })
    }

    /// `∫₀^v f`, analytic when known, adaptive Simpson (tolerance `1e-10`)
    /// otherwise.
    pub fn primitive(&self, v: T) -> T {
        match &self.kind {
            FnKind::Builtin(b) => b.primitive(v),
            FnKind::Custom { prim: Some(p), .. } => p(v),
            FnKind::Custom { f, .. } => adaptive_simpson(|s| f(s), T::zero(), v, T::lit(1e-10)),
        }
    }
}

impl<T> fmt::Debug for ScalarFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ScalarFn({}, ru={}, pu={})",
            self.name, self.radially_unbounded, self.primitive_unbounded
        )
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<T: Real>(f: impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    fn step<T: Real>(
        f: &impl Fn(T) -> T,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        tol: T,
        depth: u32,
    ) -> T {
        let two = T::lit(2.0);
        let m = (a + b) / two;
        let lm = (a + m) / two;
        let rm = (m + b) / two;
        let flm = f(lm);
        let frm = f(rm);
        let six = T::lit(6.0);
        let left = (m - a) / six * (fa + T::lit(4.0) * flm + fm);
        let right = (b - m) / six * (fm + T::lit(4.0) * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
            return left + right + delta / T::lit(15.0);
        }
        step(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
    }
    if a == b {
        return T::zero();
    }
    let (fa, fb) = (f(a), f(b));
    let m = (a + b) / T::lit(2.0);
    let fm = f(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Outcome of [`validate_sbf`]. The growth estimates are diagnostics from the
/// grid, not proofs.
#[derive(Clone, Debug, PartialEq)]
pub struct SbfReport {
    pub name: String,
    pub passed: bool,
    pub value_at_zero: f64,
    /// First grid point where `ν·f(ν) ≤ 0`, if any.
    pub violation: Option<f64>,
    pub radially_unbounded_estimate: bool,
    pub primitive_unbounded_estimate: bool,
}

/// 200 log-spaced points per sign over `[1e-6, 1e3]`.
pub fn default_grid<T: Real>() -> Vec<T> {
    log_grid(1e-6, 1e3, 200)
}

pub fn log_grid<T: Real>(lo: f64, hi: f64, per_sign: usize) -> Vec<T> {
    let (a, b) = (lo.ln(), hi.ln());
    let pos: Vec<f64> = (0..per_sign)
        .map(|k| (a + (b - a) * k as f64 / (per_sign.max(2) - 1) as f64).exp())
        .collect();
    pos.iter()
        .rev()
        .map(|&v| T::lit(-v))
        .chain(pos.iter().map(|&v| T::lit(v)))
        .collect()
}

/// Checks `f(0) = 0` (within `1e-12`) and `ν·f(ν) > 0` on the grid.
pub fn validate_sbf<T: Real>(f: &ScalarFn<T>, grid: &[T]) -> Result<SbfReport, DictError> {
    let eval = |v: T| {
        let y = f.eval(v);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(DictError::Evaluation {
                function: f.name().to_string(),
                point: format!("{v}"),
            })
        }
    };
    let f0 = eval(T::zero())?;
    let mut violation = None;
    for &v in grid.iter().filter(|v| **v != T::zero()) {
        if !(v * eval(v)? > T::zero()) && violation.is_none() {
            violation = Some(v.as_f64());
        }
    }
    let outer = grid.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let inner = outer / T::lit(10.0);
    let mut ru = outer > T::zero();
    let mut pu = outer > T::zero();
    for sign in [T::one(), -T::one()] {
        let (a, b) = (sign * inner, sign * outer);
        ru &= eval(b)?.abs() > T::lit(2.0) * eval(a)?.abs();
        let pa = trapezoid(&eval, a)?;
        let pb = trapezoid(&eval, b)?;
        pu &= pb > T::lit(2.0) * pa;
    }
    Ok(SbfReport {
        name: f.name().to_string(),
        passed: f0.abs() <= T::lit(1e-12) && violation.is_none(),
        value_at_zero: f0.as_f64(),
        violation,
        radially_unbounded_estimate: ru,
        primitive_unbounded_estimate: pu,
    })
}

fn trapezoid<T: Real>(eval: &impl Fn(T) -> Result<T, DictError>, end: T) -> Result<T, DictError> {
    let steps = 2000;
    let h = end / T::from_count(steps);
    let mut acc = T::zero();
    let mut prev = eval(T::zero())?;
    for k in 1..=steps {
        let cur = eval(h * T::from_count(k))?;
        acc += T::lit(0.5) * h * (prev + cur);
        prev = cur;
    }
    Ok(acc)
}

/// The `M` nonlinearity blocks. Block `j` holds `k_j` scalar functions
/// (`k_j = n` without a variable change). Blocks are kept ordered so that the
/// first `φ` are radially unbounded and the first `μ` have unbounded
/// primitives.
#[derive(Clone, Debug)]
pub struct SbfSet<T> {
    blocks: Vec<Vec<ScalarFn<T>>>,
    phi: usize,
    mu: usize,
    /// `order[j]` is the caller's index of the block now at position `j`.
    order: Vec<usize>,
}

impl<T: Real> SbfSet<T> {
    /// Validates every entry on the default grid and reorders blocks by
    /// growth class. A block counts as radially unbounded (resp. primitive
    /// unbounded) when all of its entries are flagged so.
    pub fn new(blocks: Vec<Vec<ScalarFn<T>>>) -> Result<Self, DictError> {
        Self::with_grid(blocks, &default_grid())
    }

    pub fn with_grid(blocks: Vec<Vec<ScalarFn<T>>>, grid: &[T]) -> Result<Self, DictError> {
        if blocks.iter().any(Vec::is_empty) {
            return Err(DictError::Config("empty nonlinearity block".into()));
        }
        for f in blocks.iter().flatten() {
            let rep = validate_sbf(f, grid)?;
            if !rep.passed {
                let reason = match rep.violation {
                    Some(v) => format!("ν·f(ν) ≤ 0 at ν = {v}"),
                    None => format!("f(0) = {}", rep.value_at_zero),
                };
                return Err(DictError::Sector {
                    function: f.name().to_string(),
                    reason,
                });
            }
        }
        let class = |b: &Vec<ScalarFn<T>>| {
            let ru = b.iter().all(|f| f.radially_unbounded);
            let pu = ru || b.iter().all(|f| f.primitive_unbounded);
            match (ru, pu) {
                (true, _) => 0,
                (false, true) => 1,
                _ => 2,
            }
        };
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by_key(|&j| class(&blocks[j]));
        let phi = blocks.iter().filter(|b| class(b) == 0).count();
        let mu = blocks.iter().filter(|b| class(b) <= 1).count();
        let mut slots: Vec<Option<Vec<ScalarFn<T>>>> = blocks.into_iter().map(Some).collect();
        let blocks = order.iter().map(|&j| slots[j].take().unwrap()).collect();
        Ok(SbfSet { blocks, phi, mu, order })
    }

    /// Each block applies one named function to every one of `n` coordinates.
    pub fn uniform(names: &[&str], n: usize) -> Result<Self, DictError> {
        let blocks = names
            .iter()
            .map(|name| (0..n).map(|_| ScalarFn::named(name)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(blocks)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, j: usize) -> &[ScalarFn<T>] {
        &self.blocks[j]
    }

    pub fn blocks(&self) -> &[Vec<ScalarFn<T>>] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn phi(&self) -> usize {
        self.phi
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn was_reordered(&self) -> bool {
        self.order.iter().enumerate().any(|(a, &b)| a != b)
    }

    /// Names per block, in the current order.
    pub fn names(&self) -> Vec<Vec<String>> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|f| f.name().to_string()).collect())
            .collect()
    }

    /// Rebuilds a set from built-in names (used when importing models).
    pub fn from_names(names: &[Vec<String>]) -> Result<Self, DictError> {
        let blocks = names
            .iter()
            .map(|b| b.iter().map(|n| ScalarFn::named(n)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(blocks)
    }

    /// `F_j(ν)` for block `j`, elementwise.
    pub fn eval_block(&self, j: usize, v: &[T]) -> Vec<T> {
        self.blocks[j].iter().zip(v).map(|(f, &a)| f.eval(a)).collect()
    }
}

/// Translation offsets and variable changes per block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtensionTransform<T> {
    /// `ℓ_j ∈ ℝ^{k_j}`: the basis evaluates `F_j + ℓ_j`.
    pub offsets: Option<Vec<Vec<T>>>,
    /// `R_j ∈ ℝ^{k_j×n}`: block `j` is evaluated at `R_j x`.
    pub r: Option<Vec<Mat<T>>>,
}

impl<T: Real> ExtensionTransform<T> {
    pub fn is_identity(&self, n: usize) -> bool {
        let zero_offsets = self
            .offsets
            .as_ref()
            .map_or(true, |o| o.iter().flatten().all(|v| *v == T::zero()));
        let unit_r = self
            .r
            .as_ref()
            .map_or(true, |rs| rs.iter().all(|r| *r == Mat::identity(n)));
        zero_offsets && unit_r
    }

    pub fn validate(&self, sbfs: &SbfSet<T>, n: usize) -> Result<(), DictError> {
        let sizes = sbfs.block_sizes();
        if let Some(rs) = &self.r {
            if rs.len() != sizes.len() {
                return Err(DictError::Config(format!(
                    "{} variable-change matrices for {} blocks",
                    rs.len(),
                    sizes.len()
                )));
            }
            for (j, (r, &k)) in rs.iter().zip(&sizes).enumerate() {
                if r.shape() != (k, n) {
                    return Err(DictError::Config(format!(
                        "R_{} is {}x{}, block has {k} functions on {n} states",
                        j + 1,
                        r.rows(),
                        r.cols()
                    )));
                }
            }
        } else if sizes.iter().any(|&k| k != n) {
            return Err(DictError::Config(
                "blocks with fewer or more than n functions require variable-change matrices".into(),
            ));
        }
        if let Some(off) = &self.offsets {
            if off.len() != sizes.len() || off.iter().zip(&sizes).any(|(o, &k)| o.len() != k) {
                return Err(DictError::Config("offset vectors do not match block sizes".into()));
            }
        }
        Ok(())
    }

    /// Argument of block `j`: `R_j x`, or `x` itself.
    pub fn block_argument(&self, j: usize, x: &[T]) -> Vec<T> {
        match &self.r {
            Some(rs) => rs[j].mul_vec(x),
            None => x.to_vec(),
        }
    }

    pub fn offset(&self, j: usize, i: usize) -> T {
        self.offsets.as_ref().map_or(T::zero(), |o| o[j][i])
    }
}

/// Splits `g` into its sector part `g − g(0)` and the constant `g(0)`.
pub fn split_offset<T: Real>(g: ScalarFn<T>) -> (ScalarFn<T>, T) {
    let c = g.eval(T::zero());
    let name = format!("{}-offset", g.name());
    let (ru, pu) = (g.radially_unbounded, g.primitive_unbounded);
    let inner = g.clone();
    let dg = g.clone();
    let part = ScalarFn::custom(name, move |v| inner.eval(v) - c)
        .with_derivative(move |v| dg.deriv(v))
        .with_flags(ru, pu);
    (part, c)
}

/// One lifting function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Lift {
    /// `Π_i χ_i^{e_i}`.
    Monomial(Vec<u32>),
    /// The basis entry `G_j` (0-based).
    Basis(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiftingSpec {
    pub degree: u32,
    pub include_basis: bool,
}

impl Default for LiftingSpec {
    fn default() -> Self {
        LiftingSpec {
            degree: 3,
            include_basis: true,
        }
    }
}

/// Basis and lifting maps over `χ = (x, u)`.
#[derive(Clone, Debug)]
pub struct Dictionary<T> {
    n: usize,
    m: usize,
    sbfs: SbfSet<T>,
    ext: ExtensionTransform<T>,
    lifting: Vec<Lift>,
    names: Vec<String>,
    /// Basis entry `b` ↦ (block, coordinate within block).
    basis_index: Vec<(usize, usize)>,
}

/// Seed of the sample used for duplicate removal and the rank check.
const RANK_CHECK_SEED: u64 = 0x5eed_1a7e;

pub fn build_dictionary<T: Real>(
    sbfs: SbfSet<T>,
    n: usize,
    m: usize,
    spec: LiftingSpec,
    ext: Option<ExtensionTransform<T>>,
) -> Result<Dictionary<T>, DictError> {
    if spec.degree < 1 {
        return Err(DictError::Config("monomial degree bound must be at least 1".into()));
    }
    let ext = ext.unwrap_or_default();
    ext.validate(&sbfs, n)?;
    let basis_index = sbfs
        .block_sizes()
        .iter()
        .enumerate()
        .flat_map(|(j, &k)| (0..k).map(move |i| (j, i)))
        .collect();
    let mut dict = Dictionary {
        n,
        m,
        sbfs,
        ext,
        lifting: Vec::new(),
        names: Vec::new(),
        basis_index,
    };
    let mut candidates: Vec<Lift> = monomials(n + m, spec.degree).into_iter().map(Lift::Monomial).collect();
    if spec.include_basis {
        candidates.extend((0..dict.basis_len()).map(Lift::Basis));
    }

    let samples = dict.rank_sample(10 * candidates.len());
    let columns: Vec<Vec<T>> = candidates
        .iter()
        .map(|l| samples.iter().map(|chi| dict.eval_lift(l, chi)).collect())
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for (c, col) in columns.iter().enumerate() {
        let duplicate = kept.iter().any(|&k| {
            columns[k]
                .iter()
                .zip(col)
                .all(|(a, b)| (*a - *b).abs() <= T::lit(1e-12) * T::one().max(a.abs()))
        });
        if !duplicate {
            kept.push(c);
        }
    }
    dict.lifting = kept.iter().map(|&c| candidates[c].clone()).collect();
    dict.names = dict.lifting.iter().map(|l| dict.lift_name(l)).collect();
    dict.check_independence()?;
    Ok(dict)
}

/// Exponent vectors of all monomials in `dims` variables with total degree
/// `1..=degree`, graded then reverse-lexicographic.
fn monomials(dims: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(dims: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dims - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(dims, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dims == 0 {
        return out;
    }
    for d in 1..=degree {
        rec(dims, d, &mut Vec::new(), &mut out);
    }
    out
}

impl<T: Real> Dictionary<T> {
    /// Builds a dictionary from an explicit lifting list (no deduplication;
    /// the rank check still applies).
    pub fn with_lifting(
        sbfs: SbfSet<T>,
        n: usize,
        m: usize,
        lifting: Vec<Lift>,
        ext: Option<ExtensionTransform<T>>,
    ) -> Result<Self, DictError> {
        let ext = ext.unwrap_or_default();
        ext.validate(&sbfs, n)?;
        let basis_index: Vec<(usize, usize)> = sbfs
            .block_sizes()
            .iter()
            .enumerate()
            .flat_map(|(j, &k)| (0..k).map(move |i| (j, i)))
            .collect();
        for l in &lifting {
            match l {
                Lift::Monomial(e) if e.len() != n + m || e.iter().all(|&p| p == 0) => {
                    return Err(DictError::Config(format!("bad monomial exponents {e:?}")));
                }
                Lift::Basis(b) if *b >= basis_index.len() + m => {
                    return Err(DictError::Config(format!("basis index {b} out of range")));
                }
                _ => {}
            }
        }
        let mut dict = Dictionary {
            n,
            m,
            sbfs,
            ext,
            lifting,
            names: Vec::new(),
            basis_index,
        };
        dict.names = dict.lifting.iter().map(|l| dict.lift_name(l)).collect();
        dict.check_independence()?;
        Ok(dict)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn sbfs(&self) -> &SbfSet<T> {
        &self.sbfs
    }

    pub fn extension(&self) -> &ExtensionTransform<T> {
        &self.ext
    }

    /// `N_F`.
    pub fn basis_len(&self) -> usize {
        self.basis_index.len() + self.m
    }

    /// `N_H`.
    pub fn lifting_len(&self) -> usize {
        self.lifting.len()
    }

    pub fn lifting(&self) -> &[Lift] {
        &self.lifting
    }

    pub fn lifting_names(&self) -> &[String] {
        &self.names
    }

    pub fn basis_names(&self) -> Vec<String> {
        (0..self.basis_len()).map(|b| self.basis_name(b)).collect()
    }

    fn basis_name(&self, b: usize) -> String {
        match self.basis_index.get(b) {
            Some(&(j, i)) => {
                let f = self.sbfs.block(j)[i].name();
                match &self.ext.r {
                    Some(_) => format!("{f}((R{} x)_{})", j + 1, i + 1),
                    None => format!("{f}(x{})", i + 1),
                }
            }
            None => format!("u{}", b - self.basis_index.len() + 1),
        }
    }

    fn lift_name(&self, l: &Lift) -> String {
        match l {
            Lift::Basis(b) => self.basis_name(*b),
            Lift::Monomial(e) => e
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(v, &p)| {
                    let var = if v < self.n {
                        format!("x{}", v + 1)
                    } else {
                        format!("u{}", v - self.n + 1)
                    };
                    if p == 1 {
                        var
                    } else {
                        format!("{var}^{p}")
                    }
                })
                .collect::<Vec<_>>()
                .join("*"),
        }
    }

    fn basis_entry(&self, b: usize, chi: &[T]) -> T {
        match self.basis_index.get(b) {
            Some(&(j, i)) => {
                let arg = match &self.ext.r {
                    Some(rs) => (0..self.n).map(|c| rs[j][(i, c)] * chi[c]).sum(),
                    None => chi[i],
                };
                self.sbfs.block(j)[i].eval(arg) + self.ext.offset(j, i)
            }
            None => chi[self.n + b - self.basis_index.len()],
        }
    }

    fn basis_entry_partial(&self, b: usize, chi: &[T], coord: usize) -> T {
        match self.basis_index.get(b) {
            Some(&(j, i)) => {
                if coord >= self.n {
                    return T::zero();
                }
                let (arg, darg) = match &self.ext.r {
                    Some(rs) => ((0..self.n).map(|c| rs[j][(i, c)] * chi[c]).sum(), rs[j][(i, coord)]),
                    None => (chi[i], if coord == i { T::one() } else { T::zero() }),
                };
                if darg == T::zero() {
                    T::zero()
                } else {
                    self.sbfs.block(j)[i].deriv(arg) * darg
                }
            }
            None => {
                if coord == self.n + b - self.basis_index.len() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    fn eval_lift(&self, l: &Lift, chi: &[T]) -> T {
        match l {
            Lift::Basis(b) => self.basis_entry(*b, chi),
            Lift::Monomial(e) => e
                .iter()
                .zip(chi)
                .fold(T::one(), |acc, (&p, &v)| if p == 0 { acc } else { acc * v.powi(p as i32) }),
        }
    }

    fn lift_partial(&self, l: &Lift, chi: &[T], coord: usize) -> T {
        match l {
            Lift::Basis(b) => self.basis_entry_partial(*b, chi, coord),
            Lift::Monomial(e) => {
                let p = e[coord];
                if p == 0 {
                    return T::zero();
                }
                let mut acc = T::from_count(p as usize) * chi[coord].powi(p as i32 - 1);
                for (v, (&q, &c)) in e.iter().zip(chi).enumerate() {
                    if v != coord && q > 0 {
                        acc *= c.powi(q as i32);
                    }
                }
                acc
            }
        }
    }

    fn chi(&self, x: &[T], u: &[T]) -> Result<Vec<T>, DictError> {
        if x.len() != self.n || u.len() != self.m {
            return Err(DictError::Config(format!(
                "point has dimensions ({}, {}), dictionary expects ({}, {})",
                x.len(),
                u.len(),
                self.n,
                self.m
            )));
        }
        Ok(x.iter().chain(u).copied().collect())
    }

    fn finite(&self, v: Vec<T>, what: &str, chi: &[T]) -> Result<Vec<T>, DictError> {
        match v.iter().position(|a| !a.is_finite()) {
            None => Ok(v),
            Some(k) => Err(DictError::Evaluation {
                function: format!("{what}[{k}]"),
                point: format!("{chi:?}"),
            }),
        }
    }

    /// `G(x, u)`.
    pub fn eval_g(&self, x: &[T], u: &[T]) -> Result<Vec<T>, DictError> {
        let chi = self.chi(x, u)?;
        let v = (0..self.basis_len()).map(|b| self.basis_entry(b, &chi)).collect();
        self.finite(v, "G", &chi)
    }

    /// `P(x, u)`.
    pub fn eval_p(&self, x: &[T], u: &[T]) -> Result<Vec<T>, DictError> {
        let chi = self.chi(x, u)?;
        self.eval_p_chi(&chi)
    }

    pub fn eval_p_chi(&self, chi: &[T]) -> Result<Vec<T>, DictError> {
        let v = self.lifting.iter().map(|l| self.eval_lift(l, chi)).collect();
        self.finite(v, "P", chi)
    }

    pub fn eval_g_chi(&self, chi: &[T]) -> Result<Vec<T>, DictError> {
        let v = (0..self.basis_len()).map(|b| self.basis_entry(b, chi)).collect();
        self.finite(v, "G", chi)
    }

    /// `(∂P_l/∂χ_coord)_l` with `coord` 0-based over `χ = (x, u)`.
    pub fn eval_dp(&self, x: &[T], u: &[T], coord: usize) -> Result<Vec<T>, DictError> {
        let chi = self.chi(x, u)?;
        self.eval_dp_chi(&chi, coord)
    }

    pub fn eval_dp_chi(&self, chi: &[T], coord: usize) -> Result<Vec<T>, DictError> {
        if coord >= self.n + self.m {
            return Err(DictError::Config(format!("coordinate {coord} out of range")));
        }
        let v = self.lifting.iter().map(|l| self.lift_partial(l, chi, coord)).collect();
        self.finite(v, "dP", chi)
    }

    fn rank_sample(&self, count: usize) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(RANK_CHECK_SEED);
        (0..count)
            .map(|_| (0..self.n + self.m).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect())
            .collect()
    }

    /// Gram-rank check on `10·N_H` seeded points in `[-1, 1]^{n+m}`; on
    /// failure names the first function that does not raise the rank.
    fn check_independence(&self) -> Result<(), DictError> {
        let nh = self.lifting.len();
        if nh == 0 {
            return Err(DictError::Config("empty lifting list".into()));
        }
        let samples = self.rank_sample(10 * nh);
        let rows: Vec<Vec<T>> = samples
            .iter()
            .map(|chi| self.eval_p_chi(chi))
            .collect::<Result<_, _>>()?;
        let data = Mat::from_rows(&rows)?;
        let rank_of = |cols: usize| -> Result<usize, DictError> {
            let sub = data.block(0, 0, data.rows(), cols);
            let svd = Svd::new(&sub)?;
            let tol = svd.default_tolerance().max(T::lit(1e-10) * svd.singular_values[0]);
            Ok(svd.rank(tol))
        };
        if rank_of(nh)? == nh {
            return Ok(());
        }
        for c in 1..=nh {
            let r = rank_of(c)?;
            if r < c {
                return Err(DictError::RankDeficient {
                    function: self.names[c - 1].clone(),
                    rank: r,
                    count: c,
                });
            }
        }
        unreachable!("full prefix ranks imply full rank")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh() -> ScalarFn<f64> {
        ScalarFn::builtin(Builtin::Tanh)
    }

    #[test]
    fn sector_validation_of_builtins() {
        let grid = default_grid::<f64>();
        let r = validate_sbf(&tanh(), &grid).unwrap();
        assert!(r.passed);
        assert!(!r.radially_unbounded_estimate);
        assert!(r.primitive_unbounded_estimate);
        let r = validate_sbf(&ScalarFn::<f64>::builtin(Builtin::Identity), &grid).unwrap();
        assert!(r.passed && r.radially_unbounded_estimate && r.primitive_unbounded_estimate);
        for b in Builtin::ALL {
            assert!(validate_sbf(&ScalarFn::<f64>::builtin(b), &grid).unwrap().passed, "{}", b.name());
        }
    }

    #[test]
    fn sector_validation_rejects_non_sector_functions() {
        let grid = default_grid::<f64>();
        for f in [
            ScalarFn::custom("shifted", |v: f64| v - 1.0),
            ScalarFn::custom("constant", |_: f64| 2.0),
            ScalarFn::custom("cos", f64::cos),
        ] {
            assert!(!validate_sbf(&f, &grid).unwrap().passed, "{}", f.name());
        }
        let nan = ScalarFn::custom("nan", |v: f64| if v > 1.0 { f64::NAN } else { v });
        assert!(matches!(validate_sbf(&nan, &grid), Err(DictError::Evaluation { .. })));
    }

    #[test]
    fn builtin_derivatives_and_primitives_match_numerics() {
        for b in Builtin::ALL {
            let f = ScalarFn::<f64>::builtin(b);
            for &v in &[-2.3, -0.4, 0.7, 1.9] {
                let h = 1e-6;
                let fd = (f.eval(v + h) - f.eval(v - h)) / (2.0 * h);
                assert!((fd - f.deriv(v)).abs() < 1e-6, "{} at {v}", b.name());
                let q = adaptive_simpson(|s| f.eval(s), 0.0, v, 1e-12);
                assert!((q - f.primitive(v)).abs() < 1e-9, "{} at {v}", b.name());
            }
        }
    }

    #[test]
    fn sigmoid_centered_is_shifted_logistic() {
        let f = ScalarFn::<f64>::builtin(Builtin::SigmoidCentered);
        for &v in &[-3.0, 0.5, 2.0] {
            assert!((f.eval(v) - (1.0 / (1.0 + (-v).exp()) - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn blocks_are_reordered_by_growth_class() {
        let set = SbfSet::<f64>::uniform(&["tanh", "identity"], 2).unwrap();
        assert_eq!(set.names()[0], vec!["identity", "identity"]);
        assert_eq!((set.phi(), set.mu()), (1, 2));
        assert_eq!(set.order(), &[1, 0]);
        assert!(set.was_reordered());
        let bounded = ScalarFn::custom("sat", |v: f64| v.tanh());
        let set = SbfSet::new(vec![vec![bounded], vec![ScalarFn::builtin(Builtin::Cube)]]).unwrap();
        assert_eq!((set.phi(), set.mu()), (1, 1));
        assert_eq!(set.block(0)[0].name(), "cube");
    }

    #[test]
    fn basis_follows_block_then_input_ordering() {
        let sbfs = SbfSet::<f64>::uniform(&["identity", "cube"], 2).unwrap();
        let d = build_dictionary(sbfs, 2, 1, LiftingSpec::default(), None).unwrap();
        assert_eq!(d.basis_len(), 5);
        let g = d.eval_g(&[2.0, -3.0], &[0.5]).unwrap();
        assert_eq!(g, vec![2.0, -3.0, 8.0, -27.0, 0.5]);
        assert_eq!(d.basis_names(), vec!["identity(x1)", "identity(x2)", "cube(x1)", "cube(x2)", "u1"]);
        // 19 monomials of degree ≤ 3 in three variables; the basis adds nothing new.
        assert_eq!(d.lifting_len(), 19);
    }

    #[test]
    fn minimal_linear_dictionary() {
        let sbfs = SbfSet::<f64>::uniform(&["identity"], 1).unwrap();
        let d = build_dictionary(sbfs, 1, 1, LiftingSpec { degree: 1, include_basis: true }, None).unwrap();
        assert_eq!(d.lifting_len(), 2);
        assert_eq!(d.lifting_names(), &["x1", "u1"]);
        assert_eq!(d.eval_p(&[0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn tanh_basis_extends_lifting() {
        let sbfs = SbfSet::<f64>::uniform(&["tanh"], 1).unwrap();
        let d = build_dictionary(sbfs, 1, 0, LiftingSpec { degree: 2, include_basis: true }, None).unwrap();
        assert_eq!(d.lifting_names(), &["x1", "x1^2", "tanh(x1)"]);
    }

    #[test]
    fn duplicate_lifting_is_named() {
        let sbfs = SbfSet::<f64>::uniform(&["identity"], 2).unwrap();
        let lifting = vec![Lift::Monomial(vec![1, 0]), Lift::Monomial(vec![0, 1]), Lift::Basis(0)];
        let err = Dictionary::with_lifting(sbfs, 2, 0, lifting, None).unwrap_err();
        match err {
            DictError::RankDeficient { function, rank, count } => {
                assert_eq!(function, "identity(x1)");
                assert_eq!((rank, count), (2, 3));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn hand_partials() {
        let sbfs = SbfSet::<f64>::uniform(&["identity"], 2).unwrap();
        let lifting = vec![Lift::Monomial(vec![2, 0]), Lift::Monomial(vec![1, 1])];
        let d = Dictionary::with_lifting(sbfs, 2, 0, lifting, None).unwrap();
        assert_eq!(d.eval_dp(&[2.0, 3.0], &[], 0).unwrap(), vec![4.0, 3.0]);
        assert_eq!(d.eval_dp(&[2.0, 3.0], &[], 1).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn variable_change_rewires_block() {
        let sbfs = SbfSet::new(vec![vec![tanh()]]).unwrap();
        let ext = ExtensionTransform {
            offsets: None,
            r: Some(vec![Mat::from_row_slices(&[&[1.0, -1.0]])]),
        };
        let d = build_dictionary(sbfs, 2, 1, LiftingSpec { degree: 1, include_basis: true }, Some(ext)).unwrap();
        let g = d.eval_g(&[0.7, 0.2], &[1.5]).unwrap();
        assert!((g[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert_eq!(g[1], 1.5);
        let dp = d.eval_dp(&[0.7, 0.2], &[1.5], 1).unwrap();
        assert!((dp[3] + (1.0 - 0.5f64.tanh().powi(2))).abs() < 1e-15);
    }

    #[test]
    fn variable_change_dimension_mismatch() {
        let sbfs = SbfSet::new(vec![vec![tanh()]]).unwrap();
        let ext = ExtensionTransform {
            offsets: None,
            r: Some(vec![Mat::from_row_slices(&[&[1.0, -1.0], &[0.0, 1.0]])]),
        };
        assert!(matches!(
            build_dictionary(sbfs, 2, 0, LiftingSpec::default(), Some(ext)),
            Err(DictError::Config(_))
        ));
    }

    #[test]
    fn translation_split() {
        let g = ScalarFn::custom("tanh+0.5", |v: f64| v.tanh() + 0.5);
        let (f, c) = split_offset(g);
        assert_eq!(c, 0.5);
        assert!(validate_sbf(&f, &default_grid()).unwrap().passed);
        assert!((f.eval(0.3) - 0.3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn custom_primitive_falls_back_to_quadrature() {
        let f = ScalarFn::custom("lin", |v: f64| 3.0 * v);
        assert!(!f.has_analytic_primitive());
        assert!((f.primitive(2.0) - 6.0).abs() < 1e-10);
    }
}
