//! Feasibility engine for the ISS inequalities.
//!
//! 1. Facial reduction. A diagonal entry of a `⪰ 0` constraint that is
//!    identically zero on the current affine set forces its whole row to
//!    vanish; a diagonal entry that is a nonpositive combination of
//!    sign-constrained variables forces those variables to zero. Both rules
//!    only add linear equalities, so they never change the feasible set, and
//!    a strict constraint caught by either is a structural infeasibility.
//! 2. Phase A. Maximize `s` with every constraint `⪰ sI` under the trace
//!    normalization and a box `|z_i| ≤ R`, by a log-det barrier method. At a
//!    central point `s + m/τ` bounds the optimum from above, which is what
//!    certifies infeasibility.
//! 3. Phase B, only when phase A stalls in `[−ε_slack, ε_strict)`: maximize
//!    the strict margins while non-strict constraints may dip to `−ε_slack`.

use serde::{Deserialize, Serialize};

use super::certificate::{compute_margins, IssCertificate, Margin};
use super::lmi::{LmiProblem, LmiValues};
use super::IssError;
use crate::matlib::{cholesky, null_space, pinv, spd_inverse, Mat};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Required smallest eigenvalue of strict constraints.
    pub eps_strict: f64,
    /// Tolerated violation of non-strict constraints.
    pub eps_slack: f64,
    /// Cap on Newton steps over both phases.
    pub max_iter: usize,
    /// Box bound on every scalar unknown.
    pub box_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { eps_strict: 1e-6, eps_slack: 1e-9, max_iter: 500, box_bound: 1e4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Undecided,
}

impl Verdict {
    /// The one-line verdict printed by the command-line tool.
    pub fn line(self) -> &'static str {
        match self {
            Verdict::Feasible => "ISS: verified",
            Verdict::Infeasible => "ISS: not verified (infeasible)",
            Verdict::Undecided => "ISS: undecided",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Feasible => 0,
            Verdict::Infeasible => 1,
            Verdict::Undecided => 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub newton_steps: usize,
    /// Last barrier phase run (0 when reduction alone decided).
    pub phase: u8,
    pub tau: f64,
    /// Best common margin `s` reached.
    pub best_margin: f64,
    /// Upper bound on the optimal margin of the last phase.
    pub margin_upper_bound: f64,
    /// Free dimensions left after reduction.
    pub reduced_dim: usize,
    /// Variables fixed at zero by reduction.
    pub forced_zero: Vec<String>,
    pub reason: String,
}

/// Raw solver output in the problem's scalar type.
#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub verdict: Verdict,
    pub values: LmiValues<T>,
    pub margins: Vec<Margin>,
    pub diagnostics: SolverDiagnostics,
}

struct ReducedConstraint<T> {
    strict: bool,
    constant: Mat<T>,
    coeffs: Vec<Option<Mat<T>>>,
}

struct Reduction<T> {
    z0: Vec<T>,
    basis: Mat<T>,
    constraints: Vec<ReducedConstraint<T>>,
    forced: Vec<usize>,
}

enum Reduced<T> {
    Done(Reduction<T>),
    Infeasible(String),
}

fn affine_set<T: Real>(eqs: &[(Vec<T>, T)], nv: usize, tol: T) -> Result<Option<(Vec<T>, Mat<T>)>, IssError> {
    let e = Mat::from_fn(eqs.len(), nv, |i, j| eqs[i].0[j]);
    let f: Vec<T> = eqs.iter().map(|(_, b)| *b).collect();
    let z0 = pinv(&e, None)?.mul_vec(&f);
    let resid = e.mul_vec(&z0).iter().zip(&f).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
    if resid > tol * (T::one() + f.iter().fold(T::zero(), |m, v| m.max(v.abs()))) {
        return Ok(None);
    }
    let basis = null_space(&e, tol)?;
    Ok(Some((z0, basis)))
}

/// Value at `z0` and gradient restricted to the affine set.
fn restricted<T: Real>(c0: T, g: &[T], z0: &[T], basis: &Mat<T>) -> (T, T) {
    let val = c0 + g.iter().zip(z0).map(|(a, b)| *a * *b).sum::<T>();
    let red = (0..basis.cols())
        .map(|k| g.iter().enumerate().map(|(i, gi)| *gi * basis[(i, k)]).sum::<T>())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    (val, red)
}

fn reduce<T: Real>(prob: &LmiProblem<T>) -> Result<Reduced<T>, IssError> {
    let nv = prob.variable_count();
    let cons = &prob.constraints;
    let scale = cons
        .iter()
        .flat_map(|c| c.expr.coeffs.iter().flatten().map(|m| m.max_abs()))
        .fold(T::one(), T::max);
    let tol = T::epsilon() * T::lit(1e4) * scale;
    let mut eqs: Vec<(Vec<T>, T)> = vec![(prob.pin.clone(), T::one())];
    let mut dead: Vec<Vec<bool>> = cons.iter().map(|c| vec![false; c.expr.dim()]).collect();
    let mut forced = Vec::new();
    let entry = |ci: usize, a: usize, b: usize| -> (T, Vec<T>) {
        let e = &cons[ci].expr;
        let g = e.coeffs.iter().map(|c| c.as_ref().map_or(T::zero(), |m| m[(a, b)])).collect();
        (e.constant[(a, b)], g)
    };
    loop {
        let Some((z0, basis)) = affine_set(&eqs, nv, tol)? else {
            return Ok(Reduced::Infeasible("normalization is incompatible with forced zeros".into()));
        };
        let mut changed = false;
        for ci in 0..cons.len() {
            let dim = cons[ci].expr.dim();
            for d in 0..dim {
                if dead[ci][d] {
                    continue;
                }
                let (c0, g) = entry(ci, d, d);
                let (val, red) = restricted(c0, &g, &z0, &basis);
                if val.abs() <= tol && red <= tol {
                    if cons[ci].strict {
                        return Ok(Reduced::Infeasible(format!(
                            "`{}` has a diagonal entry forced to zero",
                            cons[ci].name()
                        )));
                    }
                    dead[ci][d] = true;
                    changed = true;
                    for q in 0..dim {
                        if q == d || dead[ci][q] {
                            continue;
                        }
                        let (q0, gq) = entry(ci, d, q);
                        let (qv, qr) = restricted(q0, &gq, &z0, &basis);
                        if qv.abs() > tol || qr > tol {
                            eqs.push((gq, -q0));
                        }
                    }
                    continue;
                }
                let active: Vec<usize> = (0..nv).filter(|&i| g[i].abs() > tol).collect();
                let sign_bound = active
                    .iter()
                    .all(|&i| prob.variables[i].is_nonnegative() && g[i] < T::zero());
                if sign_bound && c0 <= tol {
                    if c0 < -tol {
                        return Ok(Reduced::Infeasible(format!(
                            "`{}` has a diagonal entry that can never be nonnegative",
                            cons[ci].name()
                        )));
                    }
                    for &i in &active {
                        let mut e = vec![T::zero(); nv];
                        e[i] = T::one();
                        let (iv, ir) = restricted(T::zero(), &e, &z0, &basis);
                        if iv.abs() > tol || ir > tol {
                            eqs.push((e, T::zero()));
                            forced.push(i);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            let mut out = Vec::new();
            for (ci, c) in cons.iter().enumerate() {
                let keep: Vec<usize> = (0..c.expr.dim()).filter(|&d| !dead[ci][d]).collect();
                if keep.is_empty() {
                    continue;
                }
                let mut constant = c.expr.constant.clone();
                for (i, cm) in c.expr.coeffs.iter().enumerate() {
                    if let Some(cm) = cm {
                        constant.axpy(z0[i], cm);
                    }
                }
                let constant = constant.principal_submatrix(&keep);
                let coeffs: Vec<Option<Mat<T>>> = (0..basis.cols())
                    .map(|k| {
                        let mut m = Mat::zeros(c.expr.dim(), c.expr.dim());
                        for (i, cm) in c.expr.coeffs.iter().enumerate() {
                            if let Some(cm) = cm {
                                if basis[(i, k)] != T::zero() {
                                    m.axpy(basis[(i, k)], cm);
                                }
                            }
                        }
                        let m = m.principal_submatrix(&keep);
                        (m.max_abs() > tol).then_some(m)
                    })
                    .collect();
                if coeffs.iter().all(Option::is_none) && constant.max_abs() <= tol {
                    if c.strict {
                        return Ok(Reduced::Infeasible(format!("`{}` vanishes identically", c.name())));
                    }
                    continue;
                }
                out.push(ReducedConstraint { strict: c.strict, constant, coeffs });
            }
            return Ok(Reduced::Done(Reduction { z0, basis, constraints: out, forced }));
        }
    }
}

/// How a constraint depends on the margin variable `s`.
#[derive(Clone, Copy)]
enum Shift<T> {
    /// `C(w) − sI ⪰ 0`.
    Margin,
    /// `C(w) + εI ⪰ 0`.
    Slack(T),
}

struct Barrier<'a, T> {
    cons: &'a [ReducedConstraint<T>],
    shifts: Vec<Shift<T>>,
    /// Scalar rows `b + aᵀw > 0`.
    rows: Vec<(Vec<T>, T)>,
    s_max: T,
    nw: usize,
}

impl<T: Real> Barrier<'_, T> {
    fn matrix(&self, ci: usize, x: &[T]) -> Mat<T> {
        let c = &self.cons[ci];
        let mut m = c.constant.clone();
        for (k, ck) in c.coeffs.iter().enumerate() {
            if let Some(ck) = ck {
                m.axpy(x[k], ck);
            }
        }
        let shift = match self.shifts[ci] {
            Shift::Margin => -x[self.nw],
            Shift::Slack(e) => e,
        };
        for d in 0..m.rows() {
            m[(d, d)] += shift;
        }
        m
    }

    fn barrier_dim(&self) -> usize {
        self.cons.iter().map(|c| c.constant.rows()).sum::<usize>() + self.rows.len() + 1
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, x: &[T], tau: T) -> Option<T> {
        let mut f = -tau * x[self.nw];
        for ci in 0..self.cons.len() {
            let l = cholesky(&self.matrix(ci, x))?;
            for d in 0..l.rows() {
                f -= T::lit(2.0) * l[(d, d)].ln();
            }
        }
        for (a, b) in &self.rows {
            let r = *b + a.iter().zip(x).map(|(p, q)| *p * *q).sum::<T>();
            if r <= T::zero() {
                return None;
            }
            f -= r.ln();
        }
        let top = self.s_max - x[self.nw];
        if top <= T::zero() {
            return None;
        }
        Some(f - top.ln())
    }

    fn grad_hess(&self, x: &[T], tau: T) -> Option<(Vec<T>, Mat<T>)> {
        let nx = self.nw + 1;
        let mut g = vec![T::zero(); nx];
        let mut h = Mat::zeros(nx, nx);
        g[self.nw] = -tau;
        for ci in 0..self.cons.len() {
            let hinv = spd_inverse(&self.matrix(ci, x))?;
            let dim = hinv.rows();
            let mut ys: Vec<(usize, Mat<T>)> = Vec::new();
            for (k, ck) in self.cons[ci].coeffs.iter().enumerate() {
                if let Some(ck) = ck {
                    ys.push((k, &hinv * ck));
                }
            }
            if let Shift::Margin = self.shifts[ci] {
                ys.push((self.nw, -&hinv));
            }
            for (a, (ka, ya)) in ys.iter().enumerate() {
                g[*ka] -= ya.trace();
                for (kb, yb) in ys.iter().skip(a) {
                    let mut t = T::zero();
                    for i in 0..dim {
                        for j in 0..dim {
                            t += ya[(i, j)] * yb[(j, i)];
                        }
                    }
                    h[(*ka, *kb)] += t;
                    if ka != kb {
                        h[(*kb, *ka)] += t;
                    }
                }
            }
        }
        for (a, b) in &self.rows {
            let r = *b + a.iter().zip(x).map(|(p, q)| *p * *q).sum::<T>();
            for i in 0..self.nw {
                if a[i] == T::zero() {
                    continue;
                }
                g[i] -= a[i] / r;
                for j in 0..self.nw {
                    h[(i, j)] += a[i] * a[j] / (r * r);
                }
            }
        }
        let top = self.s_max - x[self.nw];
        g[self.nw] += T::one() / top;
        h[(self.nw, self.nw)] += T::one() / (top * top);
        Some((g, h))
    }

    /// Newton step `Δ` with `HΔ = −g`, regularizing if needed.
    fn newton(&self, g: &[T], h: &Mat<T>) -> Option<Vec<T>> {
        let n = g.len();
        let diag_max = (0..n).map(|i| h[(i, i)].abs()).fold(T::zero(), T::max).max(T::min_positive_value());
        let mut reg = T::epsilon() * diag_max;
        for _ in 0..12 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += reg;
            }
            if let Some(l) = cholesky(&hr) {
                // forward then backward substitution
                let mut y = vec![T::zero(); n];
                for i in 0..n {
                    let mut s = -g[i];
                    for k in 0..i {
                        s -= l[(i, k)] * y[k];
                    }
                    y[i] = s / l[(i, i)];
                }
                let mut d = vec![T::zero(); n];
                for i in (0..n).rev() {
                    let mut s = y[i];
                    for k in i + 1..n {
                        s -= l[(k, i)] * d[k];
                    }
                    d[i] = s / l[(i, i)];
                }
                return Some(d);
            }
            reg = reg * T::lit(100.0);
        }
        None
    }

    /// Centers at the current `τ`. Returns the Newton steps used, or `None`
    /// if the step budget ran out first.
    fn center(&self, x: &mut [T], tau: T, budget: usize) -> Option<usize> {
        let mut steps = 0;
        loop {
            if steps >= budget {
                return None;
            }
            let (g, h) = self.grad_hess(x, tau)?;
            let d = self.newton(&g, &h)?;
            steps += 1;
            let dec: T = -g.iter().zip(&d).map(|(a, b)| *a * *b).sum::<T>();
            if dec <= T::epsilon().sqrt() * T::lit(1e-2) {
                return Some(steps);
            }
            let f0 = self.value(x, tau)?;
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<T> = x.iter().zip(&d).map(|(a, b)| *a + t * *b).collect();
                if let Some(f1) = self.value(&trial, tau) {
                    if f1 <= f0 - T::lit(0.25) * t * dec {
                        x.copy_from_slice(&trial);
                        accepted = true;
                        break;
                    }
                }
                t = t * T::lit(0.5);
            }
            if !accepted {
                // no progress possible at working precision
                return Some(steps);
            }
        }
    }
}

enum PhaseEnd<T> {
    /// Converged: final `s` and the upper bound on the optimum.
    Converged { s: T, bound: T, tau: T },
    /// Step budget exhausted.
    Budget { s: T, tau: T },
    /// Terminated early because `s` crossed the target.
    Target { s: T, tau: T },
}

fn run_phase<T: Real>(
    bar: &Barrier<'_, T>,
    x: &mut Vec<T>,
    budget: &mut usize,
    steps: &mut usize,
    target: Option<T>,
    floor: T,
) -> PhaseEnd<T> {
    let m = T::from_count(bar.barrier_dim());
    let mut tau = T::one();
    loop {
        let Some(used) = bar.center(x, tau, *budget) else {
            *steps += *budget;
            *budget = 0;
            return PhaseEnd::Budget { s: x[bar.nw], tau };
        };
        *steps += used;
        *budget -= used;
        let s = x[bar.nw];
        let gap = m / tau;
        let bound = s + gap * T::lit(1.01);
        if let Some(t) = target {
            if s >= t {
                return PhaseEnd::Target { s, tau };
            }
        }
        if bound < floor || gap <= T::lit(1e-9).max(T::lit(1e-4) * s.abs()) {
            return PhaseEnd::Converged { s, bound, tau };
        }
        tau = tau * T::lit(8.0);
    }
}

fn margin_floor<T: Real>(bar: &Barrier<'_, T>, x: &[T]) -> T {
    let mut s = T::infinity();
    for ci in 0..bar.cons.len() {
        let m = bar.matrix(ci, &{
            let mut y = x.to_vec();
            y[bar.nw] = T::zero();
            y
        });
        if let Ok(e) = crate::matlib::min_eig(&m) {
            s = s.min(e);
        }
    }
    s
}

/// Decides feasibility of `prob` and returns the values found with their
/// recomputed margins.
pub fn solve<T: Real>(prob: &LmiProblem<T>, opts: &SolverOptions) -> Result<Solution<T>, IssError> {
    let structure = &prob.structure;
    let eps_strict = T::lit(opts.eps_strict);
    let eps_slack = T::lit(opts.eps_slack);
    let mut diag = SolverDiagnostics::default();
    let red = match reduce(prob)? {
        Reduced::Infeasible(reason) => {
            let values = structure.zero_values();
            let margins = compute_margins(prob, &values)?;
            diag.reason = format!("structural: {reason}");
            return Ok(Solution { verdict: Verdict::Infeasible, values, margins, diagnostics: diag });
        }
        Reduced::Done(r) => r,
    };
    diag.forced_zero = red.forced.iter().map(|&i| prob.variables[i].label()).collect();
    let nw = red.basis.cols();
    diag.reduced_dim = nw;
    let r = T::lit(opts.box_bound);
    let mut rows = Vec::new();
    for i in 0..red.z0.len() {
        let a: Vec<T> = (0..=nw).map(|k| if k < nw { red.basis[(i, k)] } else { T::zero() }).collect();
        if a.iter().all(|v| *v == T::zero()) {
            continue;
        }
        rows.push((a.clone(), r - red.z0[i]));
        rows.push((a.iter().map(|v| -*v).collect(), r + red.z0[i]));
    }
    let phase_a = Barrier {
        cons: &red.constraints,
        shifts: vec![Shift::Margin; red.constraints.len()],
        rows: rows.clone(),
        s_max: r * T::lit(10.0),
        nw,
    };
    let mut x = vec![T::zero(); nw + 1];
    x[nw] = margin_floor(&phase_a, &x) - T::one();
    let mut budget = opts.max_iter;
    let mut steps = 0;
    let end_a = run_phase(&phase_a, &mut x, &mut budget, &mut steps, None, -eps_slack);
    diag.phase = 1;
    let (s_a, bound_a, exhausted) = record(&end_a, &mut diag);
    let (verdict, reason) = if s_a >= eps_strict {
        (Verdict::Feasible, "all constraints hold with a common margin")
    } else if exhausted {
        (Verdict::Undecided, "step budget exhausted in phase A")
    } else if bound_a.is_some_and(|b| b < -eps_slack) {
        (Verdict::Infeasible, "optimal common margin is provably negative")
    } else if s_a <= -eps_slack {
        (Verdict::Undecided, "phase A ended without a usable interior point")
    } else {
        // boundary case: let non-strict constraints touch zero
        diag.phase = 2;
        let shifts = red
            .constraints
            .iter()
            .map(|c| if c.strict { Shift::Margin } else { Shift::Slack(eps_slack) })
            .collect();
        let phase_b = Barrier { cons: &red.constraints, shifts, rows, s_max: r * T::lit(10.0), nw };
        let mut floor = T::infinity();
        let mut probe = x.clone();
        probe[nw] = T::zero();
        for (ci, c) in red.constraints.iter().enumerate() {
            if c.strict {
                floor = floor.min(crate::matlib::min_eig(&phase_b.matrix(ci, &probe))?);
            }
        }
        x[nw] = floor - (floor.abs() + T::one()) * T::lit(1e-3);
        let target = Some(eps_strict * T::lit(10.0));
        let end_b = run_phase(&phase_b, &mut x, &mut budget, &mut steps, target, eps_strict);
        let (s_b, bound_b, exhausted) = record(&end_b, &mut diag);
        if s_b >= eps_strict {
            (Verdict::Feasible, "strict constraints hold on the boundary face")
        } else if exhausted {
            (Verdict::Undecided, "step budget exhausted in phase B")
        } else if bound_b.is_some_and(|b| b < eps_strict) {
            (Verdict::Infeasible, "strict margin provably below the floor")
        } else {
            (Verdict::Undecided, "phase B stalled near the floor")
        }
    };
    let reason = reason.to_string();
    diag.newton_steps = steps;
    let values = values_from(prob, &red, &x[..nw]);
    let margins = compute_margins(prob, &values)?;
    let mut verdict = verdict;
    diag.reason = reason;
    if verdict == Verdict::Feasible {
        let ok = margins.iter().all(|m| {
            if m.strict {
                m.value >= opts.eps_strict
            } else {
                m.value >= -opts.eps_slack
            }
        });
        if !ok {
            verdict = Verdict::Undecided;
            diag.reason = "recomputed margins fall short of the thresholds".into();
        }
    }
    Ok(Solution { verdict, values, margins, diagnostics: diag })
}

fn record<T: Real>(end: &PhaseEnd<T>, diag: &mut SolverDiagnostics) -> (T, Option<T>, bool) {
    let (s, bound, tau, exhausted) = match *end {
        PhaseEnd::Budget { s, tau } => (s, None, tau, true),
        PhaseEnd::Target { s, tau } => (s, None, tau, false),
        PhaseEnd::Converged { s, bound, tau } => (s, Some(bound), tau, false),
    };
    diag.best_margin = s.as_f64();
    diag.tau = tau.as_f64();
    diag.margin_upper_bound = bound.map_or(f64::NAN, |b| b.as_f64());
    (s, bound, exhausted)
}

/// `z = z₀ + Nw`, with round-off below working precision flushed to zero and
/// sign-constrained entries clipped at zero.
fn values_from<T: Real>(prob: &LmiProblem<T>, red: &Reduction<T>, w: &[T]) -> LmiValues<T> {
    let mut z = red.z0.clone();
    for (i, zi) in z.iter_mut().enumerate() {
        for (k, wk) in w.iter().enumerate() {
            *zi += red.basis[(i, k)] * *wk;
        }
    }
    let big = z.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let flush = T::epsilon() * T::lit(1e3) * big;
    for &i in &red.forced {
        z[i] = T::zero();
    }
    for (zi, var) in z.iter_mut().zip(&prob.variables) {
        if zi.abs() <= flush || (var.is_nonnegative() && *zi < T::zero()) {
            *zi = T::zero();
        }
    }
    prob.structure.unpack(&z)
}

/// Solves and packages the result as a certificate (without a model digest).
pub fn solve_feasibility<T: Real>(prob: &LmiProblem<T>, opts: &SolverOptions) -> Result<IssCertificate, IssError> {
    let sol = solve(prob, opts)?;
    Ok(IssCertificate::from_solution(prob, &sol, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::SbfSet;
    use crate::iss::lmi::{assemble_extended, assemble_plain, ConstraintKind, ExtendedOptions};
    use crate::koopman::PersidskiiModel;
    use crate::matlib::min_eig;

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

    fn verdict(m: &PersidskiiModel<f64>) -> Verdict {
        solve(&assemble_plain(m).unwrap(), &SolverOptions::default()).unwrap().verdict
    }

    #[test]
    fn scalar_fixtures() {
        assert_eq!(verdict(&scalar(-1.0)), Verdict::Feasible);
        assert_eq!(verdict(&scalar(1.0)), Verdict::Infeasible);
        assert_eq!(verdict(&scalar(0.0)), Verdict::Infeasible);
    }

    #[test]
    fn feasible_values_satisfy_every_constraint() {
        let prob = assemble_plain(&two_block()).unwrap();
        let opts = SolverOptions::default();
        let sol = solve(&prob, &opts).unwrap();
        assert_eq!(sol.verdict, Verdict::Feasible, "{:?}", sol.diagnostics);
        for (kind, m) in prob.evaluate(&sol.values) {
            let c = prob.constraint(kind).unwrap();
            let floor = if c.strict { opts.eps_strict } else { -opts.eps_slack };
            assert!(min_eig(&m.symmetrize()).unwrap() >= floor, "{}", c.name());
        }
    }

    #[test]
    fn hand_certificate_margins() {
        // P = 0, λ = ξ = Φ = 1 makes Q = [[0,0,0],[0,-1,1],[0,1,-1]].
        let prob = assemble_plain(&scalar(-1.0)).unwrap();
        let mut v = prob.structure.zero_values();
        v.lambdas[0][0] = 1.0;
        v.xis[0][0] = 1.0;
        v.phi = Mat::diag(&[1.0]);
        let margins = compute_margins(&prob, &v).unwrap();
        let get = |k: ConstraintKind| margins.iter().find(|m| m.name == k.name()).unwrap().value;
        assert!((get(ConstraintKind::NegQ)).abs() < 1e-14);
        assert!((get(ConstraintKind::Positivity) - 1.0).abs() < 1e-14);
        assert!((get(ConstraintKind::Dissipation) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn verdict_is_scale_invariant() {
        for k in [1e-2, 1.0, 1e2] {
            assert_eq!(verdict(&scalar(-k)), Verdict::Feasible, "scale {k}");
            assert_eq!(verdict(&scalar(k)), Verdict::Infeasible, "scale {k}");
        }
        let mut m = two_block();
        m.gammas.iter_mut().for_each(|g| *g = g.scale(30.0));
        assert_eq!(verdict(&m), Verdict::Feasible);
    }

    #[test]
    fn extended_reduces_to_plain_form() {
        use rand::{Rng, SeedableRng};
        let m = two_block();
        let t1 = assemble_plain(&m).unwrap();
        let c1 = assemble_extended(&m, ExtendedOptions { pin_xi0: true }).unwrap();
        assert_eq!(t1.variable_count(), c1.variable_count());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let z: Vec<f64> = (0..t1.variable_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = t1.structure.unpack(&z);
            let b = c1.structure.unpack(&z);
            for ((ka, ma), (kb, mb)) in t1.evaluate(&a).into_iter().zip(c1.evaluate(&b)) {
                assert_eq!(ka, kb);
                assert!(ma.approx_eq(&mb, 1e-13), "{}", ka.name());
            }
        }
        let opts = SolverOptions::default();
        assert_eq!(solve(&t1, &opts).unwrap().verdict, solve(&c1, &opts).unwrap().verdict);
    }

    #[test]
    fn zero_budget_is_undecided() {
        let prob = assemble_plain(&two_block()).unwrap();
        let opts = SolverOptions { max_iter: 0, ..SolverOptions::default() };
        assert_eq!(solve(&prob, &opts).unwrap().verdict, Verdict::Undecided);
    }

    #[test]
    fn f32_agrees_with_f64() {
        let sbfs = SbfSet::uniform(&["identity"], 1).unwrap();
        let m = PersidskiiModel::<f32>::new(vec![Mat::diag(&[-1.0f32])], Mat::diag(&[1.0f32]), sbfs).unwrap();
        let opts = SolverOptions { eps_strict: 1e-4, eps_slack: 1e-6, ..SolverOptions::default() };
        let sol = solve(&assemble_plain(&m).unwrap(), &opts).unwrap();
        assert_eq!(sol.verdict, Verdict::Feasible, "{:?} {:?}", sol.diagnostics, sol.margins);
    }
}
