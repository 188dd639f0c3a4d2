//! Continuous-time true systems `ẋ = f(x) + Du (+ d(t))`, fixed-step RK4
//! integration, and sampled snapshot datasets.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::matlib::{format_real, LinalgError, Mat};
use crate::scalar::Real;

/// State norm beyond which a simulation is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

/// Inner integration steps per sampling period during snapshot collection.
pub const INNER_STEPS_PER_SAMPLE: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("state norm exceeded {threshold:e} at t = {t}; simulation is not forward complete on this input")]
    Divergence { t: f64, threshold: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type VectorField<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type TimeSignal<T> = Arc<dyn Fn(T) -> Vec<T> + Send + Sync>;

/// `ẋ = f(x) + D u + d(t)`.
#[derive(Clone)]
pub struct TrueSystem<T> {
    pub name: String,
    n: usize,
    m: usize,
    f: VectorField<T>,
    d_matrix: Mat<T>,
    disturbance: Option<TimeSignal<T>>,
}

impl<T: Real> TrueSystem<T> {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        f: VectorField<T>,
        d_matrix: Mat<T>,
    ) -> Result<Self, DynError> {
        if d_matrix.rows() != n {
            return Err(DynError::Config(format!(
                "input matrix has {} rows, state dimension is {n}",
                d_matrix.rows()
            )));
        }
        Ok(TrueSystem {
            name: name.into(),
            n,
            m: d_matrix.cols(),
            f,
            d_matrix,
            disturbance: None,
        })
    }

    /// Linear system `ẋ = Ax + Du`.
    pub fn linear(a: Mat<T>, d: Mat<T>) -> Result<Self, DynError> {
        if !a.is_square() {
            return Err(DynError::Config("state matrix must be square".into()));
        }
        let n = a.rows();
        let f: VectorField<T> = Arc::new(move |x: &[T]| a.mul_vec(x));
        Self::new("linear", n, f, d)
    }

    pub fn with_disturbance(mut self, d: TimeSignal<T>) -> Self {
        self.disturbance = Some(d);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn input_matrix(&self) -> &Mat<T> {
        &self.d_matrix
    }

    pub fn has_disturbance(&self) -> bool {
        self.disturbance.is_some()
    }

    pub fn rhs(&self, t: T, x: &[T], u: &[T]) -> Vec<T> {
        let mut dx = (self.f)(x);
        let du = self.d_matrix.mul_vec(u);
        for (a, b) in dx.iter_mut().zip(du) {
            *a += b;
        }
        if let Some(d) = &self.disturbance {
            for (a, b) in dx.iter_mut().zip(d(t)) {
                *a += b;
            }
        }
        dx
    }
}

impl<T> fmt::Debug for TrueSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrueSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("disturbance", &self.disturbance.is_some())
            .finish()
    }
}

/// Exogenous input `u(t)`.
#[derive(Clone)]
pub enum InputSignal<T> {
    Constant(Vec<T>),
    /// Zero-order hold: `values[k]` on `[k·period, (k+1)·period)`; the last
    /// value is held beyond the end.
    Sequence { values: Vec<Vec<T>>, period: T },
    Function { dim: usize, f: TimeSignal<T> },
}

impl<T: Real> InputSignal<T> {
    pub fn zero(m: usize) -> Self {
        InputSignal::Constant(vec![T::zero(); m])
    }

    pub fn function(dim: usize, f: impl Fn(T) -> Vec<T> + Send + Sync + 'static) -> Self {
        InputSignal::Function { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSignal::Constant(v) => v.len(),
            InputSignal::Sequence { values, .. } => values.first().map_or(0, Vec::len),
            InputSignal::Function { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: T) -> Vec<T> {
        match self {
            InputSignal::Constant(v) => v.clone(),
            InputSignal::Sequence { values, period } => {
                let k = (t / *period + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
                values[k.min(values.len() - 1)].clone()
            }
            InputSignal::Function { f, .. } => f(t),
        }
    }

    /// Values `u(k·period)` for `k = 0..count`.
    pub fn samples(&self, period: T, count: usize) -> Vec<Vec<T>> {
        match self {
            InputSignal::Sequence { values, period: p } if *p == period && values.len() >= count => {
                values[..count].to_vec()
            }
            _ => (0..count).map(|k| self.eval(T::from_count(k) * period)).collect(),
        }
    }

    fn is_held(&self) -> bool {
        matches!(self, InputSignal::Sequence { .. })
    }
}

impl<T> fmt::Debug for InputSignal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSignal::Constant(_) => write!(f, "InputSignal::Constant"),
            InputSignal::Sequence { values, .. } => write!(f, "InputSignal::Sequence(len {})", values.len()),
            InputSignal::Function { dim, .. } => write!(f, "InputSignal::Function(dim {dim})"),
        }
    }
}

/// Sampled trajectory: `states[k]` and `inputs[k]` at `times[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Mat<T>,
    pub inputs: Mat<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> Vec<T> {
        self.states.row(k)
    }

    pub fn last_state(&self) -> Vec<T> {
        self.states.row(self.len() - 1)
    }

    /// Keeps every `stride`-th sample, starting with the first.
    pub fn decimate(&self, stride: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        Trajectory {
            times: keep.iter().map(|&k| self.times[k]).collect(),
            states: Mat::from_fn(keep.len(), self.states.cols(), |i, j| self.states[(keep[i], j)]),
            inputs: Mat::from_fn(keep.len(), self.inputs.cols(), |i, j| self.inputs[(keep[i], j)]),
        }
    }

    /// CSV with header `t,x1..xn,u1..um`.
    pub fn to_csv(&self) -> String {
        let n = self.states.cols();
        let m = self.inputs.cols();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let mut row = vec![format_real(self.times[k].as_f64())];
            row.extend(self.states.row(k).iter().map(|v| format_real(v.as_f64())));
            row.extend(self.inputs.row(k).iter().map(|v| format_real(v.as_f64())));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DynError> {
        let table = parse_table(text)?;
        let n = table.header.iter().filter(|h| h.starts_with('x')).count();
        let m = table.header.iter().filter(|h| h.starts_with('u')).count();
        if table.header.first().map(String::as_str) != Some("t") || 1 + n + m != table.header.len() {
            return Err(DynError::Csv(format!("unexpected trajectory header {:?}", table.header)));
        }
        let rows = table.rows.len();
        Ok(Trajectory {
            times: table.rows.iter().map(|r| T::lit(r[0])).collect(),
            states: Mat::from_fn(rows, n, |k, i| T::lit(table.rows[k][1 + i])),
            inputs: Mat::from_fn(rows, m, |k, i| T::lit(table.rows[k][1 + n + i])),
        })
    }
}

/// Classical fixed-step fourth-order Runge–Kutta.
///
/// Piecewise-constant (`Sequence`) inputs are held over each step at their
/// value at the step start; other inputs are evaluated at the stage times.
/// The output grid is `0, dt, 2dt, …` up to `t_end` (the final step is
/// shortened if `t_end` is not a multiple of `dt`).
pub fn integrate<T: Real>(
    sys: &TrueSystem<T>,
    x0: &[T],
    u: &InputSignal<T>,
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>, DynError> {
    check_integration_args(sys.state_dim(), sys.input_dim(), x0, u, t_end, dt)?;
    integrate_field(|t, x, uu| sys.rhs(t, x, uu), x0, u, t_end, dt)
}

pub(crate) fn check_integration_args<T: Real>(
    n: usize,
    m: usize,
    x0: &[T],
    u: &InputSignal<T>,
    t_end: T,
    dt: T,
) -> Result<(), DynError> {
    if !(dt > T::zero()) || !(t_end > T::zero()) {
        return Err(DynError::Argument("dt and t_end must be positive".into()));
    }
    if x0.len() != n {
        return Err(DynError::Argument(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if u.dim() != m {
        return Err(DynError::Argument(format!("input has dimension {}, expected {m}", u.dim())));
    }
    Ok(())
}

/// RK4 on an arbitrary right-hand side `(t, x, u) ↦ ẋ`.
pub(crate) fn integrate_field<T: Real>(
    rhs: impl Fn(T, &[T], &[T]) -> Vec<T>,
    x0: &[T],
    u: &InputSignal<T>,
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>, DynError> {
    let steps_f = (t_end / dt - T::lit(1e-9)).ceil();
    let steps = steps_f.to_usize().unwrap_or(0).max(1);
    let n = x0.len();
    let m = u.dim();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Mat::zeros(steps + 1, n);
    let mut inputs = Mat::zeros(steps + 1, m);
    let mut x = x0.to_vec();
    let mut t = T::zero();
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let threshold = T::lit(DIVERGENCE_THRESHOLD);
    times.push(t);
    states.set_row(0, &x);
    inputs.set_row(0, &u.eval(t));
    for k in 1..=steps {
        let t_next = (T::from_count(k) * dt).min(t_end);
        let h = t_next - t;
        let held = u.is_held().then(|| u.eval(t));
        let input_at = |s: T| held.clone().unwrap_or_else(|| u.eval(s));
        let u0 = input_at(t);
        let um = input_at(t + half * h);
        let u1 = input_at(t + h);
        let k1 = rhs(t, &x, &u0);
        let x2: Vec<T> = x.iter().zip(&k1).map(|(&a, &b)| a + half * h * b).collect();
        let k2 = rhs(t + half * h, &x2, &um);
        let x3: Vec<T> = x.iter().zip(&k2).map(|(&a, &b)| a + half * h * b).collect();
        let k3 = rhs(t + half * h, &x3, &um);
        let x4: Vec<T> = x.iter().zip(&k3).map(|(&a, &b)| a + h * b).collect();
        let k4 = rhs(t + h, &x4, &u1);
        for i in 0..n {
            x[i] += h * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        t = t_next;
        let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm <= threshold) {
            return Err(DynError::Divergence {
                t: t.as_f64(),
                threshold: DIVERGENCE_THRESHOLD,
            });
        }
        times.push(t);
        states.set_row(k, &x);
        inputs.set_row(k, &u.eval(t));
    }
    Ok(Trajectory { times, states, inputs })
}

/// One snapshot pair `((x_k, u_k), (y_k, u_{k+1}))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotPair<T> {
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub y: Vec<T>,
    pub u_next: Vec<T>,
}

/// Provenance recorded alongside a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub noise_std: f64,
    pub seed: u64,
    pub noise_model: String,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        DatasetMeta {
            noise_std: 0.0,
            seed: 0,
            noise_model: "gaussian".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotDataset<T> {
    pub pairs: Vec<SnapshotPair<T>>,
    pub t_c: T,
    pub meta: DatasetMeta,
    /// Sample times of the pairs' `x_k` (informational).
    pub times: Vec<T>,
}

impl<T: Real> SnapshotDataset<T> {
    pub fn new(pairs: Vec<SnapshotPair<T>>, t_c: T) -> Result<Self, DynError> {
        let times = (0..pairs.len()).map(|k| T::from_count(k) * t_c).collect();
        let ds = SnapshotDataset {
            pairs,
            t_c,
            meta: DatasetMeta::default(),
            times,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DynError> {
        if !(self.t_c > T::zero()) {
            return Err(DynError::Argument("sampling period must be positive".into()));
        }
        let first = self
            .pairs
            .first()
            .ok_or_else(|| DynError::Argument("dataset needs at least one pair".into()))?;
        let (n, m) = (first.x.len(), first.u.len());
        for (k, p) in self.pairs.iter().enumerate() {
            if p.x.len() != n || p.y.len() != n || p.u.len() != m || p.u_next.len() != m {
                return Err(DynError::Argument(format!("pair {k} has inconsistent dimensions")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.x.len())
    }

    pub fn input_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.u.len())
    }

    /// Appends the pairs of another dataset with the same sampling period.
    pub fn extend(&mut self, other: &SnapshotDataset<T>) -> Result<(), DynError> {
        if (other.t_c - self.t_c).abs() > T::epsilon() * self.t_c * T::lit(16.0) {
            return Err(DynError::Argument("datasets have different sampling periods".into()));
        }
        if other.state_dim() != self.state_dim() || other.input_dim() != self.input_dim() {
            return Err(DynError::Argument("datasets have different dimensions".into()));
        }
        self.pairs.extend(other.pairs.iter().cloned());
        self.times.extend(other.times.iter().copied());
        Ok(())
    }

    /// CSV: a `#` metadata line, then header `t,x1..xn,u1..um,y1..yn,v1..vm`
    /// where `v` is the next input `u_{k+1}`; one row per pair.
    pub fn to_csv(&self) -> String {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut out = format!(
            "# T_c={},N={},noise_std={},seed={},noise={}\n",
            format_real(self.t_c.as_f64()),
            self.len(),
            format_real(self.meta.noise_std),
            self.meta.seed,
            self.meta.noise_model
        );
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend((1..=n).map(|i| format!("y{i}")));
        header.extend((1..=m).map(|i| format!("v{i}")));
        out.push_str(&header.join(","));
        out.push('\n');
        for (k, p) in self.pairs.iter().enumerate() {
            let row: Vec<String> = std::iter::once(self.times[k])
                .chain(p.x.iter().copied())
                .chain(p.u.iter().copied())
                .chain(p.y.iter().copied())
                .chain(p.u_next.iter().copied())
                .map(|v| format_real(v.as_f64()))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DynError> {
        let meta_line = text
            .lines()
            .find(|l| l.trim_start().starts_with('#'))
            .ok_or_else(|| DynError::Csv("missing '#' metadata line".into()))?;
        let mut t_c = None;
        let mut meta = DatasetMeta::default();
        for kv in meta_line.trim_start_matches(['#', ' ']).split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| DynError::Csv(format!("bad metadata entry {kv:?}")))?;
            let num = || v.trim().parse::<f64>().map_err(|e| DynError::Csv(format!("{k}: {e}")));
            match k.trim() {
                "T_c" => t_c = Some(num()?),
                "noise_std" => meta.noise_std = num()?,
                "seed" => meta.seed = v.trim().parse().map_err(|e| DynError::Csv(format!("seed: {e}")))?,
                "noise" => meta.noise_model = v.trim().to_string(),
                _ => {}
            }
        }
        let t_c = t_c.ok_or_else(|| DynError::Csv("metadata lacks T_c".into()))?;
        let table = parse_table(text)?;
        let n = table.header.iter().filter(|h| h.starts_with('x')).count();
        let m = table.header.iter().filter(|h| h.starts_with('u')).count();
        if table.header.len() != 1 + 2 * n + 2 * m {
            return Err(DynError::Csv(format!("unexpected dataset header {:?}", table.header)));
        }
        let pairs = table
            .rows
            .iter()
            .map(|r| {
                let take = |a: usize, len: usize| r[a..a + len].iter().map(|&v| T::lit(v)).collect();
                SnapshotPair {
                    x: take(1, n),
                    u: take(1 + n, m),
                    y: take(1 + n + m, n),
                    u_next: take(1 + 2 * n + m, m),
                }
            })
            .collect();
        let ds = SnapshotDataset {
            pairs,
            t_c: T::lit(t_c),
            meta,
            times: table.rows.iter().map(|r| T::lit(r[0])).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_table(text: &str) -> Result<Table, DynError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| DynError::Csv("empty file".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .enumerate()
        .map(|(k, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|tok| tok.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DynError::Csv(format!("row {}: {e}", k + 1)))?;
            if row.len() != header.len() {
                return Err(DynError::Csv(format!("row {} has {} fields", k + 1, row.len())));
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    Ok(Table { header, rows })
}

/// Output of [`sample_snapshots`]: the dataset plus the noise-free state
/// sequence `x_0..x_N` it was generated from.
#[derive(Clone, Debug)]
pub struct SampledRun<T> {
    pub dataset: SnapshotDataset<T>,
    pub clean: Trajectory<T>,
}

/// Collects `N` snapshot pairs from one trajectory.
///
/// The input is sampled as `u_k = u(k·T_c)` for `k = 0..=N` and held over
/// each sampling interval. `x_{k+1}` is the RK4 flow of `x_k` over `T_c`
/// with inner step `T_c / 20`, and `y_k = x_{k+1} + ε_k` where `ε_k` is
/// seeded Gaussian measurement noise with standard deviation `noise_std`.
pub fn sample_snapshots<T: Real>(
    sys: &TrueSystem<T>,
    x0: &[T],
    u_seq: &InputSignal<T>,
    t_c: T,
    count: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SampledRun<T>, DynError> {
    if count == 0 {
        return Err(DynError::Argument("N must be at least 1".into()));
    }
    if !(noise_std >= 0.0) {
        return Err(DynError::Argument("noise_std must be non-negative".into()));
    }
    let inputs = u_seq.samples(t_c, count + 1);
    if inputs.len() != count + 1 {
        return Err(DynError::Argument(format!(
            "input sequence provides {} values, need N + 1 = {}",
            inputs.len(),
            count + 1
        )));
    }
    let held = InputSignal::Sequence {
        values: inputs.clone(),
        period: t_c,
    };
    let t_end = t_c * T::from_count(count);
    let dt = t_c / T::from_count(INNER_STEPS_PER_SAMPLE);
    check_integration_args(sys.state_dim(), sys.input_dim(), x0, &held, t_end, dt)?;
    let fine = integrate_field(|t, x, u| sys.rhs(t, x, u), x0, &held, t_end, dt)?;
    let clean = fine.decimate(INNER_STEPS_PER_SAMPLE);
    debug_assert_eq!(clean.len(), count + 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).map_err(|e| DynError::Argument(e.to_string()))?;
    let pairs = (0..count)
        .map(|k| {
            let y = clean
                .state(k + 1)
                .into_iter()
                .map(|v| {
                    let eps: f64 = normal.sample(&mut rng);
                    if noise_std > 0.0 {
                        v + T::lit(eps)
                    } else {
                        v
                    }
                })
                .collect();
            SnapshotPair {
                x: clean.state(k),
                u: inputs[k].clone(),
                y,
                u_next: inputs[k + 1].clone(),
            }
        })
        .collect();
    let dataset = SnapshotDataset {
        pairs,
        t_c,
        meta: DatasetMeta {
            noise_std,
            seed,
            noise_model: "gaussian".into(),
        },
        times: clean.times[..count].to_vec(),
    };
    Ok(SampledRun { dataset, clean })
}

/// Parameters of the traffic-density model
/// `ẋ = [[A₁, A₂], [O, A₃]] x + g(x) + B_u u + d(t)` with
/// `g_i(x) = Σ_j C_ij · x_j |x_j|` (sign-preserving quadratic terms).
#[derive(Clone, Debug)]
pub struct TrafficParams<T> {
    pub a1: Mat<T>,
    pub a2: Mat<T>,
    pub a3: Mat<T>,
    pub b_u: Mat<T>,
    pub quad: Mat<T>,
    /// Amplitude of `d(t) = scale · [sin t; tanh t; …]`; `None` disables it.
    pub disturbance_scale: Option<T>,
}

impl<T: Real> TrafficParams<T> {
    /// The two-state, one-input instance shipped with the crate. Both
    /// diagonal blocks are stable and the quadratic terms are dissipative.
    pub fn shipped() -> Self {
        TrafficParams {
            a1: Mat::from_row_slices(&[&[-1.2]]),
            a2: Mat::from_row_slices(&[&[0.6]]),
            a3: Mat::from_row_slices(&[&[-0.9]]),
            b_u: Mat::from_row_slices(&[&[0.5], &[1.0]]),
            quad: Mat::from_row_slices(&[&[-0.4, 0.0], &[0.0, -0.3]]),
            disturbance_scale: None,
        }
    }

    /// The block state matrix `[[A₁, A₂], [O, A₃]]`.
    pub fn state_matrix(&self) -> Result<Mat<T>, DynError> {
        let (p, q) = (self.a1.rows(), self.a3.rows());
        if !self.a1.is_square() || !self.a3.is_square() || self.a2.shape() != (p, q) {
            return Err(DynError::Config(format!(
                "incompatible blocks: A1 {:?}, A2 {:?}, A3 {:?}",
                self.a1.shape(),
                self.a2.shape(),
                self.a3.shape()
            )));
        }
        let mut a = Mat::zeros(p + q, p + q);
        a.set_block(0, 0, &self.a1);
        a.set_block(0, p, &self.a2);
        a.set_block(p, p, &self.a3);
        Ok(a)
    }
}

/// `d(t) = scale · [sin t; tanh t]`, cycling through `sin`, `tanh` for
/// higher dimensions.
pub fn sin_tanh_disturbance<T: Real>(n: usize, scale: T) -> TimeSignal<T> {
    Arc::new(move |t: T| {
        (0..n)
            .map(|i| scale * if i % 2 == 0 { t.sin() } else { t.tanh() })
            .collect()
    })
}

pub fn traffic_system<T: Real>(params: &TrafficParams<T>) -> Result<TrueSystem<T>, DynError> {
    let a = params.state_matrix()?;
    let n = a.rows();
    if params.b_u.rows() != n {
        return Err(DynError::Config(format!("B_u has {} rows, state dimension is {n}", params.b_u.rows())));
    }
    if params.quad.shape() != (n, n) {
        return Err(DynError::Config(format!("quadratic coefficients must be {n}x{n}")));
    }
    let quad = params.quad.clone();
    let f: VectorField<T> = Arc::new(move |x: &[T]| {
        let sq: Vec<T> = x.iter().map(|&v| v * v.abs()).collect();
        let lin = a.mul_vec(x);
        let g = quad.mul_vec(&sq);
        lin.into_iter().zip(g).map(|(l, q)| l + q).collect()
    });
    let sys = TrueSystem::new("traffic", n, f, params.b_u.clone())?;
    Ok(match params.disturbance_scale {
        Some(s) => sys.with_disturbance(sin_tanh_disturbance(n, s)),
        None => sys,
    })
}
