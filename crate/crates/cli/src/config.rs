//! Run configuration, read from a TOML file. Matrices are written as arrays
//! of rows.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use koopiss::dictionary::{Builtin, LiftingSpec};
use koopiss::dynsys::InputSignal;

use crate::pipeline::{PipelineError, Stage};

pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub disturbance: Option<DisturbanceSpec>,
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub identification: IdentificationSpec,
    #[serde(default)]
    pub verification: VerificationSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "run".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    /// `ẋ = Ax + Du`.
    Linear { a: Rows, d: Rows },
    /// The traffic-density model; omitted blocks take the shipped values.
    Traffic {
        a1: Option<Rows>,
        a2: Option<Rows>,
        a3: Option<Rows>,
        b_u: Option<Rows>,
        quad: Option<Rows>,
    },
    /// Snapshot pairs read from a dataset CSV.
    External { dataset: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceChannel {
    /// Added to the right-hand side of the true system.
    Process,
    /// Added to the measured successor states `y_k`.
    Measurement,
}

/// `d(t) = scale · [sin t; tanh t; …]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub scale: f64,
    #[serde(default = "default_channel")]
    pub channel: DisturbanceChannel,
}

fn default_channel() -> DisturbanceChannel {
    DisturbanceChannel::Process
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    /// One function name per block, repeated over the state coordinates.
    #[serde(default)]
    pub blocks: Vec<String>,
    /// Explicit per-coordinate names; overrides `blocks`.
    #[serde(default)]
    pub block_functions: Option<Vec<Vec<String>>>,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "yes")]
    pub include_basis: bool,
    /// Variable-change matrices, one per block.
    #[serde(default)]
    pub r: Option<Vec<Rows>>,
    /// Translation offsets, one vector per block.
    #[serde(default)]
    pub offsets: Option<Vec<Vec<f64>>>,
}

fn default_degree() -> u32 {
    LiftingSpec::default().degree
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(default = "default_t_c")]
    pub t_c: f64,
    /// Snapshot pairs per segment.
    #[serde(default = "default_count")]
    pub n: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub segments: Vec<SegmentSpec>,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { t_c: default_t_c(), n: default_count(), noise_std: 0.0, seed: 0, segments: Vec::new() }
    }
}

fn default_t_c() -> f64 {
    0.01
}

fn default_count() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub input: InputSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSpec {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    /// Per channel, `Σ amplitude · sin(frequency · t + phase)`.
    Sines { channels: Vec<Vec<SineTerm>> },
    /// Held for one sampling period each; the last value persists.
    Sequence { values: Rows },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl InputSpec {
    pub fn dim(&self, m: usize) -> usize {
        match self {
            InputSpec::Zero => m,
            InputSpec::Constant { value } => value.len(),
            InputSpec::Sines { channels } => channels.len(),
            InputSpec::Sequence { values } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn signal(&self, m: usize, t_c: f64) -> InputSignal<f64> {
        match self {
            InputSpec::Zero => InputSignal::zero(m),
            InputSpec::Constant { value } => InputSignal::Constant(value.clone()),
            InputSpec::Sines { channels } => {
                let channels = channels.clone();
                InputSignal::function(channels.len(), move |t: f64| {
                    channels
                        .iter()
                        .map(|terms| terms.iter().map(|s| s.amplitude * (s.frequency * t + s.phase).sin()).sum::<f64>())
                        .collect()
                })
            }
            InputSpec::Sequence { values } => InputSignal::Sequence { values: values.clone(), period: t_c },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationSpec {
    /// Uniform draws added to the data points for the generator basis;
    /// absent means one per snapshot pair.
    #[serde(default)]
    pub extra_samples: Option<usize>,
    #[serde(default = "default_inflation")]
    pub box_inflation: f64,
    #[serde(default)]
    pub sample_seed: u64,
}

impl Default for IdentificationSpec {
    fn default() -> Self {
        IdentificationSpec { extra_samples: None, box_inflation: default_inflation(), sample_seed: 0 }
    }
}

fn default_inflation() -> f64 {
    0.2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathChoice {
    /// The plain inequalities when the model allows them.
    Auto,
    Plain,
    Extended,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSpec {
    #[serde(default = "default_path")]
    pub path: PathChoice,
    #[serde(default = "default_eps_strict")]
    pub eps_strict: f64,
    #[serde(default = "default_eps_slack")]
    pub eps_slack: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_box")]
    pub box_bound: f64,
    #[serde(default = "default_check_samples")]
    pub check_samples: usize,
    #[serde(default)]
    pub check_seed: u64,
}

impl Default for VerificationSpec {
    fn default() -> Self {
        VerificationSpec {
            path: default_path(),
            eps_strict: default_eps_strict(),
            eps_slack: default_eps_slack(),
            max_iter: default_max_iter(),
            box_bound: default_box(),
            check_samples: default_check_samples(),
            check_seed: 0,
        }
    }
}

fn default_path() -> PathChoice {
    PathChoice::Auto
}
fn default_eps_strict() -> f64 {
    1e-6
}
fn default_eps_slack() -> f64 {
    1e-9
}
fn default_max_iter() -> usize {
    500
}
fn default_box() -> f64 {
    1e4
}
fn default_check_samples() -> usize {
    500
}

impl VerificationSpec {
    pub fn solver_options(&self) -> koopiss::iss::SolverOptions {
        koopiss::iss::SolverOptions {
            eps_strict: self.eps_strict,
            eps_slack: self.eps_slack,
            max_iter: self.max_iter,
            box_bound: self.box_bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir() }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("run")
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::new(Stage::Config, msg)
}

fn rows_ok(r: &Rows, rows: usize, cols: usize) -> bool {
    r.len() == rows && r.iter().all(|row| row.len() == cols)
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Reads and validates a configuration; relative paths inside it refer
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// `(n, m)` of the configured system, when it is simulated.
    pub fn simulated_dims(&self) -> Option<(usize, usize)> {
        match &self.system {
            SystemSpec::Linear { a, d } => Some((a.len(), d.first().map_or(0, Vec::len))),
            SystemSpec::Traffic { b_u, .. } => Some(match b_u {
                Some(b) => (b.len(), b.first().map_or(0, Vec::len)),
                None => (2, 1),
            }),
            SystemSpec::External { .. } => None,
        }
    }

    /// Per-coordinate function names of every block.
    pub fn block_functions(&self, n: usize) -> Vec<Vec<String>> {
        match &self.dictionary.block_functions {
            Some(b) => b.clone(),
            None => self.dictionary.blocks.iter().map(|name| vec![name.clone(); n]).collect(),
        }
    }

    /// Consistency checks that need no computation.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let s = &self.sampling;
        if !(s.t_c > 0.0) || !s.t_c.is_finite() {
            return Err(config_err("sampling.t_c must be positive"));
        }
        if s.n == 0 {
            return Err(config_err("sampling.n must be at least 1"));
        }
        if !(s.noise_std >= 0.0) {
            return Err(config_err("sampling.noise_std must be non-negative"));
        }
        if self.dictionary.blocks.is_empty() && self.dictionary.block_functions.is_none() {
            return Err(config_err("dictionary needs `blocks` or `block_functions`"));
        }
        let names = self.block_functions(1);
        for name in names.iter().flatten() {
            if Builtin::from_name(name).is_none() {
                return Err(config_err(format!("unknown basis function {name:?}")));
            }
        }
        if let Some(d) = &self.disturbance {
            if !d.scale.is_finite() {
                return Err(config_err("disturbance.scale must be finite"));
            }
        }
        match &self.system {
            SystemSpec::Linear { a, d } => {
                let n = a.len();
                if n == 0 || !rows_ok(a, n, n) {
                    return Err(config_err("system.a must be a non-empty square matrix"));
                }
                let m = d.first().map_or(0, Vec::len);
                if !rows_ok(d, n, m) {
                    return Err(config_err(format!("system.d must have {n} rows of equal length")));
                }
            }
            SystemSpec::Traffic { a1, a2, a3, b_u, quad } => {
                let p = a1.as_ref().map_or(1, Vec::len);
                let q = a3.as_ref().map_or(1, Vec::len);
                let n = p + q;
                let checks = [
                    (a1, p, p, "a1"),
                    (a2, p, q, "a2"),
                    (a3, q, q, "a3"),
                    (quad, n, n, "quad"),
                ];
                for (mat, r, c, what) in checks {
                    if let Some(mat) = mat {
                        if !rows_ok(mat, r, c) {
                            return Err(config_err(format!("system.{what} must be {r}x{c}")));
                        }
                    }
                }
                if let Some(b) = b_u {
                    if !rows_ok(b, n, b.first().map_or(0, Vec::len)) {
                        return Err(config_err(format!("system.b_u must have {n} rows of equal length")));
                    }
                }
                if b_u.is_none() && n != 2 {
                    return Err(config_err("system.b_u is required when the state is not two-dimensional"));
                }
            }
            SystemSpec::External { dataset } => {
                if !self.resolve(dataset).is_file() {
                    return Err(config_err(format!("dataset {} does not exist", self.resolve(dataset).display())));
                }
                if self.disturbance.is_some() {
                    return Err(config_err("a disturbance needs a simulated system"));
                }
            }
        }
        if let Some((n, m)) = self.simulated_dims() {
            if s.segments.is_empty() {
                return Err(config_err("a simulated system needs at least one [[sampling.segments]] entry"));
            }
            for (k, seg) in s.segments.iter().enumerate() {
                if seg.x0.len() != n {
                    return Err(config_err(format!("segment {}: x0 has length {}, state dimension is {n}", k + 1, seg.x0.len())));
                }
                if seg.input.dim(m) != m {
                    return Err(config_err(format!("segment {}: input has {} channels, system has {m}", k + 1, seg.input.dim(m))));
                }
                if let InputSpec::Sequence { values } = &seg.input {
                    if values.iter().any(|v| v.len() != m) || values.is_empty() {
                        return Err(config_err(format!("segment {}: ragged input sequence", k + 1)));
                    }
                }
            }
            let blocks = self.block_functions(n);
            if self.dictionary.r.is_none() {
                if let Some(b) = blocks.iter().find(|b| b.len() != n) {
                    return Err(config_err(format!(
                        "block with {} functions needs variable-change matrices (state dimension {n})",
                        b.len()
                    )));
                }
            }
            if let Some(rs) = &self.dictionary.r {
                if rs.len() != blocks.len() {
                    return Err(config_err("dictionary.r needs one matrix per block"));
                }
                for (j, (r, b)) in rs.iter().zip(&blocks).enumerate() {
                    if !rows_ok(r, b.len(), n) {
                        return Err(config_err(format!("dictionary.r[{j}] must be {}x{n}", b.len())));
                    }
                }
            }
            if let Some(offs) = &self.dictionary.offsets {
                if offs.len() != blocks.len() || offs.iter().zip(&blocks).any(|(o, b)| o.len() != b.len()) {
                    return Err(config_err("dictionary.offsets must match the block sizes"));
                }
            }
        }
        Ok(())
    }
}
