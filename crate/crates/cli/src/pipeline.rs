//! Stages of a run (simulate, identify, predict, verify, audit) and the
//! orchestration that writes their artifacts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use koopiss::dictionary::{build_dictionary, Dictionary, ExtensionTransform, LiftingSpec, SbfSet};
use koopiss::dynsys::{
    sample_snapshots, sin_tanh_disturbance, traffic_system, InputSignal, SnapshotDataset, TrafficParams, Trajectory,
    TrueSystem, INNER_STEPS_PER_SAMPLE,
};
use koopiss::iss::{
    assemble, assemble_extended, assemble_plain, check_certificate, gradient_check, sample_states, solve,
    CheckReport, ExtendedOptions, GradientReport, IssCertificate, LyapunovEvaluator, Margin, Verdict,
};
use koopiss::koopman::{identify, predict, IdentifyOptions, PersidskiiModel};
use koopiss::matlib::{format_real, Mat};

use crate::config::{DisturbanceChannel, PathChoice, PipelineConfig, Rows, SystemSpec, VerificationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Simulate,
    Identify,
    Predict,
    Verify,
    Audit,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Identify => "identify",
            Stage::Predict => "predict",
            Stage::Verify => "verify",
            Stage::Audit => "audit",
            Stage::Report => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError { stage, message: message.into() }
    }

    pub fn at(stage: Stage) -> impl Fn(&dyn fmt::Display) -> Self {
        move |e| PipelineError::new(stage, e.to_string())
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage.name(), self.message)
    }
}

impl std::error::Error for PipelineError {}

pub const EXIT_PIPELINE_ERROR: i32 = 3;

fn mat(rows: &Rows, stage: Stage) -> Result<Mat<f64>, PipelineError> {
    Mat::from_rows(rows).map_err(|e| PipelineError::new(stage, e.to_string()))
}

/// The simulated data plus the noise-free trajectory of every segment.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub dataset: SnapshotDataset<f64>,
    pub truths: Vec<Trajectory<f64>>,
}

pub fn true_system(cfg: &PipelineConfig) -> Result<TrueSystem<f64>, PipelineError> {
    let st = Stage::Simulate;
    let err = PipelineError::at(st);
    let sys = match &cfg.system {
        SystemSpec::Linear { a, d } => TrueSystem::linear(mat(a, st)?, mat(d, st)?).map_err(|e| err(&e))?,
        SystemSpec::Traffic { a1, a2, a3, b_u, quad } => {
            let mut p = TrafficParams::<f64>::shipped();
            let pick = |o: &Option<Rows>, dflt: &Mat<f64>| o.as_ref().map_or(Ok(dflt.clone()), |r| mat(r, st));
            p.a1 = pick(a1, &p.a1)?;
            p.a2 = pick(a2, &p.a2)?;
            p.a3 = pick(a3, &p.a3)?;
            p.b_u = pick(b_u, &p.b_u)?;
            p.quad = pick(quad, &p.quad)?;
            traffic_system(&p).map_err(|e| err(&e))?
        }
        SystemSpec::External { .. } => {
            return Err(PipelineError::new(st, "an external system cannot be simulated"));
        }
    };
    Ok(match &cfg.disturbance {
        Some(d) if d.channel == DisturbanceChannel::Process => {
            let n = sys.state_dim();
            sys.with_disturbance(sin_tanh_disturbance(n, d.scale))
        }
        _ => sys,
    })
}

/// Samples every configured segment (noise seed `seed + k` for segment
/// `k`), or reads the external dataset.
pub fn simulate(cfg: &PipelineConfig) -> Result<Simulation, PipelineError> {
    let st = Stage::Simulate;
    let err = PipelineError::at(st);
    if let SystemSpec::External { dataset } = &cfg.system {
        let path = cfg.resolve(dataset);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PipelineError::new(st, format!("cannot read {}: {e}", path.display())))?;
        let dataset = SnapshotDataset::from_csv(&text).map_err(|e| err(&e))?;
        let truths = segments_of(&dataset);
        return Ok(Simulation { dataset, truths });
    }
    let sys = true_system(cfg)?;
    let s = &cfg.sampling;
    let measured = cfg.disturbance.as_ref().filter(|d| d.channel == DisturbanceChannel::Measurement);
    let mut data: Option<SnapshotDataset<f64>> = None;
    let mut truths = Vec::new();
    for (k, seg) in s.segments.iter().enumerate() {
        let input = seg.input.signal(sys.input_dim(), s.t_c);
        let mut run = sample_snapshots(&sys, &seg.x0, &input, s.t_c, s.n, s.noise_std, s.seed.wrapping_add(k as u64))
            .map_err(|e| err(&e))?;
        if let Some(d) = measured {
            let sig = sin_tanh_disturbance(sys.state_dim(), d.scale);
            for (i, p) in run.dataset.pairs.iter_mut().enumerate() {
                let t = (i + 1) as f64 * s.t_c;
                for (y, dv) in p.y.iter_mut().zip(sig(t)) {
                    *y += dv;
                }
            }
        }
        truths.push(run.clean);
        match &mut data {
            None => data = Some(run.dataset),
            Some(d) => d.extend(&run.dataset).map_err(|e| err(&e))?,
        }
    }
    let dataset = data.ok_or_else(|| PipelineError::new(st, "no segments to sample"))?;
    Ok(Simulation { dataset, truths })
}

/// Splits a dataset into contiguous segments (a new one starts wherever
/// time does not increase) and rebuilds each as a trajectory `x_0..x_K`.
pub fn segments_of(data: &SnapshotDataset<f64>) -> Vec<Trajectory<f64>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=data.len() {
        if k == data.len() || data.times[k] <= data.times[k - 1] {
            let pairs = &data.pairs[start..k];
            let mut states: Vec<Vec<f64>> = pairs.iter().map(|p| p.x.clone()).collect();
            states.push(pairs[pairs.len() - 1].y.clone());
            let mut inputs: Vec<Vec<f64>> = pairs.iter().map(|p| p.u.clone()).collect();
            inputs.push(pairs[pairs.len() - 1].u_next.clone());
            let t0 = data.times[start];
            let times = (0..states.len()).map(|i| t0 + i as f64 * data.t_c).collect();
            let n = data.state_dim();
            let m = data.input_dim();
            out.push(Trajectory {
                times,
                states: Mat::from_fn(states.len(), n, |i, j| states[i][j]),
                inputs: Mat::from_fn(inputs.len(), m, |i, j| inputs[i][j]),
            });
            start = k;
        }
    }
    out
}

pub fn dictionary(cfg: &PipelineConfig, n: usize, m: usize) -> Result<Dictionary<f64>, PipelineError> {
    let st = Stage::Identify;
    let err = PipelineError::at(st);
    let names = cfg.block_functions(n);
    let sbfs = SbfSet::from_names(&names).map_err(|e| err(&e))?;
    let ext = match (&cfg.dictionary.r, &cfg.dictionary.offsets) {
        (None, None) => None,
        (r, offsets) => Some(ExtensionTransform {
            offsets: offsets.clone(),
            r: match r {
                Some(rs) => Some(rs.iter().map(|x| mat(x, st)).collect::<Result<_, _>>()?),
                None => None,
            },
        }),
    };
    let spec = LiftingSpec { degree: cfg.dictionary.degree, include_basis: cfg.dictionary.include_basis };
    build_dictionary(sbfs, n, m, spec, ext).map_err(|e| err(&e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSummary {
    pub lifting_len: usize,
    pub basis_len: usize,
    pub edmd_residual: f64,
    pub gram_condition: f64,
    pub log_residual: f64,
    pub basis_max_residual: f64,
    pub gamma_residual: f64,
    pub gamma_rank: usize,
    pub warnings: Vec<String>,
}

pub fn identify_model(
    cfg: &PipelineConfig,
    data: &SnapshotDataset<f64>,
) -> Result<(PersidskiiModel<f64>, IdentificationSummary), PipelineError> {
    let dict = dictionary(cfg, data.state_dim(), data.input_dim())?;
    let opts = IdentifyOptions {
        extra_samples: cfg.identification.extra_samples,
        box_inflation: cfg.identification.box_inflation,
        sample_seed: cfg.identification.sample_seed,
        ..IdentifyOptions::default()
    };
    let id = identify(data, &dict, &opts).map_err(|e| PipelineError::new(Stage::Identify, e.to_string()))?;
    let mut warnings = id.approx.warnings.clone();
    warnings.extend(id.gamma.warnings.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }
    let summary = IdentificationSummary {
        lifting_len: dict.lifting_len(),
        basis_len: dict.basis_len(),
        edmd_residual: id.approx.residual,
        gram_condition: id.approx.gram_condition,
        log_residual: id.approx.log_residual.unwrap_or(0.0),
        basis_max_residual: id.basis.max_residual(),
        gamma_residual: id.gamma.residual,
        gamma_rank: id.gamma.rank,
        warnings,
    };
    Ok((id.model, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub segments: usize,
    pub samples: usize,
    /// `sqrt(mean (x − x̂)²)` over all samples and coordinates.
    pub rmse: f64,
    /// `sqrt(mean x²)` of the reference trajectories.
    pub rms: f64,
    pub relative_rmse: f64,
}

/// Simulates the model from each segment's initial state under the same
/// held input, on the segment's sampling grid.
pub fn predict_segments(
    model: &PersidskiiModel<f64>,
    truths: &[Trajectory<f64>],
    t_c: f64,
) -> Result<(Vec<Trajectory<f64>>, TrajectorySummary), PipelineError> {
    let err = PipelineError::at(Stage::Predict);
    let mut preds = Vec::new();
    let (mut se, mut ss, mut count) = (0.0, 0.0, 0usize);
    for tr in truths {
        let steps = tr.len() - 1;
        let values: Vec<Vec<f64>> = (0..tr.len()).map(|k| tr.inputs.row(k)).collect();
        let input = InputSignal::Sequence { values, period: t_c };
        let fine = predict(model, &tr.state(0), &input, steps as f64 * t_c, t_c / INNER_STEPS_PER_SAMPLE as f64)
            .map_err(|e| err(&e))?;
        let mut p = fine.decimate(INNER_STEPS_PER_SAMPLE);
        if p.len() != tr.len() {
            return Err(PipelineError::new(Stage::Predict, "prediction grid does not match the reference"));
        }
        p.times = tr.times.clone();
        for k in 0..tr.len() {
            for (a, b) in tr.state(k).iter().zip(p.state(k)) {
                se += (a - b) * (a - b);
                ss += a * a;
                count += 1;
            }
        }
        preds.push(p);
    }
    let rmse = (se / count.max(1) as f64).sqrt();
    let rms = (ss / count.max(1) as f64).sqrt();
    let summary = TrajectorySummary {
        segments: truths.len(),
        samples: count,
        rmse,
        rms,
        relative_rmse: if rms > 0.0 { rmse / rms } else { rmse },
    };
    Ok((preds, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub check: CheckReport,
    pub gradient: GradientReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub path: String,
    pub verdict: Verdict,
    pub line: String,
    pub margins: Vec<Margin>,
    pub reason: String,
    pub audit: Option<AuditSummary>,
}

/// Assembles and solves the inequalities for `model`.
pub fn certify_model(model: &PersidskiiModel<f64>, spec: &VerificationSpec) -> Result<IssCertificate, PipelineError> {
    let err = PipelineError::at(Stage::Verify);
    let prob = match spec.path {
        PathChoice::Auto => assemble(model),
        PathChoice::Plain => assemble_plain(model),
        PathChoice::Extended => assemble_extended(model, ExtendedOptions::default()),
    }
    .map_err(|e| err(&e))?;
    let opts = spec.solver_options();
    let sol = solve(&prob, &opts).map_err(|e| err(&e))?;
    Ok(IssCertificate::from_solution(&prob, &sol, &opts).with_model_digest(model.digest()))
}

/// Samples the Lyapunov function of a feasible certificate. A failed
/// sample is an error of the audit stage.
pub fn audit(
    cert: &IssCertificate,
    model: &PersidskiiModel<f64>,
    spec: &VerificationSpec,
) -> Result<AuditSummary, PipelineError> {
    let err = PipelineError::at(Stage::Audit);
    let check = check_certificate(cert, model, spec.check_samples, spec.check_seed).map_err(|e| err(&e))?;
    let eval = LyapunovEvaluator::new(model, cert).map_err(|e| err(&e))?;
    let pts = sample_states::<f64>(model.n, 100, 1e-2, 1e2, spec.check_seed.wrapping_add(1));
    let gradient = gradient_check(&eval, &pts);
    if !check.passed {
        return Err(PipelineError::new(
            Stage::Audit,
            format!("certificate failed its sampled check: {}", serde_json::to_string(&check).unwrap_or_default()),
        ));
    }
    if !gradient.passed {
        return Err(PipelineError::new(
            Stage::Audit,
            format!("Lyapunov gradient disagrees with finite differences ({:e})", gradient.max_relative_error),
        ));
    }
    Ok(AuditSummary { check, gradient })
}

pub fn verification_summary(cert: &IssCertificate, audit: Option<AuditSummary>) -> VerificationSummary {
    VerificationSummary {
        path: cert.path.label().to_string(),
        verdict: cert.verdict,
        line: cert.verdict.line().to_string(),
        margins: cert.margins.clone(),
        reason: cert.solver.reason.clone(),
        audit,
    }
}

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const DATASET_FILE: &str = "dataset.csv";
pub const MODEL_FILE: &str = "model.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const TIMINGS_FILE: &str = "timings.json";

pub fn truth_file(k: usize) -> String {
    format!("truth_{}.csv", k + 1)
}

pub fn prediction_file(k: usize) -> String {
    format!("prediction_{}.csv", k + 1)
}

pub fn plot_file(k: usize) -> String {
    format!("plot_{}.csv", k + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub version: u32,
    pub name: String,
    /// Stage that stopped the run, if any.
    #[serde(rename = "FAILED_AT")]
    pub failed_at: Option<Stage>,
    pub error: Option<String>,
    pub samples: Option<usize>,
    pub identification: Option<IdentificationSummary>,
    pub trajectory: Option<TrajectorySummary>,
    pub verification: Option<VerificationSummary>,
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per stage; kept out of the deterministic report.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn new(name: &str) -> Self {
        RunReport {
            kind: "run-report".into(),
            version: 1,
            name: name.into(),
            failed_at: None,
            error: None,
            samples: None,
            identification: None,
            trajectory: None,
            verification: None,
            artifacts: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::new(Stage::Report, e.to_string()))
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.verification.as_ref().map(|v| v.verdict)
    }

    /// 0/1/2 for the verdict, 3 when a stage failed or no verdict exists.
    pub fn exit_code(&self) -> i32 {
        match (self.failed_at, self.verdict()) {
            (None, Some(v)) => v.exit_code(),
            _ => EXIT_PIPELINE_ERROR,
        }
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        if let Some(st) = self.failed_at {
            line(format!("FAILED_AT: {}", st.name()));
            line(format!("error: {}", self.error.as_deref().unwrap_or("")));
        }
        line(format!("run: {}", self.name));
        if let Some(n) = self.samples {
            line(format!("snapshot pairs: {n}"));
        }
        if let Some(id) = &self.identification {
            line(format!("lifting functions: {}, basis functions: {}", id.lifting_len, id.basis_len));
            line(format!("EDMD residual: {}", format_real(id.edmd_residual)));
            line(format!("Gram condition: {}", format_real(id.gram_condition)));
            line(format!("generator reconstruction residual: {}", format_real(id.log_residual)));
            line(format!("generator basis residual (max): {}", format_real(id.basis_max_residual)));
            line(format!("Gamma residual: {} (rank {})", format_real(id.gamma_residual), id.gamma_rank));
            for w in &id.warnings {
                line(format!("warning: {w}"));
            }
        }
        if let Some(tr) = &self.trajectory {
            line(format!(
                "trajectory RMSE: {} (RMS {}, relative {})",
                format_real(tr.rmse),
                format_real(tr.rms),
                format_real(tr.relative_rmse)
            ));
        }
        if let Some(v) = &self.verification {
            line(format!("inequalities: {}", v.path));
            for m in &v.margins {
                line(format!(
                    "margin {} [{}]: {}",
                    m.name,
                    if m.strict { "strict" } else { "non-strict" },
                    format_real(m.value)
                ));
            }
            line(format!("solver: {}", v.reason));
            if let Some(a) = &v.audit {
                line(format!(
                    "audit: {} samples passed, identity error {}, gradient error {}",
                    a.check.samples,
                    format_real(a.check.max_identity_error),
                    format_real(a.gradient.max_relative_error)
                ));
            }
            line(v.line.clone());
        }
        out
    }
}

fn write(dir: &Path, name: &str, text: &str, report: &mut RunReport) -> Result<(), PipelineError> {
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| PipelineError::new(Stage::Report, format!("cannot write {}: {e}", path.display())))?;
    if !report.artifacts.iter().any(|a| a == name) {
        report.artifacts.push(name.to_string());
    }
    Ok(())
}

/// `t,x1..xn,xhat1..xhatn`.
pub fn plot_csv(truth: &Trajectory<f64>, pred: &Trajectory<f64>) -> String {
    let n = truth.states.cols();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..truth.len().min(pred.len()) {
        let row: Vec<String> = std::iter::once(truth.times[k])
            .chain(truth.state(k))
            .chain(pred.state(k))
            .map(format_real)
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Outcome of a full run; artifacts are on disk in `dir`.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
    pub model: Option<PersidskiiModel<f64>>,
    pub certificate: Option<IssCertificate>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }
}

fn timed<R>(report: &mut RunReport, stage: Stage, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let r = f();
    report.timings.push((stage.name().to_string(), start.elapsed().as_secs_f64()));
    r
}

/// Runs every stage and writes the artifacts. A failing stage is recorded
/// in the report (`FAILED_AT`) together with whatever was produced before
/// it; only a failure to write the output directory itself is returned as
/// an error.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::new(Stage::Report, format!("cannot create {}: {e}", dir.display())))?;
    let mut report = RunReport::new(&cfg.name);
    let mut outcome = RunOutcome { dir: dir.clone(), report: RunReport::new(&cfg.name), model: None, certificate: None };
    let result = run_stages(cfg, &dir, &mut report, &mut outcome);
    if let Err(e) = result {
        log::error!("{e}");
        report.failed_at = Some(e.stage);
        report.error = Some(e.message);
    }
    let json = report.to_json();
    let text = report.render();
    write(&dir, REPORT_FILE, &json, &mut report)?;
    write(&dir, REPORT_TEXT, &text, &mut report)?;
    // the artifact list gained the report files; keep the file in sync
    std::fs::write(dir.join(REPORT_FILE), report.to_json())
        .map_err(|e| PipelineError::new(Stage::Report, e.to_string()))?;
    let timings: Vec<serde_json::Value> = report
        .timings
        .iter()
        .map(|(s, t)| serde_json::json!({ "stage": s, "seconds": t }))
        .collect();
    let _ = std::fs::write(dir.join(TIMINGS_FILE), serde_json::to_string_pretty(&timings).unwrap_or_default());
    outcome.report = report;
    Ok(outcome)
}

fn run_stages(
    cfg: &PipelineConfig,
    dir: &Path,
    report: &mut RunReport,
    outcome: &mut RunOutcome,
) -> Result<(), PipelineError> {
    cfg.validate()?;
    let sim = timed(report, Stage::Simulate, || simulate(cfg))?;
    report.samples = Some(sim.dataset.len());
    write(dir, DATASET_FILE, &sim.dataset.to_csv(), report)?;
    for (k, tr) in sim.truths.iter().enumerate() {
        write(dir, &truth_file(k), &tr.to_csv(), report)?;
    }

    let (model, summary) = timed(report, Stage::Identify, || identify_model(cfg, &sim.dataset))?;
    report.identification = Some(summary);
    write(dir, MODEL_FILE, &model.to_json(), report)?;
    outcome.model = Some(model.clone());

    let (preds, tsum) = timed(report, Stage::Predict, || predict_segments(&model, &sim.truths, sim.dataset.t_c))?;
    report.trajectory = Some(tsum);
    for (k, (p, tr)) in preds.iter().zip(&sim.truths).enumerate() {
        write(dir, &prediction_file(k), &p.to_csv(), report)?;
        write(dir, &plot_file(k), &plot_csv(tr, p), report)?;
    }

    let cert = timed(report, Stage::Verify, || certify_model(&model, &cfg.verification))?;
    write(dir, CERTIFICATE_FILE, &cert.to_json(), report)?;
    outcome.certificate = Some(cert.clone());
    report.verification = Some(verification_summary(&cert, None));
    if cert.is_feasible() {
        let a = timed(report, Stage::Audit, || audit(&cert, &model, &cfg.verification))?;
        report.verification = Some(verification_summary(&cert, Some(a)));
    }
    Ok(())
}

/// Re-renders a finished run: the text report and the plot CSVs, from the
/// stored report and trajectories.
pub fn rerender(dir: &Path) -> Result<RunReport, PipelineError> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|e| {
            PipelineError::new(
                Stage::Report,
                format!("missing {} ({e}); it is produced by `run`", dir.join(name).display()),
            )
        })
    };
    let mut report = RunReport::from_json(&read(REPORT_FILE)?)?;
    let err = PipelineError::at(Stage::Report);
    let segments = report.trajectory.as_ref().map_or(0, |t| t.segments);
    for k in 0..segments {
        let truth = Trajectory::<f64>::from_csv(&read(&truth_file(k))?).map_err(|e| err(&e))?;
        let pred = Trajectory::<f64>::from_csv(&read(&prediction_file(k))?).map_err(|e| err(&e))?;
        write(dir, &plot_file(k), &plot_csv(&truth, &pred), &mut report)?;
    }
    write(dir, REPORT_TEXT, &report.render(), &mut report)?;
    Ok(report)
}
