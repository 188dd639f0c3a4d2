use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use koopiss::dynsys::SnapshotDataset;
use koopiss::koopman::PersidskiiModel;
use koopiss_cli::config::{PathChoice, PipelineConfig, VerificationSpec};
use koopiss_cli::pipeline::{
    audit, certify_model, identify_model, rerender, run_pipeline, simulate, truth_file, PipelineError, Stage,
    DATASET_FILE, EXIT_PIPELINE_ERROR,
};

#[derive(Parser)]
#[command(name = "koopiss", version, about = "Identify Persidskii models from data and certify their ISS")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample snapshot data from the configured system.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory (defaults to the configured one).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit a model to a snapshot dataset.
    Identify {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Solve the ISS inequalities for a model and audit the certificate.
    Verify {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Take solver settings from this configuration.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        path: Option<PathArg>,
        #[arg(long)]
        eps_strict: Option<f64>,
        #[arg(long)]
        eps_slack: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        box_bound: Option<f64>,
    },
    /// Regenerate the text report and plot data of a finished run.
    Report {
        #[arg(short, long)]
        run: PathBuf,
    },
    /// Run every stage and write all artifacts.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PathArg {
    Auto,
    Plain,
    Extended,
}

fn read(path: &Path, stage: Stage, producer: &str) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| {
        PipelineError::new(stage, format!("cannot read {} ({e}); it is produced by `{producer}`", path.display()))
    })
}

fn write(path: &Path, text: &str, stage: Stage) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::new(stage, e.to_string()))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::new(stage, format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(o) = out {
        cfg.output.dir = std::env::current_dir().map(|d| d.join(&o)).unwrap_or(o);
    }
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<i32, PipelineError> {
    match cmd {
        Command::Simulate { config, out } => {
            let cfg = load(&config, out)?;
            let sim = simulate(&cfg)?;
            let dir = cfg.output_dir();
            write(&dir.join(DATASET_FILE), &sim.dataset.to_csv(), Stage::Simulate)?;
            for (k, tr) in sim.truths.iter().enumerate() {
                write(&dir.join(truth_file(k)), &tr.to_csv(), Stage::Simulate)?;
            }
            println!("{} snapshot pairs written to {}", sim.dataset.len(), dir.join(DATASET_FILE).display());
            Ok(0)
        }
        Command::Identify { config, data, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let text = read(&data, Stage::Identify, "simulate")?;
            let dataset = SnapshotDataset::<f64>::from_csv(&text).map_err(|e| PipelineError::new(Stage::Identify, e.to_string()))?;
            let (model, summary) = identify_model(&cfg, &dataset)?;
            write(&out, &model.to_json(), Stage::Identify)?;
            println!(
                "model written to {} (EDMD residual {:e}, Gamma residual {:e})",
                out.display(),
                summary.edmd_residual,
                summary.gamma_residual
            );
            Ok(0)
        }
        Command::Verify { model, out, config, path, eps_strict, eps_slack, max_iter, box_bound } => {
            let mut spec = match config {
                Some(c) => PipelineConfig::load(&c)?.verification,
                None => VerificationSpec::default(),
            };
            if let Some(p) = path {
                spec.path = match p {
                    PathArg::Auto => PathChoice::Auto,
                    PathArg::Plain => PathChoice::Plain,
                    PathArg::Extended => PathChoice::Extended,
                };
            }
            spec.eps_strict = eps_strict.unwrap_or(spec.eps_strict);
            spec.eps_slack = eps_slack.unwrap_or(spec.eps_slack);
            spec.max_iter = max_iter.unwrap_or(spec.max_iter);
            spec.box_bound = box_bound.unwrap_or(spec.box_bound);
            let text = read(&model, Stage::Verify, "identify")?;
            let model = PersidskiiModel::<f64>::from_json(&text).map_err(|e| PipelineError::new(Stage::Verify, e.to_string()))?;
            let cert = certify_model(&model, &spec)?;
            write(&out, &cert.to_json(), Stage::Verify)?;
            if cert.is_feasible() {
                audit(&cert, &model, &spec)?;
            }
            println!("{}", cert.verdict.line());
            Ok(cert.verdict.exit_code())
        }
        Command::Report { run } => {
            let report = rerender(&run)?;
            print!("{}", report.render());
            Ok(report.exit_code())
        }
        Command::Run { config, out } => {
            let cfg = load(&config, out)?;
            let outcome = run_pipeline(&cfg)?;
            print!("{}", outcome.report.render());
            Ok(outcome.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("FAILED_AT: {}", e.stage.name());
            eprintln!("error: {}", e.message);
            ExitCode::from(EXIT_PIPELINE_ERROR as u8)
        }
    }
}
