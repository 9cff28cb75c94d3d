use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bevkit::harness::{
    demo_temporal, golden_generate, golden_verify, gradcheck, run_props, seed_from_env, CheckReport, DemoMode,
    HarnessConfig, ReportFormat,
};
use bevkit::synth::MotionSpec;
use bevkit::Result;

const STATE_ENV: &str = "BEVKIT_STATE_DIR";
const LAST_REPORT: &str = "last_report.json";

/// Verification harness for the depth losses, temporal fusion and instance
/// refinement kernels.
#[derive(Parser)]
#[command(name = "bevkit", version)]
struct Cli {
    /// JSON file with ranking, weights, finite_diff, temperature, bins and lr.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// A target name, a module prefix such as `dgtf`, or `all`.
        #[arg(long, default_value = "all")]
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run randomised property suites.
    Props {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write or check golden tensors.
    Golden {
        #[arg(value_enum)]
        action: GoldenAction,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Temporal alignment demo on a translating feature.
    DemoTemporal {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        mode: Mode,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Defaults to `lr` from the config.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the most recent report.
    Report {
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GoldenAction {
    Generate,
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Trained,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn state_dir() -> PathBuf {
    std::env::var_os(STATE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".bevkit"))
}

fn seed(explicit: Option<u64>) -> Result<u64> {
    explicit.map_or_else(seed_from_env, Ok)
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig> {
    match path {
        Some(p) => HarnessConfig::load(p),
        None => Ok(HarnessConfig::default()),
    }
}

fn run(cli: Cli) -> Result<CheckReport> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let report = match cli.command {
        Command::Gradcheck { target, seed: s, h, tol } => {
            if let Some(h) = h {
                cfg.finite_diff.h = h;
            }
            if let Some(tol) = tol {
                cfg.finite_diff.tol = tol;
            }
            cfg.validate()?;
            gradcheck(&target, &cfg, seed(s)?)?
        }
        Command::Props { suite, trials, seed: s } => {
            let failures = state_dir().join("failures");
            run_props(&suite, &cfg, seed(s)?, trials, Some(&failures))?
        }
        Command::Golden { action, dir, seed: s } => match action {
            GoldenAction::Generate => golden_generate(&dir, &cfg, seed(s)?)?,
            GoldenAction::Verify => golden_verify(&dir, &cfg)?,
        },
        Command::DemoTemporal { spec, mode, steps, lr, seed: s } => {
            let spec = MotionSpec::from_json_file(&spec)?;
            let mode = match mode {
                Mode::Oracle => DemoMode::Oracle,
                Mode::Trained => DemoMode::Trained,
            };
            let outcome = demo_temporal(&spec, mode, steps, lr.unwrap_or(cfg.lr), &cfg, seed(s)?)?;
            let curve: Vec<String> = outcome.curve.iter().map(|e| format!("{e:.6e}")).collect();
            println!("curve: {}", curve.join(" "));
            outcome.report
        }
        Command::Report { format, out } => {
            let last = state_dir().join(LAST_REPORT);
            let report = if last.exists() {
                CheckReport::read(&last)?
            } else {
                CheckReport::new("empty", seed(None)?, cfg.to_json())
            };
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Text => ReportFormat::Text,
            };
            report.write(&out, format)?;
            return Ok(report);
        }
    };
    report.write(&state_dir().join(LAST_REPORT), ReportFormat::Json)?;
    Ok(report)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{}", report.to_text());
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
