//! Command-line front end: flag parsing, configuration loading, dispatch and
//! atomic output.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::distributions::OffspringPmf;
use crate::experiments::{
    default_workers, experiment_id, run_capacity_scan, run_gamma_scan, run_magnetization_scan, run_tv_scan,
    run_validation, write_outputs, ExperimentConfig, ExperimentError, Mode, OutputFiles,
};
use crate::field::{overlay_dot, prune, sample_field, FieldMode};
use crate::rng::{stream, StreamKey};
use crate::tree::{sample_gw, DEFAULT_POPULATION_CAP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gwising", version, about = "Ising magnetization on Galton-Watson trees with sparse random fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "gwising-out")]
    pub out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for replica-parallel scans.
    #[arg(long, global = true, value_name = "N", env = "GWISING_WORKERS")]
    pub workers: Option<usize>,
    /// Suppress the summary on standard output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact pruning profiles and bound checks (`mode: gamma`).
    GammaProfile,
    /// Monte Carlo root magnetization (`mode: magnetization`).
    MagnetizationScan,
    /// Capacities of sampled pruned trees (`mode: capacity`).
    CapacityScan,
    /// Total-variation profiles of the pruned offspring laws (`mode: tv`).
    TvScan,
    /// Samples one tree and field and writes the tree, its pruning and a DOT overlay.
    PruneDemo(PruneDemoArgs),
    /// Runs every oracle-equivalence suite.
    Validate,
}

#[derive(Debug, Args)]
pub struct PruneDemoArgs {
    /// Offspring law: dirac2, dirac3, uniform12, mix13, or a JSON pmf.
    #[arg(long, default_value = "dirac2")]
    pub pmf: String,
    /// Depth of the tree.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Field probability on the deepest generation.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
}

/// Errors split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Failed(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::ScheduleOutOfRange { .. } | ExperimentError::WrongMode { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Failed(other.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILED
        }
    }
}

fn load_config(common: &CommonArgs, mode: Mode) -> Result<ExperimentConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("this subcommand needs --config PATH".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.expect_mode(mode)?;
    Ok(cfg)
}

fn workers(common: &CommonArgs) -> Result<usize, Failure> {
    match common.workers {
        Some(0) => Err(Failure::Usage("--workers must be at least 1".into())),
        Some(w) => Ok(w),
        None => Ok(default_workers()),
    }
}

fn emit(common: &CommonArgs, files: &OutputFiles) -> Result<(), Failure> {
    write_outputs(&common.out, files)?;
    if !common.quiet {
        for (name, _) in files {
            println!("wrote {}", common.out.join(name).display());
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<i32, Failure> {
    let common = &cli.common;
    match &cli.command {
        Command::GammaProfile => {
            let scan = run_gamma_scan(&load_config(common, Mode::Gamma)?)?;
            emit(common, &scan.files()?)?;
            Ok(if scan.all_hold() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::MagnetizationScan => {
            let cfg = load_config(common, Mode::Magnetization)?;
            let scan = run_magnetization_scan(&cfg, workers(common)?)?;
            emit(common, &scan.files())?;
            Ok(EXIT_OK)
        }
        Command::CapacityScan => {
            let cfg = load_config(common, Mode::Capacity)?;
            let scan = run_capacity_scan(&cfg, workers(common)?)?;
            emit(common, &scan.files())?;
            Ok(EXIT_OK)
        }
        Command::TvScan => {
            let scan = run_tv_scan(&load_config(common, Mode::Tv)?)?;
            emit(common, &scan.files()?)?;
            let missed = scan.curves.iter().any(|c| c.k_star >= 10.0 && !c.crossing_within_window());
            Ok(if missed { EXIT_FAILED } else { EXIT_OK })
        }
        Command::PruneDemo(args) => {
            prune_demo(common, args)?;
            Ok(EXIT_OK)
        }
        Command::Validate => {
            let seed = match (&common.config, common.seed) {
                (_, Some(seed)) => seed,
                (Some(_), None) => load_config(common, Mode::Validate)?.master_seed,
                (None, None) => 0,
            };
            let report = run_validation(seed)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Failed(e.to_string()))? + "\n";
            emit(common, &vec![("validation_report.json".into(), json)])?;
            if !common.quiet {
                for s in &report.suites {
                    let verdict = if s.pass { "pass" } else { "FAIL" };
                    println!("{verdict} {} ({} instances, max error {:e})", s.suite, s.instances, s.max_error);
                }
            }
            for s in report.suites.iter().filter(|s| !s.pass) {
                for f in &s.failures {
                    eprintln!("{}: {f}", s.suite);
                }
            }
            Ok(if report.pass() { EXIT_OK } else { EXIT_FAILED })
        }
    }
}

/// Resolves a named offspring law or parses a JSON one.
pub fn named_pmf(name: &str) -> Result<OffspringPmf, String> {
    let entries = match name {
        "dirac2" => vec![(2, 1.0)],
        "dirac3" => vec![(3, 1.0)],
        "uniform12" => vec![(1, 0.5), (2, 0.5)],
        "mix13" => vec![(1, 0.5), (3, 0.5)],
        json if json.trim_start().starts_with('{') => {
            return serde_json::from_str(json).map_err(|e| format!("--pmf: {e}"));
        }
        other => return Err(format!("unknown offspring law {other:?}")),
    };
    OffspringPmf::new(entries).map_err(|e| e.to_string())
}

fn prune_demo(common: &CommonArgs, args: &PruneDemoArgs) -> Result<(), Failure> {
    let pmf = named_pmf(&args.pmf).map_err(Failure::Usage)?;
    if !(args.p >= 0.0 && args.p <= 1.0) {
        return Err(Failure::Usage(format!("--p {} must lie in [0, 1]", args.p)));
    }
    let mut rng = stream(common.seed.unwrap_or(0), StreamKey::new(experiment_id::PRUNE_DEMO, 0, 0));
    let tree = sample_gw(&pmf, args.n, &mut rng, DEFAULT_POPULATION_CAP)
        .map_err(|e| Failure::Usage(format!("--pmf: {e}")))?;
    let field = sample_field(&tree, FieldMode::LeavesOnly, args.p, &mut rng);
    let pruned = prune(&tree, &field).map(|p| p.tree);
    let files = vec![
        ("tree.json".to_string(), to_json(&tree)?),
        ("pruned.json".to_string(), to_json(&pruned)?),
        ("overlay.dot".to_string(), overlay_dot(&tree, &field)),
    ];
    emit(common, &files)
}

/// Compact JSON with a trailing newline.
fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string(value).map(|s| s + "\n").map_err(|e| Failure::Failed(e.to_string()))
}
