//! `ocmsim` command line: simulate, analyze, combinatorics, replicate.
//!
//! Exit codes: 0 success, 2 input or config error, 3 runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::combinatorics::{occupancy_report, PlacementModel};
use crate::detector::{DetectionScheme, DetectorArray};
use crate::error::Error;
use crate::fit::{fit_fringe, FitOptions, FringeFit};
use crate::io::{self, ConfigFile, RunManifest};
use crate::replication::{derive_spec, paper_scenarios, run_comparison};
use crate::rng::StreamFamily;
use crate::simulate::{simulate_with_streams, Execution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SCHEME: &str = "OCM_PNR";

#[derive(Debug, Parser)]
#[command(name = "ocmsim", version, about = "N00N-state fringe detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one detection scheme and write its histogram.
    Simulate(SimulateArgs),
    /// Fit a histogram table.
    Analyze(AnalyzeArgs),
    /// Occupancy counts and efficiency ratios.
    Combinatorics(CombinatoricsArgs),
    /// Run the four laboratory presets and compare them.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// CLASSICAL, QL, OCM, OCM_PNR_COMPOSITE (scans) or QL_MPA, OCM_SP,
    /// OCM_PNR (pixel array).
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Histogram CSV written by `simulate` or `replicate`.
    histogram: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Try 8 phase starts and keep the best fit.
    #[arg(long)]
    multistart: bool,
}

#[derive(Debug, Args)]
struct CombinatoricsArgs {
    /// Pixel multiplicity M (real values allowed for ratios).
    #[arg(short = 'm', long = "pixels")]
    m: f64,
    /// Photon number N.
    #[arg(short = 'n', long = "photons")]
    n: u32,
    #[arg(long, default_value_t = 0.5)]
    coupler: f64,
    #[arg(long, default_value = "multiset_uniform")]
    model: PlacementModel,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    run: RunArgs,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Overflow(_)
            | Error::EnumerationBound { .. }
            | Error::FitPrecondition(_)
            | Error::AmbiguousPeriod(_) => EXIT_INPUT,
            Error::RejectionExhausted(_) | Error::UndefinedRatio(_) => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Combinatorics(a) => cmd_combinatorics(a),
        Command::Replicate(a) => cmd_replicate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

struct Resolved {
    config: ConfigFile,
    digest: String,
    seed: u64,
    execution: Execution,
}

fn resolve(run: &RunArgs) -> CliResult<Resolved> {
    let mut config = match &run.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let digest = config.digest();
    if let Some(events) = run.events.or(config.run.events) {
        config.experiment.events_per_run = events;
    }
    config.experiment.validate()?;
    let seed = run.seed.or(config.run.seed).unwrap_or(DEFAULT_SEED);
    let workers = run.workers.or(config.run.workers);
    if workers == Some(0) {
        return Err(CliError::input("--workers must be at least 1"));
    }
    Ok(Resolved {
        config,
        digest,
        seed,
        execution: Execution::with_workers(workers),
    })
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Collects written paths for the manifest.
struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> CliResult<Self> {
        prepare_out(dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = io::write_output(self.dir, name, contents)
            .map_err(|e| CliError::runtime(format!("cannot write {name}: {e}")))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    fn finish(mut self, command: &str, digest: String, seed: Option<u64>) -> CliResult<()> {
        let mut outputs = self.written.clone();
        outputs.push(self.dir.join("manifest.json").display().to_string());
        let manifest = RunManifest::new(command, digest, seed, outputs);
        self.write("manifest.json", &io::to_json(&manifest))
    }
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let r = resolve(&args.run)?;
    let exp = &r.config.experiment;
    let scheme_name = args
        .scheme
        .or_else(|| r.config.run.scheme.clone())
        .unwrap_or_else(|| DEFAULT_SCHEME.to_string())
        .to_ascii_uppercase();
    let spec = derive_spec(exp)?;
    let streams = StreamFamily::new(r.seed).child(&scheme_name);

    let (spec, scheme, array) = if let Some(s) = paper_scenarios(exp).into_iter().find(|s| s.name == scheme_name) {
        (spec.with_photon_number(s.photon_number)?, s.scheme, exp.scan_grid()?)
    } else {
        let scheme = match scheme_name.as_str() {
            "QL_MPA" => DetectionScheme::QlMpa {
                coupler_split: exp.coupler_split,
            },
            "OCM_SP" => DetectionScheme::OcmSp,
            "OCM_PNR" => DetectionScheme::OcmPnr,
            other => return Err(CliError::input(format!("unknown scheme '{other}'"))),
        };
        let array = DetectorArray::centered(exp.pixel_size_um * 1e-3, exp.array_pixel_count)?;
        (spec, scheme, array)
    };

    let (hist, stats) = simulate_with_streams(&spec, &scheme, &array, exp.events_per_run, streams, r.execution)?;
    let mut out = Outputs::new(&args.run.out)?;
    out.write("histogram.csv", &io::histogram_csv(&hist))?;
    out.write("run_stats.json", &io::to_json(&stats))?;
    out.finish("simulate", r.digest, Some(r.seed))
}

#[derive(Debug, Serialize)]
struct FitRecord<'a> {
    source: String,
    total_generated: u64,
    total_accepted: u64,
    fit: &'a FringeFit,
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.histogram)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", args.histogram.display())))?;
    let mut hist = io::parse_histogram_csv(&text)?;
    // restore the exposure from a sibling run_stats.json when present
    let stats_path = args.histogram.with_file_name("run_stats.json");
    if let Ok(stats) = fs::read_to_string(&stats_path) {
        let value: serde_json::Value =
            serde_json::from_str(&stats).map_err(|e| CliError::input(format!("bad run_stats.json: {e}")))?;
        if let Some(g) = value.get("total_generated").and_then(|g| g.as_u64()) {
            hist = hist.with_total_generated(g)?;
        }
    }
    let options = FitOptions {
        multistart: args.multistart,
        ..FitOptions::default()
    };
    let fit = fit_fringe(&hist, &options)?;
    let record = FitRecord {
        source: args.histogram.display().to_string(),
        total_generated: hist.total_generated(),
        total_accepted: hist.total_accepted(),
        fit: &fit,
    };
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    let mut out = Outputs::new(&args.out)?;
    out.write("fit.json", &io::to_json(&record))?;
    out.write("residuals.csv", &io::residual_csv(&hist, &fit))?;
    out.finish("analyze", digest, None)
}

fn cmd_combinatorics(args: CombinatoricsArgs) -> CliResult<()> {
    let report = occupancy_report(args.m, args.n, args.coupler, args.model)?;
    let json = io::to_json(&report);
    print!("{json}");
    if let Some(dir) = &args.out {
        let digest = hex::encode(Sha256::digest(
            format!("m={} n={} coupler={} model={:?}", args.m, args.n, args.coupler, args.model).as_bytes(),
        ));
        let mut out = Outputs::new(dir)?;
        out.write("combinatorics.json", &json)?;
        out.finish("combinatorics", digest, None)?;
    }
    Ok(())
}

fn cmd_replicate(args: ReplicateArgs) -> CliResult<()> {
    let r = resolve(&args.run)?;
    let report = run_comparison(&r.config.experiment, r.seed, r.execution)?;
    let mut out = Outputs::new(&args.run.out)?;
    for s in &report.scenarios {
        out.write(&format!("histogram_{}.csv", s.name), &io::histogram_csv(&s.histogram))?;
        let table = match &s.fit {
            Some(fit) => io::residual_csv(&s.histogram, fit),
            None => io::observed_csv(&s.histogram),
        };
        out.write(&format!("fringe_{}.csv", s.name), &table)?;
    }
    out.write("comparison_report.json", &io::to_json(&report))?;
    for s in &report.scenarios {
        match (&s.fit, &s.fit_error) {
            (Some(f), _) => eprintln!(
                "{:<18} period {:.4} mm  visibility {:.3}  converged {}",
                s.name, f.period, f.visibility, f.converged
            ),
            (None, Some(e)) => eprintln!("{:<18} no fit: {e}", s.name),
            _ => {}
        }
    }
    out.finish("replicate", r.digest, Some(r.seed))
}
