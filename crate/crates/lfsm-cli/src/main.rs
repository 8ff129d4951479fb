//! Command-line front end for the `lfsm` library: simulate linear fractional
//! stable motion paths, estimate `(sigma, alpha, H)` from path files, and run
//! replicated Monte Carlo studies.
//!
//! Every command writes a manifest (argv echo, resolved configuration, master
//! seed, version, wall-clock duration) so a run can be reproduced exactly.
//!
//! Exit codes: 0 success, 2 invalid flags or configuration, 3 resource cap or
//! I/O failure, 4 estimation failure on degenerate input.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lfsm::mc::{run_mc, write_density_csv, write_summary_csv, EstimatorKind, McConfig, McResult};
use lfsm::sim::{read_values_csv, simulate_high, simulate_low, write_csv, Frequency, SamplePath};
use lfsm::{
    estimate_continuous_high, estimate_continuous_low, estimate_general_high,
    estimate_general_low, EstimationResult, EstimatorConfig, LfsmError, LfsmParams, SeedSpec,
    SimConfig,
};

const EXIT_USAGE: u8 = 2;
const EXIT_RESOURCE: u8 = 3;
const EXIT_ESTIMATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "lfsm",
    version,
    about = "Simulate linear fractional stable motion and estimate (sigma, alpha, H)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sample path and write it as an `index,value` CSV.
    Simulate(SimulateArgs),
    /// Estimate (sigma, alpha, H) from a path CSV; prints a JSON report.
    Estimate(EstimateArgs),
    /// Run a replicated simulation + estimation study and write its tables.
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FreqArg {
    /// Unit-spaced observations.
    Low,
    /// Observations spaced 1/n on a unit horizon.
    High,
}

impl From<FreqArg> for Frequency {
    fn from(f: FreqArg) -> Self {
        match f {
            FreqArg::Low => Frequency::Low,
            FreqArg::High => Frequency::High,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Fixed-order characteristic-function estimator, low frequency.
    #[value(name = "cont_low")]
    ContLow,
    /// Fixed-order characteristic-function estimator, high frequency.
    #[value(name = "cont_high")]
    ContHigh,
    /// Two-stage estimator with data-driven order, low frequency.
    #[value(name = "gen_low")]
    GenLow,
    /// Two-stage moment-ratio estimator, high frequency.
    #[value(name = "gen_high")]
    GenHigh,
}

impl MethodArg {
    fn kind(self) -> EstimatorKind {
        match self {
            MethodArg::ContLow => EstimatorKind::ContinuousLow,
            MethodArg::ContHigh => EstimatorKind::ContinuousHigh,
            MethodArg::GenLow => EstimatorKind::GeneralLow,
            MethodArg::GenHigh => EstimatorKind::GeneralHigh,
        }
    }

    fn frequency(self) -> Frequency {
        match self {
            MethodArg::ContLow | MethodArg::GenLow => Frequency::Low,
            MethodArg::ContHigh | MethodArg::GenHigh => Frequency::High,
        }
    }
}

fn kind_slug(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::ContinuousLow => "cont_low",
        EstimatorKind::ContinuousHigh => "cont_high",
        EstimatorKind::GeneralLow => "gen_low",
        EstimatorKind::GeneralHigh => "gen_high",
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scale parameter (> 0).
    #[arg(long)]
    sigma: f64,
    /// Stability index in (0, 2).
    #[arg(long)]
    alpha: f64,
    /// Self-similarity index in (0, 1), different from 1/alpha.
    #[arg(long)]
    hurst: f64,
    /// Number of observed increments; the CSV gets n + 1 value rows.
    #[arg(long)]
    n: usize,
    /// Sampling scheme.
    #[arg(long, value_enum)]
    freq: FreqArg,
    /// Master seed of the noise stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise cells per observation spacing.
    #[arg(long, default_value_t = 256)]
    mesh: u32,
    /// Kernel memory kept, in observation spacings.
    #[arg(long, default_value_t = 600)]
    memory: u32,
    /// Output CSV path; the manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Path CSV (`index,value`, one row per observation).
    #[arg(long)]
    input: PathBuf,
    /// How the input was sampled.
    #[arg(long, value_enum)]
    freq: FreqArg,
    /// Estimation route.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Moment order: in (0, 1/2) for cont_*, in (-1/2, 0) for gen_*.
    #[arg(long, allow_hyphen_values = true)]
    p: f64,
    /// Second negative moment order; required by gen_high.
    #[arg(long, allow_hyphen_values = true)]
    p2: Option<f64>,
    /// Increment order for cont_* (default 2); gen_* pick their own.
    #[arg(long)]
    k: Option<u32>,
    /// First characteristic-function argument.
    #[arg(long, default_value_t = 1.0)]
    t1: f64,
    /// Second characteristic-function argument.
    #[arg(long, default_value_t = 2.0)]
    t2: f64,
    /// Optional second argument pair: turns on the regime decision rule of
    /// the characteristic-function routes.
    #[arg(long, requires = "t4")]
    t3: Option<f64>,
    #[arg(long, requires = "t3")]
    t4: Option<f64>,
    /// Optional second moment-order pair: turns on the regime decision rule
    /// of the two-stage high-frequency route.
    #[arg(long, allow_hyphen_values = true, requires = "p4")]
    p3: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "p3")]
    p4: Option<f64>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    /// Fixed-order routes, both frequencies, at (0.3, 1.8, 0.8), p = 0.4, k = 2.
    Table1,
    /// Two-stage low-frequency route at (0.3, 1.8, 0.8), p = -0.4.
    Table2,
    /// Two-stage low-frequency route at (0.3, 0.8, 0.8), p = -0.4.
    Table3,
    /// Two-stage high-frequency route at (0.3, 1.8, 0.8), p = -0.4, p2 = -0.2.
    Table4,
    /// Two-stage high-frequency route at (0.3, 0.8, 0.8), p = -0.4, p2 = -0.2.
    Table5,
}

struct PresetSpec {
    params: LfsmParams,
    estimators: Vec<EstimatorKind>,
    p: f64,
    k: Option<u32>,
}

impl PresetArg {
    fn resolve(self) -> Result<PresetSpec, CliError> {
        let near = LfsmParams::new(0.3, 1.8, 0.8);
        let far = LfsmParams::new(0.3, 0.8, 0.8);
        let (params, estimators, p, k) = match self {
            PresetArg::Table1 => (
                near,
                vec![EstimatorKind::ContinuousLow, EstimatorKind::ContinuousHigh],
                0.4,
                Some(2),
            ),
            PresetArg::Table2 => (near, vec![EstimatorKind::GeneralLow], -0.4, None),
            PresetArg::Table3 => (far, vec![EstimatorKind::GeneralLow], -0.4, None),
            PresetArg::Table4 => (near, vec![EstimatorKind::GeneralHigh], -0.4, None),
            PresetArg::Table5 => (far, vec![EstimatorKind::GeneralHigh], -0.4, None),
        };
        let params = params.map_err(|e| CliError::usage(e.to_string()))?;
        Ok(PresetSpec { params, estimators, p, k })
    }
}

#[derive(Args)]
struct McArgs {
    /// Canned study configuration; explicit parameter flags conflict with it.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    sigma: Option<f64>,
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    alpha: Option<f64>,
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    hurst: Option<f64>,
    #[arg(long, value_enum, required_unless_present = "preset", conflicts_with = "preset")]
    method: Option<MethodArg>,
    /// Moment order: in (0, 1/2) for cont_*, in (-1/2, 0) for gen_*.
    #[arg(
        long,
        allow_hyphen_values = true,
        required_unless_present = "preset",
        conflicts_with = "preset"
    )]
    p: Option<f64>,
    /// Second negative moment order of gen_high (default -0.2).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "preset")]
    p2: Option<f64>,
    /// Increment order for cont_* (default 2).
    #[arg(long, conflicts_with = "preset")]
    k: Option<u32>,
    /// Path lengths, comma separated; overrides the preset ladder
    /// 100,1000,10000.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Option<Vec<usize>>,
    /// Replications per path length.
    #[arg(long, default_value_t = 5000)]
    reps: u32,
    /// Master seed; replication i always uses noise stream i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Noise cells per observation spacing.
    #[arg(long, default_value_t = 64)]
    mesh: u32,
    /// Kernel memory kept, in observation spacings.
    #[arg(long, default_value_t = 600)]
    memory: u32,
    /// First characteristic-function argument.
    #[arg(long, default_value_t = 1.0)]
    t1: f64,
    /// Second characteristic-function argument.
    #[arg(long, default_value_t = 2.0)]
    t2: f64,
    /// Directory for the summary, density, and manifest files.
    #[arg(long)]
    out_dir: PathBuf,
}

/// A failure plus the exit code it maps to.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: EXIT_USAGE }
    }

    fn resource(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: EXIT_RESOURCE }
    }

    fn estimation(message: impl Into<String>) -> Self {
        Self { message: message.into(), code: EXIT_ESTIMATION }
    }

    /// Library errors raised before any estimator ran: bad flags unless the
    /// operation hit a resource cap.
    fn from_setup(err: LfsmError) -> Self {
        match err {
            LfsmError::Resource(_) => Self::resource(err.to_string()),
            _ => Self::usage(err.to_string()),
        }
    }

    /// Library errors raised by an estimator on real data.
    fn from_estimation(err: LfsmError) -> Self {
        match err {
            LfsmError::Resource(_) => Self::resource(err.to_string()),
            _ => Self::estimation(err.to_string()),
        }
    }
}

fn io_resource(context: &str, err: std::io::Error) -> CliError {
    CliError::resource(format!("{context}: {err}"))
}

/// Reproduction record written with every run.
#[derive(Serialize)]
struct RunManifest {
    /// Exact argument vector of the invocation.
    command: Vec<String>,
    /// Fully resolved configuration, defaults included.
    config: serde_json::Value,
    master_seed: u64,
    version: String,
    duration_seconds: f64,
}

fn manifest(argv: &[String], config: serde_json::Value, seed: u64, started: Instant) -> RunManifest {
    RunManifest {
        command: argv.to_vec(),
        config,
        master_seed: seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::resource(format!("failed to serialize JSON: {e}")))?;
    fs::write(path, text + "\n")
        .map_err(|e| io_resource(&format!("failed to write {}", path.display()), e))
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &argv, started),
        Command::Estimate(args) => cmd_estimate(args, &argv, started),
        Command::Mc(args) => cmd_mc(args, &argv, started),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn cmd_simulate(args: SimulateArgs, argv: &[String], started: Instant) -> Result<(), CliError> {
    let params =
        LfsmParams::new(args.sigma, args.alpha, args.hurst).map_err(CliError::from_setup)?;
    let sim = SimConfig {
        mesh_m: args.mesh,
        truncation_m: args.memory,
        ..SimConfig::default()
    };
    let seed = SeedSpec::new(args.seed, 0);
    let path = match Frequency::from(args.freq) {
        Frequency::Low => simulate_low(&params, args.n, &sim, seed),
        Frequency::High => simulate_high(&params, args.n, &sim, seed),
    }
    .map_err(CliError::from_setup)?;

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| io_resource(&format!("failed to create {}", parent.display()), e))?;
    }
    let file = File::create(&args.out)
        .map_err(|e| io_resource(&format!("failed to create {}", args.out.display()), e))?;
    let mut out = BufWriter::new(file);
    write_csv(&path, &mut out)
        .and_then(|()| out.flush())
        .map_err(|e| io_resource(&format!("failed to write {}", args.out.display()), e))?;

    let config = serde_json::json!({
        "params": params,
        "n": args.n,
        "freq": Frequency::from(args.freq),
        "sim": sim,
        "out": args.out,
    });
    let manifest_path = args.out.with_extension("manifest.json");
    write_json(&manifest_path, &manifest(argv, config, args.seed, started))?;
    println!(
        "wrote {} rows to {} (manifest {})",
        path.values.len(),
        args.out.display(),
        manifest_path.display()
    );
    Ok(())
}

/// JSON report of one estimation run.
#[derive(Serialize)]
struct EstimateReport {
    #[serde(flatten)]
    estimate: EstimationResult,
    manifest: RunManifest,
}

fn cmd_estimate(args: EstimateArgs, argv: &[String], started: Instant) -> Result<(), CliError> {
    let freq = Frequency::from(args.freq);
    if args.method.frequency() != freq {
        return Err(CliError::usage(format!(
            "method {} expects a {}-frequency path, got --freq {}",
            kind_slug(args.method.kind()),
            args.method.frequency(),
            freq
        )));
    }
    let positive = matches!(args.method, MethodArg::ContLow | MethodArg::ContHigh);
    if positive && !(args.p > 0.0 && args.p < 0.5) {
        return Err(CliError::usage(format!(
            "cont_* methods need a moment order in (0, 1/2), got --p {}",
            args.p
        )));
    }
    if !positive && !(args.p > -0.5 && args.p < 0.0) {
        return Err(CliError::usage(format!(
            "gen_* methods need a moment order in (-1/2, 0), got --p {}",
            args.p
        )));
    }
    let p_prime = match (args.method, args.p2) {
        (MethodArg::GenHigh, None) => {
            return Err(CliError::usage("gen_high needs a second moment order --p2"));
        }
        (MethodArg::GenHigh, Some(p2)) if !(p2 > -0.5 && p2 < 0.0) || p2 == args.p => {
            return Err(CliError::usage(format!(
                "--p2 must lie in (-1/2, 0) and differ from --p, got {p2}"
            )));
        }
        (_, p2) => p2.unwrap_or(EstimatorConfig::default().p_prime),
    };

    let file = File::open(&args.input)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", args.input.display())))?;
    let values = read_values_csv(BufReader::new(file)).map_err(CliError::from_setup)?;
    let path = SamplePath::from_values(values, freq).map_err(CliError::from_setup)?;

    let cfg = EstimatorConfig {
        p: args.p,
        p_prime,
        k: args.k,
        t1: args.t1,
        t2: args.t2,
        t3: args.t3,
        t4: args.t4,
        p3: args.p3,
        p4: args.p4,
        ..EstimatorConfig::default()
    };
    let estimate = match args.method {
        MethodArg::ContLow => estimate_continuous_low(&path, &cfg),
        MethodArg::ContHigh => estimate_continuous_high(&path, &cfg),
        MethodArg::GenLow => estimate_general_low(&path, &cfg),
        MethodArg::GenHigh => estimate_general_high(&path, &cfg),
    }
    .map_err(CliError::from_estimation)?;

    let config = serde_json::json!({
        "input": args.input,
        "freq": freq,
        "method": kind_slug(args.method.kind()),
        "estimator": cfg,
        "n": path.values.len() - 1,
    });
    let report = EstimateReport { estimate, manifest: manifest(argv, config, 0, started) };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::resource(format!("failed to serialize JSON: {e}")))?;
    println!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, text + "\n")
            .map_err(|e| io_resource(&format!("failed to write {}", out.display()), e))?;
    }
    Ok(())
}

fn cmd_mc(args: McArgs, argv: &[String], started: Instant) -> Result<(), CliError> {
    let (params, estimators, p, k) = match args.preset {
        Some(preset) => {
            let spec = preset.resolve()?;
            (spec.params, spec.estimators, spec.p, spec.k)
        }
        None => {
            // clap guarantees these are present when --preset is absent.
            let params = LfsmParams::new(
                args.sigma.unwrap(),
                args.alpha.unwrap(),
                args.hurst.unwrap(),
            )
            .map_err(CliError::from_setup)?;
            let method = args.method.unwrap();
            (params, vec![method.kind()], args.p.unwrap(), args.k)
        }
    };
    let n_values = args.n.unwrap_or_else(|| vec![100, 1000, 10_000]);
    let est = EstimatorConfig {
        p,
        p_prime: args.p2.unwrap_or(EstimatorConfig::default().p_prime),
        k,
        t1: args.t1,
        t2: args.t2,
        ..EstimatorConfig::default()
    };
    let sim = SimConfig {
        mesh_m: args.mesh,
        truncation_m: args.memory,
        ..SimConfig::default()
    };

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| io_resource(&format!("failed to create {}", args.out_dir.display()), e))?;

    let mut studies = Vec::new();
    for kind in estimators {
        let cfg = McConfig {
            params,
            n_values: n_values.clone(),
            reps: args.reps,
            estimator: kind,
            est,
            sim,
            master_seed: args.seed,
            workers: args.workers,
        };
        let result = run_mc(&cfg).map_err(CliError::from_setup)?;
        write_study(&args.out_dir, kind, &result)?;
        print_study(kind, &result);
        studies.push(serde_json::to_value(&cfg).map_err(|e| {
            CliError::resource(format!("failed to serialize configuration: {e}"))
        })?);
    }

    let config = serde_json::json!({ "studies": studies, "out_dir": args.out_dir });
    write_json(
        &args.out_dir.join("manifest.json"),
        &manifest(argv, config, args.seed, started),
    )?;
    Ok(())
}

/// Write one study's summary table plus a density file per path length and
/// parameter: `summary_<kind>.csv`, `density_<kind>_<param>_n<len>.csv`.
fn write_study(dir: &Path, kind: EstimatorKind, result: &McResult) -> Result<(), CliError> {
    let slug = kind_slug(kind);
    let summary_path = dir.join(format!("summary_{slug}.csv"));
    let file = File::create(&summary_path)
        .map_err(|e| io_resource(&format!("failed to create {}", summary_path.display()), e))?;
    write_summary_csv(result, BufWriter::new(file))
        .map_err(|e| io_resource(&format!("failed to write {}", summary_path.display()), e))?;

    for run in &result.runs {
        for (name, hist) in [
            ("sigma", &run.sigma_density),
            ("alpha", &run.alpha_density),
            ("hurst", &run.hurst_density),
        ] {
            let path = dir.join(format!("density_{slug}_{name}_n{}.csv", run.n));
            let file = File::create(&path)
                .map_err(|e| io_resource(&format!("failed to create {}", path.display()), e))?;
            write_density_csv(hist, BufWriter::new(file))
                .map_err(|e| io_resource(&format!("failed to write {}", path.display()), e))?;
        }
    }
    Ok(())
}

fn print_study(kind: EstimatorKind, result: &McResult) {
    for run in &result.runs {
        println!(
            "{} n={}: sigma {:+.4}/{:.4}  alpha {:+.4}/{:.4}  hurst {:+.4}/{:.4}  \
             (used {}, clamped {}, failures {})",
            kind_slug(kind),
            run.n,
            run.sigma.bias,
            run.sigma.std,
            run.alpha.bias,
            run.alpha.std,
            run.hurst.bias,
            run.hurst.std,
            run.used,
            run.clamped,
            run.failures
        );
    }
}
