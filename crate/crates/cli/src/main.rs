use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use socsmo::harness::{self, BatchConfig, FitParam, LmOptions};
use socsmo::model::{ModelParams, OcpCurves, ParamFile};
use socsmo::observer::Variant;
use socsmo::par::Execution;
use socsmo::profiles::{export_csv, ingest_csv, ColumnMap, CurrentProfile, NoiseSpec, ProfileSpec};
use socsmo::scenarios::{prepare, run_and_persist, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "socsmo", version, about = "Single-particle battery model and dual sliding-mode SOC estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Configuration file (scenario, batch or parameter file depending on the command).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for noise and synthetic profiles.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding ocp_positive.txt and ocp_negative.txt.
    #[arg(long)]
    ocp: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Profile: 1c, 0.5c, dynamic, or a CSV path.
    #[arg(long, default_value = "1c")]
    profile: String,
    /// Run length, s (ignored for CSV profiles).
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Voltage noise standard deviation, V.
    #[arg(long, default_value_t = 0.0)]
    sigma_v: f64,
    /// Current noise standard deviation, A.
    #[arg(long, default_value_t = 0.0)]
    sigma_i: f64,
    /// Parameter file for the nominal cell.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the plant and write t_s,current_a,voltage_v.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
        /// Initial plant SOC.
        #[arg(long, default_value_t = 1.0)]
        initial_soc: f64,
    },
    /// Run one estimator scenario; writes the per-step log and a JSON summary.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "adaptive-dz")]
        variant: String,
        /// Plant SOC minus initial estimate.
        #[arg(long, default_value_t = 0.0)]
        init_error: f64,
        /// Aging cycles applied to the plant.
        #[arg(long)]
        cycles: Option<f64>,
    },
    /// Run a batch of scenarios and write summary tables.
    Batch {
        #[command(flatten)]
        common: Common,
        /// Built-in study: accuracy, convergence or aging (used when --config is absent).
        #[arg(long, default_value = "accuracy")]
        study: String,
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write one per-step CSV per scenario.
        #[arg(long)]
        logs: bool,
    },
    /// Time estimator variants on identical measurements.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated variants.
        #[arg(long, default_value = "state-only,adaptive-dz,plain-dual")]
        variant: String,
        #[arg(long, default_value_t = 7)]
        repetitions: usize,
    },
    /// Fit model parameters to a measured voltage trace.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV with t_s,current_a,voltage_v.
        #[arg(long)]
        profile: PathBuf,
        /// Comma-separated parameter keys, e.g. R_ohm,Q_all.
        #[arg(long, default_value = "R_ohm")]
        fit: String,
        #[arg(long, default_value_t = 1.0)]
        initial_soc: f64,
        #[arg(long, default_value_t = 100)]
        max_iterations: usize,
    },
    /// Write the reference parameter file and OCP tables.
    ExportDefaults {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<socsmo::Error> for Failure {
    fn from(e: socsmo::Error) -> Self {
        let missing_input = matches!(&e, socsmo::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound);
        if e.is_validation() || missing_input {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<socsmo::Error>() {
            Ok(s) => s.into(),
            Err(e) => Failure::Runtime(e),
        }
    }
}

fn invalid(msg: impl std::fmt::Display) -> Failure {
    Failure::Validation(anyhow!("{msg}"))
}

fn curves(common: &Common) -> Result<OcpCurves, Failure> {
    match &common.ocp {
        Some(dir) => Ok(OcpCurves::load(&dir.join("ocp_positive.txt"), &dir.join("ocp_negative.txt"))?),
        None => Ok(OcpCurves::default()),
    }
}

fn nominal(run: &RunArgs) -> Result<ModelParams, Failure> {
    match &run.params {
        Some(p) => Ok(ModelParams::load(p)?),
        None => Ok(ModelParams::reference()),
    }
}

fn profile_spec(run: &RunArgs, seed: Option<u64>) -> ProfileSpec {
    match ProfileSpec::parse_name(&run.profile) {
        ProfileSpec::Dynamic { envelope, .. } => ProfileSpec::Dynamic {
            envelope,
            seed: seed.unwrap_or(0),
        },
        other => other,
    }
}

fn default_duration(spec: &ProfileSpec) -> f64 {
    match spec {
        ProfileSpec::Dynamic { .. } => 1400.0,
        _ => 1200.0,
    }
}

fn scenario_from_args(common: &Common, run: &RunArgs, variant: &str) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_toml(&read(path)?)?,
        None => {
            let spec = profile_spec(run, common.seed);
            let duration = run.duration.unwrap_or_else(|| default_duration(&spec));
            let variant: Variant = variant.parse().map_err(invalid)?;
            let mut cfg = ScenarioConfig::new(format!("{}-{}", spec.short_name(), variant.key()), spec, variant, duration);
            cfg.dt = run.dt;
            cfg.noise = NoiseSpec {
                sigma_v: run.sigma_v,
                sigma_i: run.sigma_i,
                seed: common.seed.unwrap_or(0),
                ..NoiseSpec::none()
            };
            if run.params.is_some() {
                cfg.nominal = Some(ParamFile::from(&nominal(run)?));
            }
            cfg
        }
    };
    if let (Some(seed), Some(_)) = (common.seed, &common.config) {
        cfg.noise.seed = seed;
        if let ProfileSpec::Dynamic { seed: s, .. } = &mut cfg.profile {
            *s = seed;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

fn stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if s.is_empty() { "run".into() } else { s }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common, run, initial_soc } => {
            let mut cfg = scenario_from_args(&common, &run, "state-only")?;
            cfg.initial_soc = initial_soc;
            cfg.validate()?;
            let (_, meas) = prepare(&cfg, &curves(&common)?)?;
            let profile = CurrentProfile::new(meas.t.clone(), meas.current_meas.clone(), Some(meas.y_meas.clone()), "simulated")?;
            std::fs::create_dir_all(&common.out).context("creating output directory")?;
            let path = common.out.join("simulate.csv");
            export_csv(&profile, &path)?;
            if let Some(reason) = &meas.terminated {
                eprintln!("note: {reason}");
            }
            println!("{} samples written to {}", profile.len(), path.display());
        }
        Command::Estimate { common, run, variant, init_error, cycles } => {
            let mut cfg = scenario_from_args(&common, &run, &variant)?;
            if common.config.is_none() {
                cfg.init_soc_error = init_error;
                cfg.aging = cycles.map(socsmo::scenarios::AgingSpec::cycles);
                cfg.validate()?;
            }
            let (result, csv) = run_and_persist(&cfg, &curves(&common)?, &common.out, &stem(&cfg.name))?;
            println!("{}", result.summary_json());
            eprintln!("per-step log: {}", csv.display());
        }
        Command::Batch { common, study, sequential, threads, logs } => {
            let seed = common.seed.unwrap_or(1);
            let mut cfg = match &common.config {
                Some(path) => BatchConfig::from_toml(&read(path)?)?,
                None => BatchConfig::builtin(&study, seed)?,
            };
            if common.config.is_some() {
                if let Some(s) = common.seed {
                    cfg = cfg.with_seed(s);
                }
            }
            if sequential {
                cfg.execution = Execution::Sequential;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let summary = harness::run_batch(&cfg, &curves(&common)?);
            summary.persist(&common.out, logs)?;
            print!("{}", summary.table());
            if summary.failures() > 0 {
                eprintln!("{} of {} scenarios failed", summary.failures(), summary.rows.len());
            }
        }
        Command::Bench { common, run, variant, repetitions } => {
            let variants = variant
                .split(',')
                .map(|v| v.parse::<Variant>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(invalid)?;
            let mut base = scenario_from_args(&common, &run, "state-only")?;
            if common.config.is_none() && run.sigma_v == 0.0 {
                base.noise.sigma_v = 0.005;
            }
            let report = harness::bench_variants(&base, &curves(&common)?, &variants, repetitions)?;
            std::fs::create_dir_all(&common.out).context("creating output directory")?;
            std::fs::write(common.out.join("bench.json"), report.to_json()).context("writing bench.json")?;
            print!("{}", report.table());
        }
        Command::Fit { common, profile, fit, initial_soc, max_iterations } => {
            let subset = fit
                .split(',')
                .map(|s| s.parse::<FitParam>())
                .collect::<Result<Vec<_>, _>>()?;
            let guess = match &common.config {
                Some(p) => ModelParams::load(p)?,
                None => ModelParams::reference(),
            };
            let data = ingest_csv(&profile, &ColumnMap::default())?;
            let opts = LmOptions {
                max_iterations,
                ..LmOptions::default()
            };
            let report = harness::identify_params(&data, &curves(&common)?, &guess, &subset, initial_soc, &opts)?;
            std::fs::create_dir_all(&common.out).context("creating output directory")?;
            let json = serde_json::to_string_pretty(&report).context("serializing fit report")?;
            std::fs::write(common.out.join("fit.json"), &json).context("writing fit.json")?;
            std::fs::write(common.out.join("fitted_params.toml"), report.apply(&guess).to_toml())
                .context("writing fitted parameters")?;
            println!("{json}");
            if !report.converged {
                return Err(Failure::Runtime(anyhow!(
                    "fit did not converge after {} iterations",
                    report.iterations
                )));
            }
        }
        Command::ExportDefaults { common } => {
            for p in harness::export_defaults(&common.out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
