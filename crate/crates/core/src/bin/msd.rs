use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msd_core::coherence::CoherenceProfile;
use msd_core::detector::{detect, ThresholdParams};
use msd_core::experiment::{build_collection, calibrate_c1, coherence_report, haar_collection, run_sweep};
use msd_core::io::{read_collection, read_vector, write_collection, InstanceRecord};
use msd_core::{DetectionMode, ExperimentConfig, MsdError, NoiseSpec, Result, SubspaceCollection};

#[derive(Parser)]
#[command(name = "msd", version, about = "Marginal subspace detection for subspace unmixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Haar collection and save its bases
    Generate {
        /// Ambient dimension D
        #[arg(short = 'D', long)]
        ambient_dim: usize,
        /// Subspace dimension d
        #[arg(short = 'd', long)]
        subspace_dim: usize,
        /// Number of subspaces N
        #[arg(short = 'N', long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: i64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-subspace coherence profile and 64-bin histograms
    Coherence {
        #[command(flatten)]
        source: CollectionSource,
        /// Profile CSV; stdout when omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Histogram CSV
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Detect the active subspaces behind one observation
    Unmix(UnmixArgs),
    /// Run the seeded sweep over n described by a config file
    Experiment {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides master_seed
        #[arg(long)]
        seed: Option<i64>,
        /// Overrides output_path
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Calibrate c1 from the [calibration] section first
        #[arg(long)]
        calibrate: bool,
    },
    /// Select c1 from the [calibration] grid of a config file
    Calibrate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<i64>,
        /// Grid table CSV; stdout when omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CollectionSource {
    /// Basis file
    #[arg(long)]
    bases: Option<PathBuf>,
    /// Experiment config describing the collection
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides master_seed of --config
    #[arg(long, requires = "config")]
    seed: Option<i64>,
}

#[derive(Args)]
struct UnmixArgs {
    #[arg(long)]
    bases: PathBuf,
    /// Observation vector, or an instance record
    #[arg(long)]
    observation: PathBuf,
    /// FWER level
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Number of active subspaces; read from an instance record when omitted
    #[arg(short = 'n', long)]
    active: Option<usize>,
    /// Cumulative active energy E_A; defaults to n
    #[arg(long)]
    energy: Option<f64>,
    /// Gaussian noise level
    #[arg(long, conflicts_with = "epsilon")]
    sigma: Option<f64>,
    /// Bound on the noise norm
    #[arg(long)]
    epsilon: Option<f64>,
    /// Calibrated thresholds with this c1; uncalibrated thresholds when omitted
    #[arg(long)]
    c1: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn load_collection(path: &Path) -> Result<SubspaceCollection> {
    read_collection(BufReader::new(File::open(path)?))
}

fn load_config(path: &Path, seed: Option<i64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn unmix(args: &UnmixArgs) -> Result<String> {
    let collection = load_collection(&args.bases)?;
    let text = fs::read_to_string(&args.observation)?;
    let (y, record) = if InstanceRecord::looks_like_record(&text) {
        let record = InstanceRecord::parse(text.as_bytes())?;
        (record.observation.clone(), Some(record))
    } else {
        (read_vector(text.as_bytes())?, None)
    };
    let n = args
        .active
        .or(record.as_ref().map(|r| r.pattern.len()))
        .ok_or_else(|| MsdError::InvalidArgument("--active is required for a bare observation vector".into()))?;
    let energy = args
        .energy
        .or(record.as_ref().map(InstanceRecord::energy_total))
        .unwrap_or(n as f64);
    let noise = match (args.sigma, args.epsilon, &record) {
        (Some(sigma), _, _) => NoiseSpec::Gaussian { sigma },
        (_, Some(epsilon), _) => NoiseSpec::Bounded { epsilon },
        (None, None, Some(r)) => r.noise,
        (None, None, None) => {
            return Err(MsdError::InvalidArgument("give --sigma or --epsilon for a bare observation vector".into()))
        }
    };
    let (total, d) = (collection.len(), collection.subspace_dim());
    let params = match args.c1 {
        Some(c1) => ThresholdParams::calibrated(args.alpha, n, total, d, energy, noise, c1)?,
        None => ThresholdParams::uncalibrated(args.alpha, n, total, d, energy, noise)?,
    };
    let profile = CoherenceProfile::compute(&collection)?;
    let result = detect(&collection, &profile, &y, &params)?;
    let mode = match args.c1 {
        Some(c1) => DetectionMode::Calibrated { c1 },
        None => DetectionMode::Theorem1,
    };
    let mut out = format!(
        "# N = {total}, D = {}, d = {d}\n# n = {n}, E_A = {energy}, alpha = {}, noise = {noise:?}\n# c0 = {}, c1 = {}\n",
        collection.ambient_dim(),
        args.alpha,
        mode.c0(),
        mode.c1()
    );
    out.push_str(&result.to_csv());
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { ambient_dim, subspace_dim, count, seed, output } => {
            let collection = haar_collection(count, ambient_dim, subspace_dim, seed as u64)?;
            write_collection(&collection, BufWriter::new(File::create(output)?))
        }
        Command::Coherence { source, output, histogram } => {
            let collection = match (&source.bases, &source.config) {
                (Some(path), _) => load_collection(path)?,
                (None, Some(path)) => build_collection(&load_config(path, source.seed)?)?,
                (None, None) => unreachable!("clap enforces one source"),
            };
            let report = coherence_report(&collection)?;
            if let Some(path) = histogram {
                fs::write(path, report.histogram_csv())?;
            }
            emit(output.as_deref(), &report.summary_csv())
        }
        Command::Unmix(args) => {
            let csv = unmix(&args)?;
            emit(args.output.as_deref(), &csv)
        }
        Command::Experiment { config, seed, output, calibrate } => {
            let mut config = load_config(&config, seed)?;
            if let Some(path) = output {
                config.output_path = path;
            }
            let collection = build_collection(&config)?;
            if calibrate {
                let settings = config
                    .calibration
                    .clone()
                    .ok_or_else(|| MsdError::Config("--calibrate needs a [calibration] section".into()))?;
                let cal = calibrate_c1(&config, &collection, &settings.grid, settings.validation_trials)?;
                eprintln!("selected c1 = {}", cal.selected);
                config.mode = DetectionMode::Calibrated { c1: cal.selected };
            }
            let report = run_sweep(&config, &collection)?;
            report.write_csv(&config.output_path)
        }
        Command::Calibrate { config, seed, output } => {
            let config = load_config(&config, seed)?;
            let settings = config
                .calibration
                .clone()
                .ok_or_else(|| MsdError::Config("missing [calibration] section".into()))?;
            let collection = build_collection(&config)?;
            match calibrate_c1(&config, &collection, &settings.grid, settings.validation_trials) {
                Ok(cal) => {
                    eprintln!("selected c1 = {}", cal.selected);
                    emit(output.as_deref(), &cal.to_csv())
                }
                Err(MsdError::Calibration { alpha, table }) => {
                    emit(output.as_deref(), &table.to_csv())?;
                    Err(MsdError::Calibration { alpha, table })
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msd: {e}");
            ExitCode::FAILURE
        }
    }
}
