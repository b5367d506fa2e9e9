//! Monte Carlo harness: configuration, seeded sweeps over the number of
//! active subspaces, `c1` calibration by validation runs, coherence
//! histograms and an exhaustive maximum-likelihood oracle for tiny problems.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coherence::{CoherenceProfile, Histogram};
use crate::collection::SubspaceCollection;
use crate::detector::{guaranteed_set, test_statistics, thresholds, ThresholdParams, C0};
use crate::error::{invalid, MsdError, Result};
use crate::linalg::{orthonormalize, projection_energy};
use crate::metrics::{BatchSummary, RateEstimate, TrialRecord};
use crate::model::{
    allocate_energies, sample_activity_pattern, sample_coefficients, synthesize, ActivityPattern, EnergyScheme,
    NoiseSpec,
};
use crate::rng::{substream, Domain, StreamRng};

/// Number of equal-width histogram bins in coherence reports.
pub const HISTOGRAM_BINS: usize = 64;

/// Largest number of candidate subsets [`ml_oracle_detect`] will enumerate.
pub const ML_ORACLE_BUDGET: u128 = 1_000_000;

fn config_err(msg: impl Into<String>) -> MsdError {
    MsdError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    /// Ambient dimension `D`.
    #[serde(rename = "D")]
    pub ambient: usize,
    /// Subspace dimension `d`.
    #[serde(rename = "d")]
    pub subspace: usize,
    /// Collection size `N`.
    #[serde(rename = "N")]
    pub count: usize,
    /// Basis file to load instead of sampling a Haar collection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collection: Option<PathBuf>,
}

/// Cumulative energy `E_A` as a function of `n`; always split equally.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyRule {
    /// `E_A = n`, unit energy per active subspace.
    #[default]
    EqualSplit,
    /// The same `E_A` for every `n`.
    Explicit { total: f64 },
}

impl EnergyRule {
    pub fn total(&self, n: usize) -> f64 {
        match *self {
            EnergyRule::EqualSplit => n as f64,
            EnergyRule::Explicit { total } => total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectionMode {
    /// `c0 = e⁻¹/256`, `c1 = 1`.
    Theorem1,
    /// `c0 = 1`, thresholds scaled by `c1²`.
    Calibrated { c1: f64 },
}

impl DetectionMode {
    pub fn c1(&self) -> f64 {
        match *self {
            DetectionMode::Theorem1 => 1.0,
            DetectionMode::Calibrated { c1 } => c1,
        }
    }

    pub fn c0(&self) -> f64 {
        match self {
            DetectionMode::Theorem1 => C0,
            DetectionMode::Calibrated { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Candidate `c1` values, strictly ascending in `(0, 1]`.
    pub grid: Vec<f64>,
    pub validation_trials: usize,
}

/// A full experiment description, read from a TOML file.
///
/// ```toml
/// master_seed = 7
/// output_path = "sweep.csv"
/// n_sweep = [1, 2, 3]
/// trials = 1000
/// sigma = 0.01
/// alpha = 0.1
///
/// [dimensions]
/// D = 150
/// d = 3
/// N = 200
///
/// [energy]
/// rule = "equal_split"
///
/// [mode]
/// kind = "calibrated"
/// c1 = 0.2
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: i64,
    pub output_path: PathBuf,
    pub n_sweep: Vec<usize>,
    pub trials: usize,
    /// Gaussian noise level `σ`.
    pub sigma: f64,
    /// FWER level `α`.
    pub alpha: f64,
    pub dimensions: Dimensions,
    #[serde(default)]
    pub energy: EnergyRule,
    pub mode: DetectionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSettings>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML rendering; the content hash is taken over this text.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    /// SHA-256 of the canonical text framed as a git blob object. The output
    /// location does not enter the hash.
    pub fn content_hash(&self) -> Result<String> {
        let body = Self { output_path: PathBuf::new(), ..self.clone() }.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }

    pub fn seed(&self) -> u64 {
        self.master_seed as u64
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec::Gaussian { sigma: self.sigma }
    }

    pub fn energy_total(&self, n: usize) -> f64 {
        self.energy.total(n)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.dimensions;
        if dims.ambient == 0 || dims.subspace == 0 {
            return Err(config_err("D and d must be positive"));
        }
        if dims.subspace > dims.ambient {
            return Err(config_err(format!("d = {} exceeds D = {}", dims.subspace, dims.ambient)));
        }
        if dims.count < 3 {
            return Err(config_err(format!("need N >= 3 subspaces, got {}", dims.count)));
        }
        if self.n_sweep.is_empty() {
            return Err(config_err("n_sweep is empty"));
        }
        for &n in &self.n_sweep {
            if n == 0 || n >= dims.count {
                return Err(config_err(format!("n = {n} must satisfy 1 <= n < N = {}", dims.count)));
            }
            if n * dims.subspace >= dims.ambient {
                return Err(config_err(format!(
                    "n·d = {} must stay below D = {}",
                    n * dims.subspace,
                    dims.ambient
                )));
            }
        }
        if self.trials == 0 {
            return Err(config_err("trials must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(config_err(format!("sigma must be finite and nonnegative, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(config_err(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if let EnergyRule::Explicit { total } = self.energy {
            if !(total >= 0.0) || !total.is_finite() {
                return Err(config_err(format!("explicit energy must be finite and nonnegative, got {total}")));
            }
        }
        if let DetectionMode::Calibrated { c1 } = self.mode {
            check_c1(c1)?;
        }
        if let Some(cal) = &self.calibration {
            check_grid(&cal.grid)?;
            if cal.validation_trials == 0 {
                return Err(config_err("validation_trials must be positive"));
            }
        }
        Ok(())
    }

    /// Threshold parameters for `n` under the configured mode.
    pub fn threshold_params(&self, n: usize) -> Result<ThresholdParams> {
        self.params_with(n, self.mode)
    }

    /// Uncalibrated parameters for `n`, used for the guaranteed-detection set.
    pub fn theorem1_params(&self, n: usize) -> Result<ThresholdParams> {
        self.params_with(n, DetectionMode::Theorem1)
    }

    fn params_with(&self, n: usize, mode: DetectionMode) -> Result<ThresholdParams> {
        let (alpha, total, d, e_a, noise) =
            (self.alpha, self.dimensions.count, self.dimensions.subspace, self.energy_total(n), self.noise());
        match mode {
            DetectionMode::Theorem1 => ThresholdParams::uncalibrated(alpha, n, total, d, e_a, noise),
            DetectionMode::Calibrated { c1 } => ThresholdParams::calibrated(alpha, n, total, d, e_a, noise, c1),
        }
    }

    fn check_collection(&self, collection: &SubspaceCollection) -> Result<()> {
        let dims = &self.dimensions;
        if collection.ambient_dim() != dims.ambient
            || collection.subspace_dim() != dims.subspace
            || collection.len() != dims.count
        {
            return Err(config_err(format!(
                "collection is N = {}, D = {}, d = {} but the configuration says N = {}, D = {}, d = {}",
                collection.len(),
                collection.ambient_dim(),
                collection.subspace_dim(),
                dims.count,
                dims.ambient,
                dims.subspace
            )));
        }
        Ok(())
    }
}

fn check_c1(c1: f64) -> Result<()> {
    if !(c1 > 0.0 && c1 <= 1.0) {
        return Err(config_err(format!("c1 must lie in (0, 1], got {c1}")));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(config_err("calibration grid is empty"));
    }
    for &c1 in grid {
        check_c1(c1)?;
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_err("calibration grid must be strictly ascending"));
    }
    Ok(())
}

/// Haar collection drawn from the collection stream of `seed`.
pub fn haar_collection(count: usize, ambient_dim: usize, subspace_dim: usize, seed: u64) -> Result<SubspaceCollection> {
    let mut rng = substream(seed, Domain::Collection, 0, 0);
    SubspaceCollection::sample_haar(count, ambient_dim, subspace_dim, &mut rng)
}

/// The collection a run uses: loaded from the configured basis file, or
/// sampled from the Haar measure on the collection seed stream.
pub fn build_collection(config: &ExperimentConfig) -> Result<SubspaceCollection> {
    config.validate()?;
    let dims = &config.dimensions;
    let collection = match &dims.collection {
        Some(path) => crate::io::read_collection(BufReader::new(File::open(path)?))?,
        None => haar_collection(dims.count, dims.ambient, dims.subspace, config.seed())?,
    };
    config.check_collection(&collection)?;
    Ok(collection)
}

/// One random instance: pattern, equal energies, spherical coefficients, noise.
fn draw_instance(
    collection: &SubspaceCollection,
    n: usize,
    energies: &[f64],
    noise: NoiseSpec,
    rng: &mut StreamRng,
) -> Result<(ActivityPattern, DVector<f64>)> {
    let pattern = sample_activity_pattern(collection.len(), n, rng)?;
    let coefficients = sample_coefficients(energies, collection.subspace_dim(), rng)?;
    let instance = synthesize(collection, &pattern, &coefficients, noise, rng)?;
    Ok((pattern, instance.observation))
}

fn above(statistics: &[f64], taus: &[f64]) -> BTreeSet<usize> {
    statistics
        .iter()
        .zip(taus)
        .enumerate()
        .filter(|(_, (t, tau))| t > tau)
        .map(|(k, _)| k)
        .collect()
}

/// Summary of all trials at one `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub summary: BatchSummary,
    /// Fraction of trials in which the guaranteed set was detected in full.
    pub guaranteed_contained: RateEstimate,
    /// Mean size of the guaranteed set.
    pub guaranteed_mean_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let cfg = &self.config;
        let dims = &cfg.dimensions;
        let mut out = String::new();
        let _ = writeln!(out, "# msd experiment");
        let _ = writeln!(out, "# master_seed = {}", cfg.master_seed);
        let _ = writeln!(out, "# config_sha256 = {}", self.config_hash);
        let source = match &dims.collection {
            Some(p) => format!("file {}", p.display()),
            None => "haar".to_string(),
        };
        let _ = writeln!(out, "# collection = {source}");
        let _ = writeln!(out, "# c0 = {}", cfg.mode.c0());
        out.push_str("n,D,d,N,sigma,alpha,c1,trials,fwer,fwer_se,ndp_mean,fdp_mean\n");
        for row in &self.rows {
            let s = &row.summary;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                row.n,
                dims.ambient,
                dims.subspace,
                dims.count,
                cfg.sigma,
                cfg.alpha,
                cfg.mode.c1(),
                s.trials,
                s.fwer_hat,
                s.binomial_se,
                s.ndp_mean,
                s.fdp_mean
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Runs `config.trials` seeded trials at every `n` of the sweep on a fixed collection.
///
/// Trial `t` at `n` draws from its own substream, so the report does not
/// depend on thread scheduling.
pub fn run_sweep(config: &ExperimentConfig, collection: &SubspaceCollection) -> Result<SweepReport> {
    config.validate()?;
    config.check_collection(collection)?;
    let profile = CoherenceProfile::compute(collection)?;
    let noise = config.noise();
    let mut rows = Vec::with_capacity(config.n_sweep.len());
    for &n in &config.n_sweep {
        let taus = thresholds(&profile, &config.threshold_params(n)?)?;
        let theorem1 = config.theorem1_params(n)?;
        let energies = allocate_energies(n, config.energy_total(n), &EnergyScheme::Equal)?;
        let outcomes = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(config.seed(), Domain::Evaluation, n as u64, t as u64);
                let (pattern, y) = draw_instance(collection, n, &energies, noise, &mut rng)?;
                let estimated = above(&test_statistics(collection, &y)?, &taus);
                let guaranteed = guaranteed_set(&profile, &pattern, &energies, &theorem1)?;
                let contained = guaranteed.is_subset(&estimated);
                Ok((TrialRecord::new(pattern.indices().iter().copied(), estimated), contained, guaranteed.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<TrialRecord> = outcomes.iter().map(|(r, _, _)| r.clone()).collect();
        let hits = outcomes.iter().filter(|(_, c, _)| *c).count();
        let size_sum: usize = outcomes.iter().map(|(_, _, s)| s).sum();
        rows.push(SweepRow {
            n,
            summary: BatchSummary::from_records(&records)?,
            guaranteed_contained: RateEstimate::from_counts(hits, config.trials)?,
            guaranteed_mean_size: size_sum as f64 / config.trials as f64,
        });
    }
    Ok(SweepReport { config: config.clone(), config_hash: config.content_hash()?, rows })
}

/// FWER and NDP of one grid point at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub c1: f64,
    pub n: usize,
    pub fwer: RateEstimate,
    pub ndp_mean: f64,
}

/// Grid-versus-FWER/NDP table from a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub alpha: f64,
    pub validation_trials: usize,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    /// Grid values whose empirical FWER is at most `α` at every `n`.
    pub fn feasible(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self.rows.iter().map(|r| r.c1).collect();
        grid.dedup();
        grid.into_iter()
            .filter(|&c1| {
                self.rows
                    .iter()
                    .filter(|r| r.c1 == c1)
                    .all(|r| r.fwer.rate <= self.alpha)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# alpha = {}", self.alpha);
        let _ = writeln!(out, "# validation_trials = {}", self.validation_trials);
        out.push_str("c1,n,fwer,fwer_se,ndp_mean\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.c1, r.n, r.fwer.rate, r.fwer.std_error, r.ndp_mean);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub selected: f64,
    pub table: CalibrationTable,
}

impl Calibration {
    pub fn to_csv(&self) -> String {
        format!("# selected_c1 = {}\n{}", self.selected, self.table.to_csv())
    }
}

/// Chooses `c1` from `grid` by validation runs on the calibration seed stream.
///
/// Every grid point is scored at every `n` of the sweep on the same
/// validation instances. The selected value is the smallest `c1`, hence the
/// least conservative thresholds, whose empirical FWER stays at or below `α`
/// for all `n`.
pub fn calibrate_c1(
    config: &ExperimentConfig,
    collection: &SubspaceCollection,
    grid: &[f64],
    validation_trials: usize,
) -> Result<Calibration> {
    config.validate()?;
    config.check_collection(collection)?;
    check_grid(grid)?;
    if validation_trials == 0 {
        return Err(config_err("validation_trials must be positive"));
    }
    let profile = CoherenceProfile::compute(collection)?;
    let noise = config.noise();
    let (alpha, total, d) = (config.alpha, collection.len(), collection.subspace_dim());
    let mut rows = Vec::with_capacity(grid.len() * config.n_sweep.len());
    let mut per_n = Vec::with_capacity(config.n_sweep.len());
    for &n in &config.n_sweep {
        let e_a = config.energy_total(n);
        let base = thresholds(&profile, &ThresholdParams::calibrated(alpha, n, total, d, e_a, noise, 1.0)?)?;
        let energies = allocate_energies(n, e_a, &EnergyScheme::Equal)?;
        let trials = (0..validation_trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(config.seed(), Domain::Calibration, n as u64, t as u64);
                let (pattern, y) = draw_instance(collection, n, &energies, noise, &mut rng)?;
                Ok((pattern, test_statistics(collection, &y)?))
            })
            .collect::<Result<Vec<_>>>()?;
        per_n.push((n, base, trials));
    }
    for &c1 in grid {
        for (n, base, trials) in &per_n {
            let taus: Vec<f64> = base.iter().map(|tau| c1 * c1 * tau).collect();
            let records: Vec<TrialRecord> = trials
                .iter()
                .map(|(pattern, stats)| TrialRecord::new(pattern.indices().iter().copied(), above(stats, &taus)))
                .collect();
            let summary = BatchSummary::from_records(&records)?;
            rows.push(CalibrationRow { c1, n: *n, fwer: summary.fwer(), ndp_mean: summary.ndp_mean });
        }
    }
    let table = CalibrationTable { alpha, validation_trials, rows };
    match table.feasible().first() {
        Some(&selected) => Ok(Calibration { selected, table }),
        None => Err(MsdError::Calibration { alpha, table }),
    }
}

/// Per-subspace coherences plus fixed-bin histograms of `γ₂,ᵢ` and `ρᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub profile: CoherenceProfile,
    pub local_two: Histogram,
    pub avg_mixing: Histogram,
}

impl CoherenceReport {
    pub fn summary_csv(&self) -> String {
        self.profile.to_csv()
    }

    /// One row per bin: `[lower, upper)` edges and counts for both measures.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# bins = {}", self.local_two.counts.len());
        let _ = writeln!(out, "# mean_local_two = {}", self.profile.mean_local_two());
        let _ = writeln!(out, "# mean_avg_mixing = {}", self.profile.mean_avg_mixing());
        out.push_str("bin,local_two_lower,local_two_upper,local_two_count,avg_mixing_lower,avg_mixing_upper,avg_mixing_count\n");
        let (w2, wr) = (self.local_two.bin_width(), self.avg_mixing.bin_width());
        for b in 0..self.local_two.counts.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                b,
                b as f64 * w2,
                (b + 1) as f64 * w2,
                self.local_two.counts[b],
                b as f64 * wr,
                (b + 1) as f64 * wr,
                self.avg_mixing.counts[b]
            );
        }
        out
    }
}

pub fn coherence_report(collection: &SubspaceCollection) -> Result<CoherenceReport> {
    let profile = CoherenceProfile::compute(collection)?;
    Ok(CoherenceReport {
        local_two: Histogram::new(&profile.local_two, HISTOGRAM_BINS),
        avg_mixing: Histogram::new(&profile.avg_mixing, HISTOGRAM_BINS),
        profile,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive maximum-likelihood detector for tiny problems.
///
/// Returns the `n`-subset whose sum subspace captures the most energy of `y`;
/// the lexicographically first subset wins ties.
pub fn ml_oracle_detect(collection: &SubspaceCollection, y: &DVector<f64>, n: usize) -> Result<BTreeSet<usize>> {
    let total = collection.len();
    let (dd, d) = (collection.ambient_dim(), collection.subspace_dim());
    if n == 0 || n > total {
        return Err(invalid(format!("need 1 <= n <= N, got n = {n}, N = {total}")));
    }
    if n * d > dd {
        return Err(invalid(format!("n·d = {} exceeds D = {dd}", n * d)));
    }
    if y.len() != dd {
        return Err(invalid(format!("observation has length {}, expected {dd}", y.len())));
    }
    let count = binomial(total, n);
    if count > ML_ORACLE_BUDGET {
        return Err(invalid(format!("C({total}, {n}) = {count} subsets exceeds the budget of {ML_ORACLE_BUDGET}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..total).combinations(n) {
        let mut stacked = DMatrix::<f64>::zeros(dd, n * d);
        for (slot, &i) in subset.iter().enumerate() {
            stacked.columns_mut(slot * d, d).copy_from(collection.basis(i)?.matrix());
        }
        let energy = projection_energy(&orthonormalize(&stacked)?, y)?;
        if best.as_ref().is_none_or(|(e, _)| energy > *e) {
            best = Some((energy, subset));
        }
    }
    Ok(best.map(|(_, s)| s.into_iter().collect()).unwrap_or_default())
}
