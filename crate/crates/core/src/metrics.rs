//! FWER, NDP and FDP estimation over batches of trials.

use std::collections::BTreeSet;

use crate::error::{invalid, Result};

/// True and estimated active sets of one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub true_active: BTreeSet<usize>,
    pub estimated_active: BTreeSet<usize>,
}

impl TrialRecord {
    pub fn new(
        true_active: impl IntoIterator<Item = usize>,
        estimated_active: impl IntoIterator<Item = usize>,
    ) -> Self {
        Self {
            true_active: true_active.into_iter().collect(),
            estimated_active: estimated_active.into_iter().collect(),
        }
    }

    /// `Â ⊄ A`: at least one false positive.
    pub fn has_false_positive(&self) -> bool {
        !self.estimated_active.is_subset(&self.true_active)
    }
}

/// A proportion estimate with its binomial standard error `√(p̂(1 − p̂)/T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl RateEstimate {
    pub fn from_counts(hits: usize, trials: usize) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("cannot estimate a rate from zero trials"));
        }
        let rate = hits as f64 / trials as f64;
        Ok(Self { rate, std_error: binomial_se(rate, trials), trials })
    }

    /// `rate ≤ level + k·SE`.
    pub fn within(&self, level: f64, k: f64) -> bool {
        self.rate <= level + k * self.std_error
    }
}

pub fn binomial_se(rate: f64, trials: usize) -> f64 {
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

/// Fraction of trials with a false positive.
pub fn fwer_estimate(records: &[TrialRecord]) -> Result<RateEstimate> {
    let hits = records.iter().filter(|r| r.has_false_positive()).count();
    RateEstimate::from_counts(hits, records.len())
}

/// `|A \ Â| / |A|`.
pub fn ndp(record: &TrialRecord) -> Result<f64> {
    if record.true_active.is_empty() {
        return Err(invalid("NDP is undefined for an empty true active set"));
    }
    let missed = record.true_active.difference(&record.estimated_active).count();
    Ok(missed as f64 / record.true_active.len() as f64)
}

/// `|Â \ A| / |Â|`, and 0 when nothing was declared active.
pub fn fdp(record: &TrialRecord) -> f64 {
    if record.estimated_active.is_empty() {
        return 0.0;
    }
    let false_hits = record.estimated_active.difference(&record.true_active).count();
    false_hits as f64 / record.estimated_active.len() as f64
}

/// Per-batch averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSummary {
    pub fwer_hat: f64,
    pub ndp_mean: f64,
    pub fdp_mean: f64,
    pub trials: usize,
    /// Binomial standard error of `fwer_hat`.
    pub binomial_se: f64,
}

impl BatchSummary {
    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        let fwer = fwer_estimate(records)?;
        let ndp_sum = records.iter().map(ndp).sum::<Result<f64>>()?;
        let fdp_sum: f64 = records.iter().map(fdp).sum();
        let t = records.len() as f64;
        Ok(Self {
            fwer_hat: fwer.rate,
            ndp_mean: ndp_sum / t,
            fdp_mean: fdp_sum / t,
            trials: records.len(),
            binomial_se: fwer.std_error,
        })
    }

    pub fn fwer(&self) -> RateEstimate {
        RateEstimate { rate: self.fwer_hat, std_error: self.binomial_se, trials: self.trials }
    }
}
