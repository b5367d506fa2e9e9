//! Marginal subspace detection: matched-subspace test statistics, FWER
//! thresholds for both noise models, the strict-threshold decision rule, the
//! guaranteed-detection set and the right/left tail-bound evaluators.

use std::collections::BTreeSet;
use std::f64::consts::E;
use std::fmt::Write as _;

use nalgebra::DVector;

use crate::coherence::CoherenceProfile;
use crate::collection::SubspaceCollection;
use crate::error::{invalid, Result};
use crate::linalg::projection_energy;
use crate::model::{ActivityPattern, NoiseSpec};

/// The concentration constant `e⁻¹/256` of the tail bounds.
pub const C0: f64 = 0.001_437_029_067_075_946_6;

/// Everything a threshold depends on besides the per-subspace coherences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    /// Target FWER level `α`.
    pub alpha: f64,
    /// Number of active subspaces `n`.
    pub active_count: usize,
    /// Collection size `N`.
    pub total: usize,
    pub subspace_dim: usize,
    /// Cumulative active energy `E_A`.
    pub energy_total: f64,
    pub noise: NoiseSpec,
    pub c0: f64,
    /// Thresholds are scaled by `c1²`.
    pub c1: f64,
}

impl ThresholdParams {
    /// Uncalibrated thresholds: `c0 = e⁻¹/256`, `c1 = 1`.
    pub fn uncalibrated(
        alpha: f64,
        active_count: usize,
        total: usize,
        subspace_dim: usize,
        energy_total: f64,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let p = Self { alpha, active_count, total, subspace_dim, energy_total, noise, c0: C0, c1: 1.0 };
        p.validate()?;
        Ok(p)
    }

    /// Calibrated thresholds: `c0 = 1` and scale `c1²`.
    pub fn calibrated(
        alpha: f64,
        active_count: usize,
        total: usize,
        subspace_dim: usize,
        energy_total: f64,
        noise: NoiseSpec,
        c1: f64,
    ) -> Result<Self> {
        let p = Self { alpha, active_count, total, subspace_dim, energy_total, noise, c0: 1.0, c1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.active_count == 0 || self.active_count >= self.total {
            return Err(invalid(format!(
                "need 1 <= n < N, got n = {}, N = {}",
                self.active_count, self.total
            )));
        }
        if self.subspace_dim == 0 {
            return Err(invalid("subspace dimension must be positive"));
        }
        if !(self.energy_total >= 0.0) || !self.energy_total.is_finite() {
            return Err(invalid("cumulative energy must be finite and nonnegative"));
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            return Err(invalid("c0 must be positive"));
        }
        if !(self.c1 > 0.0 && self.c1 <= 1.0) {
            return Err(invalid(format!("c1 must lie in (0, 1], got {}", self.c1)));
        }
        self.noise.validate()
    }

    /// Gaussian tail parameter `δ = log(2N/α)`.
    pub fn delta(&self) -> f64 {
        (2.0 * self.total as f64 / self.alpha).ln()
    }

    /// `ε_η`, or the Gaussian radius `σ√(d + 2δ + 2√(dδ))`.
    pub fn noise_floor(&self) -> f64 {
        match self.noise {
            NoiseSpec::Bounded { epsilon } => epsilon,
            NoiseSpec::Gaussian { sigma } => gaussian_epsilon(sigma, self.subspace_dim, self.delta()),
        }
    }

    /// `log(e²N/α)` for bounded noise, `log(2e²N/α)` for Gaussian noise.
    fn union_log(&self) -> f64 {
        let ratio = self.total as f64 / self.alpha;
        match self.noise {
            NoiseSpec::Bounded { .. } => 2.0 + ratio.ln(),
            NoiseSpec::Gaussian { .. } => 2.0 + (2.0 * ratio).ln(),
        }
    }

    /// `N / (N − n)`.
    fn dilution(&self) -> f64 {
        self.total as f64 / (self.total - self.active_count) as f64
    }

    /// Threshold for the configured noise model.
    pub fn threshold(&self, rho_k: f64, gamma2_k: f64) -> Result<f64> {
        match self.noise {
            NoiseSpec::Bounded { .. } => threshold_deterministic(self, rho_k, gamma2_k),
            NoiseSpec::Gaussian { .. } => threshold_gaussian(self, rho_k, gamma2_k),
        }
    }

    fn threshold_unchecked(&self, rho_k: f64, gamma2_k: f64) -> f64 {
        let n = self.active_count as f64;
        let mixing = rho_k * (n * self.energy_total).sqrt();
        let spread = gamma2_k * self.dilution() * (self.energy_total * self.union_log() / self.c0).sqrt();
        self.c1 * self.c1 * (self.noise_floor() + mixing + spread).powi(2)
    }
}

/// `σ√(d + 2δ + 2√(dδ))`.
pub fn gaussian_epsilon(sigma: f64, subspace_dim: usize, delta: f64) -> f64 {
    let d = subspace_dim as f64;
    sigma * (d + 2.0 * delta + 2.0 * (d * delta).sqrt()).sqrt()
}

fn check_coherences(rho_k: f64, gamma2_k: f64) -> Result<()> {
    if !(rho_k >= 0.0) || !(gamma2_k >= 0.0) || !rho_k.is_finite() || !gamma2_k.is_finite() {
        return Err(invalid("coherences must be finite and nonnegative"));
    }
    Ok(())
}

/// Threshold under bounded deterministic noise.
pub fn threshold_deterministic(params: &ThresholdParams, rho_k: f64, gamma2_k: f64) -> Result<f64> {
    params.validate()?;
    check_coherences(rho_k, gamma2_k)?;
    if !matches!(params.noise, NoiseSpec::Bounded { .. }) {
        return Err(invalid("deterministic threshold requested for Gaussian noise"));
    }
    Ok(params.threshold_unchecked(rho_k, gamma2_k))
}

/// Threshold under i.i.d. Gaussian noise.
pub fn threshold_gaussian(params: &ThresholdParams, rho_k: f64, gamma2_k: f64) -> Result<f64> {
    params.validate()?;
    check_coherences(rho_k, gamma2_k)?;
    if !matches!(params.noise, NoiseSpec::Gaussian { .. }) {
        return Err(invalid("Gaussian threshold requested for bounded noise"));
    }
    Ok(params.threshold_unchecked(rho_k, gamma2_k))
}

/// `T_k(y) = ‖U_kᵀ y‖²` for every subspace.
pub fn test_statistics(collection: &SubspaceCollection, y: &DVector<f64>) -> Result<Vec<f64>> {
    if y.len() != collection.ambient_dim() {
        return Err(invalid(format!(
            "observation length {} does not match ambient dimension {}",
            y.len(),
            collection.ambient_dim()
        )));
    }
    collection.bases().iter().map(|b| projection_energy(b, y)).collect()
}

/// Per-subspace thresholds for a profile.
pub fn thresholds(profile: &CoherenceProfile, params: &ThresholdParams) -> Result<Vec<f64>> {
    params.validate()?;
    if profile.len() != params.total {
        return Err(invalid(format!(
            "profile has {} subspaces but parameters say N = {}",
            profile.len(),
            params.total
        )));
    }
    if profile.subspace_dim != params.subspace_dim {
        return Err(invalid("profile and parameters disagree on d"));
    }
    profile
        .avg_mixing
        .iter()
        .zip(&profile.local_two)
        .map(|(&rho, &gamma)| params.threshold(rho, gamma))
        .collect()
}

/// Test statistics, thresholds and the estimated active set (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub statistics: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub estimated_active: BTreeSet<usize>,
}

impl DetectionResult {
    /// Applies the strict rule `T_k > τ_k`.
    pub fn from_parts(statistics: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        if statistics.len() != thresholds.len() {
            return Err(invalid("statistics and thresholds differ in length"));
        }
        let estimated_active = statistics
            .iter()
            .zip(&thresholds)
            .enumerate()
            .filter(|(_, (t, tau))| t > tau)
            .map(|(k, _)| k)
            .collect();
        Ok(Self { statistics, thresholds, estimated_active })
    }

    /// `k,T_k,tau_k,active` with 1-based `k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,T_k,tau_k,active\n");
        for (k, (t, tau)) in self.statistics.iter().zip(&self.thresholds).enumerate() {
            let active = u8::from(self.estimated_active.contains(&k));
            let _ = writeln!(out, "{},{},{},{}", k + 1, t, tau, active);
        }
        out
    }
}

/// Runs the marginal detector on one observation.
pub fn detect(
    collection: &SubspaceCollection,
    profile: &CoherenceProfile,
    y: &DVector<f64>,
    params: &ThresholdParams,
) -> Result<DetectionResult> {
    if collection.len() != profile.len() {
        return Err(invalid("profile does not belong to this collection"));
    }
    let taus = thresholds(profile, params)?;
    let stats = test_statistics(collection, y)?;
    DetectionResult::from_parts(stats, taus)
}

/// Active subspaces guaranteed to be detected by uncalibrated thresholds.
///
/// `energies` is aligned with `pattern.indices()`; their sum must equal
/// `params.energy_total`. The bound uses `params.c0`; `c1` does not enter.
pub fn guaranteed_set(
    profile: &CoherenceProfile,
    pattern: &ActivityPattern,
    energies: &[f64],
    params: &ThresholdParams,
) -> Result<BTreeSet<usize>> {
    params.validate()?;
    if energies.len() != pattern.len() || pattern.len() != params.active_count {
        return Err(invalid("energies, pattern and n must agree in length"));
    }
    if pattern.total() != profile.len() || profile.len() != params.total {
        return Err(invalid("pattern, profile and parameters disagree on N"));
    }
    if energies.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(invalid("energies must be finite and nonnegative"));
    }
    let total: f64 = energies.iter().sum();
    let e_a = params.energy_total;
    if (total - e_a).abs() > 1e-8 * e_a.max(1.0) {
        return Err(invalid(format!("energies sum to {total}, expected E_A = {e_a}")));
    }
    let n = params.active_count as f64;
    let big_n = params.total as f64;
    let floor = 2.0 * params.noise_floor();
    let log_union = params.union_log();
    let mut out = BTreeSet::new();
    for (&i, &e_i) in pattern.indices().iter().zip(energies) {
        let rest = (e_a - e_i).max(0.0);
        let e1 = (e_a.sqrt() + rest.sqrt()).powi(2);
        let e2 = ((e_a * log_union).sqrt()
            + (2.0 - n / big_n) * (2.0 * rest * (E * big_n).ln()).sqrt())
        .powi(2);
        let bound = (floor
            + profile.avg_mixing[i] * (n * e1).sqrt()
            + profile.local_two[i] * params.dilution() * (e2 / params.c0).sqrt())
        .powi(2);
        if e_i > bound {
            out.insert(i);
        }
    }
    Ok(out)
}

/// A tail-probability bound; `condition_violated` marks the vacuous value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub value: f64,
    pub condition_violated: bool,
}

impl TailBound {
    const VACUOUS: Self = Self { value: 1.0, condition_violated: true };

    fn from_exponent(exponent: f64, params: &ThresholdParams) -> Self {
        let gaussian_tail = match params.noise {
            NoiseSpec::Bounded { .. } => 0.0,
            NoiseSpec::Gaussian { .. } => (-params.delta()).exp(),
        };
        Self { value: E * E * exponent.exp() + gaussian_tail, condition_violated: false }
    }
}

/// Bound on `Pr(T_k ≥ τ | k inactive)`.
///
/// Requires `τ > (ε + ρ_k√(nE_A))²`; otherwise the vacuous bound is returned.
pub fn lemma1_bound(params: &ThresholdParams, rho_k: f64, gamma2_k: f64, tau: f64) -> Result<TailBound> {
    params.validate()?;
    check_coherences(rho_k, gamma2_k)?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    let n = params.active_count as f64;
    let base = params.noise_floor() + rho_k * (n * params.energy_total).sqrt();
    let gap = tau.sqrt() - base;
    if !(gap > 0.0) {
        return Ok(TailBound::VACUOUS);
    }
    let big_n = params.total as f64;
    let denom = big_n * big_n * gamma2_k * gamma2_k * params.energy_total;
    let exponent = if denom > 0.0 {
        -params.c0 * (big_n - n).powi(2) * gap * gap / denom
    } else {
        f64::NEG_INFINITY
    };
    Ok(TailBound::from_exponent(exponent, params))
}

/// Bound on `Pr(T_k ≤ τ | k active with energy E_k)`.
///
/// Requires `E_k > (ε + ρ_k√(n(E_A − E_k)))²` and `τ ≤ (√E_k − ε − ρ_k√(n(E_A − E_k)))²`;
/// at equality in the second condition the bound is `e²`. With `E_A = E_k`
/// the exponent is taken in the limit: `−∞` for a positive gap, `0` otherwise.
pub fn lemma2_bound(
    params: &ThresholdParams,
    rho_k: f64,
    gamma2_k: f64,
    energy_k: f64,
    tau: f64,
) -> Result<TailBound> {
    params.validate()?;
    check_coherences(rho_k, gamma2_k)?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    let e_a = params.energy_total;
    if !(energy_k > 0.0) || energy_k > e_a * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "subspace energy must lie in (0, E_A = {e_a}], got {energy_k}"
        )));
    }
    let n = params.active_count as f64;
    let rest = (e_a - energy_k).max(0.0);
    let base = params.noise_floor() + rho_k * (n * rest).sqrt();
    let headroom = energy_k.sqrt() - base;
    if !(headroom > 0.0) || tau.sqrt() > headroom {
        return Ok(TailBound::VACUOUS);
    }
    let gap = (headroom - tau.sqrt()).max(0.0);
    let big_n = params.total as f64;
    let denom = (2.0 * big_n - n).powi(2) * gamma2_k * gamma2_k * rest;
    let exponent = if denom > 0.0 {
        -params.c0 * (big_n - n).powi(2) * gap * gap / denom
    } else if gap > 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    Ok(TailBound::from_exponent(exponent, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BasisMatrix;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const E2: f64 = E * E;

    fn gaussian(n: usize, total: usize, d: usize, energy: f64, sigma: f64) -> ThresholdParams {
        ThresholdParams::uncalibrated(0.1, n, total, d, energy, NoiseSpec::Gaussian { sigma }).unwrap()
    }

    fn bounded(n: usize, total: usize, d: usize, energy: f64, eps: f64) -> ThresholdParams {
        ThresholdParams::uncalibrated(0.1, n, total, d, energy, NoiseSpec::Bounded { epsilon: eps }).unwrap()
    }

    fn orthogonal(dd: usize, d: usize, count: usize) -> SubspaceCollection {
        let bases = (0..count)
            .map(|k| {
                let mut m = DMatrix::<f64>::zeros(dd, d);
                for c in 0..d {
                    m[(k * d + c, c)] = 1.0;
                }
                BasisMatrix::new(m).unwrap()
            })
            .collect();
        SubspaceCollection::new(bases).unwrap()
    }

    #[test]
    fn c0_constant() {
        assert_relative_eq!(C0, (-1f64).exp() / 256.0, max_relative = 1e-15);
    }

    #[test]
    fn statistics_examples() {
        let c = orthogonal(9, 3, 3);
        assert_eq!(test_statistics(&c, &DVector::zeros(9)).unwrap(), vec![0.0; 3]);
        let y = c.bases()[1].embed(&DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        let t = test_statistics(&c, &y).unwrap();
        assert_eq!(t, vec![0.0, y.norm_squared(), 0.0]);
        assert!(test_statistics(&c, &DVector::zeros(8)).is_err());

        let h = SubspaceCollection::sample_haar(7, 12, 3, &mut seeded(1)).unwrap();
        let mut rng = seeded(2);
        let y = DVector::<f64>::from_fn(12, |_, _| rng.sample(StandardNormal));
        let t = test_statistics(&h, &y).unwrap();
        for (k, b) in h.bases().iter().enumerate() {
            let p = b.matrix() * b.matrix().transpose();
            let oracle = (y.transpose() * p * &y)[(0, 0)];
            assert!((t[k] - oracle).abs() <= 1e-10);
        }
    }

    #[test]
    fn gaussian_epsilon_examples() {
        assert_eq!(gaussian_epsilon(0.0, 3, 2.0), 0.0);
        assert_relative_eq!(gaussian_epsilon(1.0, 1, 1.0), 2.236_067_977_499_79, max_relative = 1e-14);
        let delta = (2.0f64 * 2000.0 / 0.1).ln();
        assert_relative_eq!(gaussian_epsilon(0.01, 3, delta), 0.059_556_508_260_819_32, max_relative = 1e-13);
    }

    #[test]
    fn deterministic_threshold_examples() {
        let p = bounded(5, 100, 3, 5.0, 0.1);
        let zero = ThresholdParams { c1: 1.0, ..p };
        assert_relative_eq!(threshold_deterministic(&zero, 0.0, 0.0).unwrap(), 0.01, max_relative = 1e-12);

        // mpmath evaluation of the formula at 40 digits.
        let tau = threshold_deterministic(&p, 0.01, 0.2).unwrap();
        assert_relative_eq!(tau, 1384.821_248_221_393, max_relative = 1e-12);

        let half = ThresholdParams { c1: 0.5, ..p };
        let full = threshold_deterministic(&p, 0.01, 0.2).unwrap();
        assert_relative_eq!(full, 4.0 * threshold_deterministic(&half, 0.01, 0.2).unwrap(), max_relative = 1e-14);

        assert!(threshold_gaussian(&p, 0.0, 0.0).is_err());
        let bad = ThresholdParams { active_count: 100, ..p };
        assert!(threshold_deterministic(&bad, 0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_threshold_examples() {
        let p = gaussian(10, 2000, 3, 10.0, 0.01);
        let delta = (2.0f64 * 2000.0 / 0.1).ln();
        let noise_only = 1e-4 * (3.0 + 2.0 * delta + 2.0 * (3.0 * delta).sqrt());
        assert_relative_eq!(threshold_gaussian(&p, 0.0, 0.0).unwrap(), noise_only, max_relative = 1e-12);

        let cal = ThresholdParams::calibrated(0.1, 10, 2000, 3, 10.0, NoiseSpec::Gaussian { sigma: 0.01 }, 0.136).unwrap();
        assert_relative_eq!(threshold_gaussian(&cal, 0.002, 0.13).unwrap(), 0.044_204_149_763_197_75, max_relative = 1e-12);
    }

    #[test]
    fn thresholds_are_monotone() {
        let base = gaussian(3, 50, 2, 3.0, 0.01);
        let grid = [0.0, 0.01, 0.1, 0.5];
        for w in grid.windows(2) {
            assert!(base.threshold(w[1], 0.2).unwrap() > base.threshold(w[0], 0.2).unwrap());
            assert!(base.threshold(0.05, w[1]).unwrap() > base.threshold(0.05, w[0]).unwrap());
        }
        for e in [1.0, 2.0, 4.0] {
            let lo = ThresholdParams { energy_total: e, ..base };
            let hi = ThresholdParams { energy_total: e * 1.5, ..base };
            assert!(hi.threshold(0.05, 0.2).unwrap() > lo.threshold(0.05, 0.2).unwrap());
        }
        for n in 1..40 {
            let lo = ThresholdParams { active_count: n, ..base };
            let hi = ThresholdParams { active_count: n + 1, ..base };
            assert!(hi.threshold(0.05, 0.2).unwrap() >= lo.threshold(0.05, 0.2).unwrap());
        }
    }

    #[test]
    fn detect_examples() {
        let c = orthogonal(12, 2, 5);
        let profile = CoherenceProfile::compute(&c).unwrap();
        let p = gaussian(1, 5, 2, 1.0, 0.01);
        let r = detect(&c, &profile, &DVector::zeros(12), &p).unwrap();
        assert!(r.estimated_active.is_empty());
        assert!(r.thresholds.iter().all(|&t| t > 0.0));

        let y = c.bases()[3].embed(&DVector::from_vec(vec![0.6, 0.8])).unwrap();
        let noiseless = ThresholdParams { noise: NoiseSpec::Bounded { epsilon: 0.1 }, ..p };
        let r = detect(&c, &profile, &y, &noiseless).unwrap();
        assert_eq!(r.estimated_active.iter().copied().collect::<Vec<_>>(), vec![3]);
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "k,T_k,tau_k,active");
        assert!(csv.lines().nth(4).unwrap().starts_with("4,1,"));
        assert!(csv.lines().nth(4).unwrap().ends_with(",1"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",0"));
    }

    #[test]
    fn decision_set_is_the_strict_threshold_set() {
        let r = DetectionResult::from_parts(vec![1.0, 2.0, 3.0], vec![1.0, 1.5, 3.5]).unwrap();
        assert_eq!(r.estimated_active.into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn guaranteed_set_examples() {
        let c = orthogonal(12, 2, 5);
        let profile = CoherenceProfile::compute(&c).unwrap();
        let pattern = ActivityPattern::new(vec![0, 2], 5).unwrap();
        let p = bounded(2, 5, 2, 1.0, 0.2);
        // orthogonal: bound collapses to (2ε)² = 0.16
        let set = guaranteed_set(&profile, &pattern, &[0.9, 0.1], &p).unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![0]);
        let low = bounded(2, 5, 2, 0.2, 0.2);
        assert!(guaranteed_set(&profile, &pattern, &[0.1, 0.1], &low).unwrap().is_empty());
        assert!(guaranteed_set(&profile, &pattern, &[0.5, 0.1], &p).is_err());
    }

    #[test]
    fn guaranteed_set_single_active_matches_scalar_oracle() {
        let profile = CoherenceProfile {
            local_two: vec![0.3; 20],
            avg_mixing: vec![0.05; 20],
            avg_subspace: vec![0.2; 20],
            worst_case: 0.2,
            ambient_dim: 30,
            subspace_dim: 2,
        };
        let pattern = ActivityPattern::new(vec![4], 20).unwrap();
        let base = ThresholdParams::calibrated(0.1, 1, 20, 2, 1.0, NoiseSpec::Bounded { epsilon: 0.01 }, 1.0).unwrap();
        // mpmath: bound = 0.85214653913278564 < 1.
        assert_eq!(guaranteed_set(&profile, &pattern, &[1.0], &base).unwrap().len(), 1);
        // γ₂ = 0.4 pushes the bound to about 1.457.
        let worse = CoherenceProfile { local_two: vec![0.4; 20], ..profile };
        assert!(guaranteed_set(&worse, &pattern, &[1.0], &base).unwrap().is_empty());
    }

    #[test]
    fn lemma1_limits_and_values() {
        let p = gaussian(10, 2000, 3, 10.0, 0.01);
        let base = p.noise_floor() + 0.002 * (100.0f64).sqrt();
        let at_edge = lemma1_bound(&p, 0.002, 0.13, (base + 1e-9).powi(2)).unwrap();
        assert!(!at_edge.condition_violated);
        assert_relative_eq!(at_edge.value, E2 + 0.1 / 4000.0, max_relative = 1e-9);

        let below = lemma1_bound(&p, 0.002, 0.13, base * base * 0.5).unwrap();
        assert!(below.condition_violated && below.value == 1.0);

        let tiny_gamma = lemma1_bound(&p, 0.002, 1e-12, 1.0).unwrap();
        assert!(tiny_gamma.value <= 0.1 / 4000.0 + 1e-15);
        let det = bounded(10, 2000, 3, 10.0, 0.01);
        assert_eq!(lemma1_bound(&det, 0.002, 0.0, 1.0).unwrap().value, 0.0);

        // mpmath references.
        assert_relative_eq!(lemma1_bound(&p, 0.002, 0.13, 900.0).unwrap().value, 0.003_965_884_635_963_392, max_relative = 1e-12);
        let cal = ThresholdParams { c0: 1.0, ..p };
        assert_relative_eq!(lemma1_bound(&cal, 0.002, 0.13, 1.0).unwrap().value, 0.051_683_117_762_891_89, max_relative = 1e-12);

        assert!(lemma1_bound(&p, 0.002, 0.13, 0.0).is_err());
    }

    #[test]
    fn lemma2_limits_and_values() {
        let p = bounded(4, 50, 2, 4.0, 0.05);
        let headroom = 1.0 - 0.05 - 0.01 * (12.0f64).sqrt();
        let edge = lemma2_bound(&p, 0.01, 0.1, 1.0, headroom * headroom).unwrap();
        assert!(!edge.condition_violated);
        assert_relative_eq!(edge.value, E2, max_relative = 1e-12);
        let past = lemma2_bound(&p, 0.01, 0.1, 1.0, headroom * headroom * 1.01).unwrap();
        assert!(past.condition_violated);

        assert_relative_eq!(lemma2_bound(&p, 0.01, 0.1, 1.0, 0.25).unwrap().value, 7.375_049_208_859_626, max_relative = 1e-12);
        let cal = ThresholdParams { c0: 1.0, ..p };
        assert_relative_eq!(lemma2_bound(&cal, 0.01, 0.1, 1.0, 0.25).unwrap().value, 1.973_126_470_631_043_8, max_relative = 1e-12);

        // E_k = E_A: the 0/0 limit.
        let single = bounded(1, 50, 2, 1.0, 0.05);
        assert_eq!(lemma2_bound(&single, 0.01, 0.1, 1.0, 0.25).unwrap().value, 0.0);
        let edge = lemma2_bound(&single, 0.01, 0.1, 1.0, 0.95f64.powi(2)).unwrap();
        assert_relative_eq!(edge.value, E2, max_relative = 1e-12);

        let g = gaussian(1, 50, 2, 1.0, 0.0);
        assert_relative_eq!(lemma2_bound(&g, 0.0, 0.1, 1.0, 0.25).unwrap().value, 0.1 / 100.0, max_relative = 1e-12);

        assert!(lemma2_bound(&p, 0.01, 0.1, 5.0, 0.25).is_err());
        assert!(lemma2_bound(&p, 0.01, 0.1, 1.0, -1.0).is_err());
    }

    #[test]
    fn params_validation() {
        let noise = NoiseSpec::Gaussian { sigma: 0.01 };
        assert!(ThresholdParams::uncalibrated(0.0, 1, 10, 2, 1.0, noise).is_err());
        assert!(ThresholdParams::uncalibrated(0.1, 10, 10, 2, 1.0, noise).is_err());
        assert!(ThresholdParams::calibrated(0.1, 1, 10, 2, 1.0, noise, 1.5).is_err());
        assert!(ThresholdParams::calibrated(0.1, 1, 10, 2, 1.0, noise, 0.0).is_err());
        assert!(ThresholdParams::uncalibrated(0.1, 1, 10, 2, 1.0, NoiseSpec::Gaussian { sigma: -1.0 }).is_err());
    }
}
