//! Generative model: activity patterns, mixing coefficients, signal
//! synthesis and the two noise models.

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::collection::SubspaceCollection;
use crate::error::{invalid, Result};

/// Magnitude of a bounded-noise draw relative to `ε_η`; keeps `‖η‖ < ε_η` strict.
pub const BOUNDED_NOISE_SCALE: f64 = 0.99;

/// The set `A` of active subspace indices (0-based, ascending).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivityPattern {
    indices: Vec<usize>,
    total: usize,
}

impl ActivityPattern {
    /// Builds a pattern from explicit 0-based indices.
    pub fn new(mut indices: Vec<usize>, total: usize) -> Result<Self> {
        indices.sort_unstable();
        let n = indices.len();
        if n == 0 || n >= total {
            return Err(invalid(format!(
                "need 1 <= n < N, got n = {n}, N = {total}"
            )));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("active indices must be distinct"));
        }
        if indices[n - 1] >= total {
            return Err(invalid(format!("active index {} out of range", indices[n - 1] + 1)));
        }
        Ok(Self { indices, total })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Size `N` of the index universe.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }
}

/// Uniform random `n`-subset of `{0, …, N − 1}`.
pub fn sample_activity_pattern<R: Rng + ?Sized>(
    total: usize,
    n: usize,
    rng: &mut R,
) -> Result<ActivityPattern> {
    if n == 0 || n >= total {
        return Err(invalid(format!("need 1 <= n < N, got n = {n}, N = {total}")));
    }
    ActivityPattern::new(index::sample(rng, total, n).into_vec(), total)
}

/// Uniform random `n`-subset that contains `forced`; the law of `A` given `forced ∈ A`.
pub fn sample_pattern_containing<R: Rng + ?Sized>(
    total: usize,
    n: usize,
    forced: usize,
    rng: &mut R,
) -> Result<ActivityPattern> {
    if n == 0 || n >= total || forced >= total {
        return Err(invalid("need 1 <= n < N and the forced index in range"));
    }
    let mut indices: Vec<usize> = index::sample(rng, total - 1, n - 1)
        .into_iter()
        .map(|k| if k >= forced { k + 1 } else { k })
        .collect();
    indices.push(forced);
    ActivityPattern::new(indices, total)
}

/// How the cumulative energy `E_A` is split among active subspaces.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyScheme {
    Equal,
    Custom(Vec<f64>),
}

/// Per-subspace energies summing to `total_energy`.
pub fn allocate_energies(n: usize, total_energy: f64, scheme: &EnergyScheme) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("need at least one active subspace"));
    }
    if !(total_energy >= 0.0) || !total_energy.is_finite() {
        return Err(invalid(format!("total energy must be nonnegative, got {total_energy}")));
    }
    match scheme {
        EnergyScheme::Equal => Ok(vec![total_energy / n as f64; n]),
        EnergyScheme::Custom(list) => {
            if list.len() != n {
                return Err(invalid(format!("expected {n} energies, got {}", list.len())));
            }
            if list.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
                return Err(invalid("energies must be finite and nonnegative"));
            }
            let sum: f64 = list.iter().sum();
            if (sum - total_energy).abs() > 1e-8 * total_energy.max(1.0) {
                return Err(invalid(format!(
                    "custom energies sum to {sum}, expected {total_energy}"
                )));
            }
            Ok(list.clone())
        }
    }
}

/// The coefficient vectors `θ_j` of the active subspaces and their energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCoefficients {
    thetas: Vec<DVector<f64>>,
    energies: Vec<f64>,
}

impl MixingCoefficients {
    /// Fixed coefficients, for worst-case studies; energies are `‖θ_j‖²`.
    pub fn fixed(thetas: Vec<DVector<f64>>) -> Result<Self> {
        if thetas.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(invalid("coefficients must be finite"));
        }
        let energies = thetas.iter().map(|t| t.norm_squared()).collect();
        Ok(Self { thetas, energies })
    }

    pub fn thetas(&self) -> &[DVector<f64>] {
        &self.thetas
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `E_A`.
    pub fn total_energy(&self) -> f64 {
        self.energies.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Draws each `θ_j` uniformly on the sphere of radius `√E_j` in `R^d`.
pub fn sample_coefficients<R: Rng + ?Sized>(
    energies: &[f64],
    subspace_dim: usize,
    rng: &mut R,
) -> Result<MixingCoefficients> {
    if subspace_dim == 0 {
        return Err(invalid("subspace dimension must be positive"));
    }
    if energies.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(invalid("energies must be finite and nonnegative"));
    }
    let thetas = energies
        .iter()
        .map(|&e| unit_sphere(subspace_dim, rng) * e.sqrt())
        .collect();
    Ok(MixingCoefficients { thetas, energies: energies.to_vec() })
}

fn unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Additive noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Deterministic error with `‖η‖ < epsilon`. `epsilon = 0` means no noise.
    Bounded { epsilon: f64 },
    /// `η ~ N(0, sigma² I)`.
    Gaussian { sigma: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let level = self.level();
        if !(level >= 0.0) || !level.is_finite() {
            return Err(invalid(format!("noise level must be nonnegative, got {level}")));
        }
        Ok(())
    }

    /// `ε_η` or `σ`.
    pub fn level(&self) -> f64 {
        match *self {
            NoiseSpec::Bounded { epsilon } => epsilon,
            NoiseSpec::Gaussian { sigma } => sigma,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, ambient_dim: usize, rng: &mut R) -> DVector<f64> {
        match *self {
            NoiseSpec::Gaussian { sigma } => {
                DVector::<f64>::from_fn(ambient_dim, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
            }
            NoiseSpec::Bounded { epsilon } => unit_sphere(ambient_dim, rng) * (BOUNDED_NOISE_SCALE * epsilon),
        }
    }
}

/// One synthesized observation `y = Σ_j Φ_{i_j} θ_j + η`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnmixingInstance {
    pub pattern: ActivityPattern,
    pub coefficients: MixingCoefficients,
    pub noise: NoiseSpec,
    pub noiseless: DVector<f64>,
    pub observation: DVector<f64>,
}

/// `Σ_j Φ_{i_j} θ_j`.
pub fn mix(
    collection: &SubspaceCollection,
    pattern: &ActivityPattern,
    coefficients: &MixingCoefficients,
) -> Result<DVector<f64>> {
    if pattern.len() != coefficients.len() {
        return Err(invalid(format!(
            "pattern has {} active subspaces but {} coefficient vectors were given",
            pattern.len(),
            coefficients.len()
        )));
    }
    if pattern.total() != collection.len() {
        return Err(invalid("pattern and collection disagree on N"));
    }
    let mut x = DVector::<f64>::zeros(collection.ambient_dim());
    for (&i, theta) in pattern.indices().iter().zip(coefficients.thetas()) {
        x += collection.basis(i)?.embed(theta)?;
    }
    Ok(x)
}

pub fn synthesize<R: Rng + ?Sized>(
    collection: &SubspaceCollection,
    pattern: &ActivityPattern,
    coefficients: &MixingCoefficients,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<UnmixingInstance> {
    noise.validate()?;
    let noiseless = mix(collection, pattern, coefficients)?;
    let observation = &noiseless + noise.draw(collection.ambient_dim(), rng);
    Ok(UnmixingInstance {
        pattern: pattern.clone(),
        coefficients: coefficients.clone(),
        noise,
        noiseless,
        observation,
    })
}
