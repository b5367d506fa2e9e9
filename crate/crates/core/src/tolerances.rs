//! Library-wide numerical tolerances, collected in one record.

/// Numerical tolerances used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max absolute entry of `UᵀU − I` accepted for an orthonormal basis.
    pub orthonormality: f64,
    /// Relative singular-value floor below which a matrix is rank deficient.
    pub rank: f64,
    /// Pairwise coherence must stay below `1 − disjointness`.
    pub disjointness: f64,
    /// Relative convergence tolerance of the power iteration.
    pub power_iteration: f64,
    pub power_iteration_max_iters: usize,
    /// Matrices with both dimensions at most this size use a full SVD.
    pub svd_max_dim: usize,
    /// Collections up to this size cache the full pairwise-coherence matrix.
    pub pairwise_cache_max: usize,
}

pub const TOLERANCES: Tolerances = Tolerances {
    orthonormality: 1e-10,
    rank: 1e-12,
    disjointness: 1e-12,
    power_iteration: 1e-12,
    power_iteration_max_iters: 10_000,
    svd_max_dim: 64,
    pairwise_cache_max: 4096,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}
