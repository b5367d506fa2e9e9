//! Marginal subspace detection for subspace unmixing.
//!
//! An observation `y = Σ_{i∈A} Φᵢθᵢ + η` mixes a few active subspaces out of
//! a known collection. The detector runs one test per subspace, declaring
//! subspace `k` active when `‖Φₖᵀy‖²` exceeds a threshold chosen from the
//! collection's coherence geometry so that the family-wise error rate stays
//! below a target level.
//!
//! ```
//! use msd_core::{detect, CoherenceProfile, NoiseSpec, SubspaceCollection, ThresholdParams};
//! use msd_core::rng::seeded;
//! use nalgebra::DVector;
//!
//! let collection = SubspaceCollection::sample_haar(40, 30, 2, &mut seeded(1)).unwrap();
//! let profile = CoherenceProfile::compute(&collection).unwrap();
//! let params = ThresholdParams::calibrated(0.1, 1, 40, 2, 1.0, NoiseSpec::Gaussian { sigma: 0.01 }, 0.3).unwrap();
//! let y = collection.basis(7).unwrap().embed(&DVector::from_vec(vec![0.6, 0.8])).unwrap();
//! let result = detect(&collection, &profile, &y, &params).unwrap();
//! assert!(result.estimated_active.contains(&7));
//! ```

pub use nalgebra;

pub mod coherence;
pub mod collection;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tolerances;

pub use coherence::{CoherenceProfile, Histogram};
pub use collection::SubspaceCollection;
pub use detector::{detect, guaranteed_set, DetectionResult, ThresholdParams, C0};
pub use error::{MsdError, Result};
pub use experiment::{calibrate_c1, run_sweep, DetectionMode, ExperimentConfig};
pub use linalg::BasisMatrix;
pub use metrics::{BatchSummary, TrialRecord};
pub use model::{ActivityPattern, NoiseSpec};
pub use tolerances::TOLERANCES;
