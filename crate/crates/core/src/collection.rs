//! Collections of subspaces with their mixing bases.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, MsdError, Result};
use crate::linalg::{haar_stiefel_sample, operator_norm_2, BasisMatrix};
use crate::tolerances::TOLERANCES;

/// `N ≥ 2` pairwise-disjoint `d`-dimensional subspaces of `R^D`.
///
/// The stored bases are the mixing bases `Φᵢ`. Pairwise coherences are cached
/// as a dense `N × N` matrix up to [`Tolerances::pairwise_cache_max`]
/// subspaces and recomputed row by row above that.
///
/// [`Tolerances::pairwise_cache_max`]: crate::tolerances::Tolerances
#[derive(Debug, Clone)]
pub struct SubspaceCollection {
    bases: Vec<BasisMatrix>,
    ambient_dim: usize,
    subspace_dim: usize,
    pairwise: Option<Vec<f64>>,
    basis_sum: DMatrix<f64>,
}

impl SubspaceCollection {
    pub fn new(bases: Vec<BasisMatrix>) -> Result<Self> {
        if bases.len() < 2 {
            return Err(invalid(format!(
                "a collection needs at least 2 subspaces, got {}",
                bases.len()
            )));
        }
        let ambient_dim = bases[0].ambient_dim();
        let subspace_dim = bases[0].subspace_dim();
        if let Some((i, b)) = bases
            .iter()
            .enumerate()
            .find(|(_, b)| b.ambient_dim() != ambient_dim || b.subspace_dim() != subspace_dim)
        {
            return Err(invalid(format!(
                "basis {} is {}×{}, expected {ambient_dim}×{subspace_dim}",
                i + 1,
                b.ambient_dim(),
                b.subspace_dim()
            )));
        }
        let mut basis_sum = DMatrix::<f64>::zeros(ambient_dim, subspace_dim);
        for b in &bases {
            basis_sum += b.matrix();
        }
        let mut collection = Self {
            bases,
            ambient_dim,
            subspace_dim,
            pairwise: None,
            basis_sum,
        };
        let n = collection.len();
        if n <= TOLERANCES.pairwise_cache_max {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| collection.compute_row(i))
                .collect();
            collection.pairwise = Some(rows.concat());
        }
        collection.check_disjoint()?;
        Ok(collection)
    }

    /// `count` independent Haar draws from the Stiefel manifold `S(d, D)`.
    pub fn sample_haar<R: Rng + ?Sized>(
        count: usize,
        ambient_dim: usize,
        subspace_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bases = (0..count)
            .map(|_| haar_stiefel_sample(ambient_dim, subspace_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bases)
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn subspace_dim(&self) -> usize {
        self.subspace_dim
    }

    pub fn bases(&self) -> &[BasisMatrix] {
        &self.bases
    }

    pub fn basis(&self, i: usize) -> Result<&BasisMatrix> {
        self.bases
            .get(i)
            .ok_or_else(|| invalid(format!("subspace index {i} out of range 0..{}", self.len())))
    }

    /// `Σ_j Φ_j` over the whole collection.
    pub(crate) fn basis_sum(&self) -> &DMatrix<f64> {
        &self.basis_sum
    }

    /// `γ(Sᵢ, Sⱼ)`; the diagonal is 1.
    pub fn coherence(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.len();
        if i >= n || j >= n {
            return Err(invalid(format!("subspace index out of range 0..{n}")));
        }
        Ok(match &self.pairwise {
            Some(cache) => cache[i * n + j],
            None => self.pair(i, j),
        })
    }

    /// `γ(Sᵢ, Sⱼ)` for every `j`, with 1 at `j = i`.
    pub fn coherence_row(&self, i: usize) -> Result<Vec<f64>> {
        let n = self.len();
        if i >= n {
            return Err(invalid(format!("subspace index {i} out of range 0..{n}")));
        }
        Ok(match &self.pairwise {
            Some(cache) => cache[i * n..(i + 1) * n].to_vec(),
            None => self.compute_row(i),
        })
    }

    fn pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let cross = self.bases[i].matrix().tr_mul(self.bases[j].matrix());
        operator_norm_2(&cross).expect("bases hold finite entries")
    }

    fn compute_row(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.pair(i, j)).collect()
    }

    fn check_disjoint(&self) -> Result<()> {
        let limit = 1.0 - TOLERANCES.disjointness;
        let offender = (0..self.len()).into_par_iter().find_map_first(|i| {
            let row = match &self.pairwise {
                Some(cache) => cache[i * self.len()..(i + 1) * self.len()].to_vec(),
                None => self.compute_row(i),
            };
            row.iter()
                .enumerate()
                .find(|&(j, &g)| j != i && g >= limit)
                .map(|(j, &g)| (i, j, g))
        });
        match offender {
            Some((i, j, g)) => Err(MsdError::DegenerateInput(format!(
                "subspaces {} and {} are not disjoint (coherence {g})",
                i + 1,
                j + 1
            ))),
            None => Ok(()),
        }
    }
}
