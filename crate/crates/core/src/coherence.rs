//! Subspace geometry: pairwise, local 2-subspace, average mixing, average
//! subspace and worst-case coherences, plus the coherence-condition checks.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::collection::SubspaceCollection;
use crate::error::{invalid, Result};
use crate::linalg::{operator_norm_2, BasisMatrix};

/// `γ(Sᵢ, Sⱼ) = ‖UᵢᵀUⱼ‖₂`, the cosine of the smallest principal angle.
pub fn subspace_coherence(u_i: &BasisMatrix, u_j: &BasisMatrix) -> Result<f64> {
    operator_norm_2(&u_i.cross_gram(u_j)?)
}

fn top_two(row: &[f64], skip: usize) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for (j, &g) in row.iter().enumerate() {
        if j == skip {
            continue;
        }
        if g > first {
            second = first;
            first = g;
        } else if g > second {
            second = g;
        }
    }
    (first, second)
}

fn check_index(collection: &SubspaceCollection, i: usize) -> Result<()> {
    if i >= collection.len() {
        return Err(invalid(format!(
            "subspace index {i} out of range 0..{}",
            collection.len()
        )));
    }
    Ok(())
}

/// `γ_{2,i}`: the sum of the two largest coherences between `Sᵢ` and the rest.
pub fn local_two_subspace_coherence(collection: &SubspaceCollection, i: usize) -> Result<f64> {
    if collection.len() < 3 {
        return Err(invalid("local 2-subspace coherence needs at least 3 subspaces"));
    }
    check_index(collection, i)?;
    let (a, b) = top_two(&collection.coherence_row(i)?, i);
    Ok(a + b)
}

/// `ρᵢ = ‖Σ_{j≠i} ΦᵢᵀΦⱼ‖₂ / (N − 1)`. Depends on the stored mixing bases.
pub fn average_mixing_coherence(collection: &SubspaceCollection, i: usize) -> Result<f64> {
    check_index(collection, i)?;
    let phi = collection.bases()[i].matrix();
    let mut sum = phi.tr_mul(collection.basis_sum());
    for k in 0..sum.nrows() {
        sum[(k, k)] -= 1.0;
    }
    Ok(operator_norm_2(&sum)? / (collection.len() - 1) as f64)
}

/// `ḡᵢ`, the mean coherence between `Sᵢ` and the other subspaces.
pub fn average_subspace_coherence(collection: &SubspaceCollection, i: usize) -> Result<f64> {
    check_index(collection, i)?;
    let row = collection.coherence_row(i)?;
    let total: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, g)| g).sum();
    Ok(total / (collection.len() - 1) as f64)
}

/// `μ(X_N)`, the largest pairwise coherence.
pub fn worst_case_coherence(collection: &SubspaceCollection) -> f64 {
    (0..collection.len())
        .into_par_iter()
        .map(|i| {
            let row = collection.coherence_row(i).expect("index in range");
            row.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &g)| g)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `√(max(Nd − D, 0) / (D(N − 1)))`, a lower bound on `μ(X_N)`.
pub fn coherence_lower_bound(count: usize, ambient_dim: usize, subspace_dim: usize) -> Result<f64> {
    if count < 2 || ambient_dim == 0 || subspace_dim == 0 {
        return Err(invalid("need N >= 2 and positive D, d"));
    }
    let excess = (count * subspace_dim) as f64 - ambient_dim as f64;
    Ok((excess.max(0.0) / (ambient_dim as f64 * (count - 1) as f64)).sqrt())
}

/// Per-subspace coherences of a collection together with `μ(X_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceProfile {
    pub local_two: Vec<f64>,
    pub avg_mixing: Vec<f64>,
    pub avg_subspace: Vec<f64>,
    pub worst_case: f64,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
}

impl CoherenceProfile {
    /// Computes every measure for every subspace; needs `N ≥ 3`.
    pub fn compute(collection: &SubspaceCollection) -> Result<Self> {
        let n = collection.len();
        if n < 3 {
            return Err(invalid("a coherence profile needs at least 3 subspaces"));
        }
        let rows: Vec<(f64, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = collection.coherence_row(i)?;
                let (a, b) = top_two(&row, i);
                let total: f64 =
                    row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, g)| g).sum();
                let rho = average_mixing_coherence(collection, i)?;
                Ok((a + b, rho, total / (n - 1) as f64))
            })
            .collect::<Result<_>>()?;
        let worst_case = worst_case_coherence(collection);
        Ok(Self {
            local_two: rows.iter().map(|r| r.0).collect(),
            avg_mixing: rows.iter().map(|r| r.1).collect(),
            avg_subspace: rows.iter().map(|r| r.2).collect(),
            worst_case,
            ambient_dim: collection.ambient_dim(),
            subspace_dim: collection.subspace_dim(),
        })
    }

    pub fn len(&self) -> usize {
        self.local_two.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_two.is_empty()
    }

    pub fn lower_bound(&self) -> f64 {
        coherence_lower_bound(self.len(), self.ambient_dim, self.subspace_dim).unwrap_or(0.0)
    }

    pub fn mean_local_two(&self) -> f64 {
        mean(&self.local_two)
    }

    pub fn mean_avg_mixing(&self) -> f64 {
        mean(&self.avg_mixing)
    }

    /// CSV with `#` metadata lines for `μ(X_N)` and its lower bound.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# N = {}, D = {}, d = {}", self.len(), self.ambient_dim, self.subspace_dim);
        let _ = writeln!(out, "# worst_case = {}", self.worst_case);
        let _ = writeln!(out, "# lower_bound = {}", self.lower_bound());
        out.push_str("subspace_index,local_two,avg_mixing,avg_subspace\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                self.local_two[i],
                self.avg_mixing[i],
                self.avg_subspace[i]
            );
        }
        out
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Inputs to [`check_coherence_conditions`]; the implied constants default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionParams {
    pub active_count: usize,
    pub energy_total: f64,
    pub alpha: f64,
    pub c_rho: f64,
    pub c_gamma: f64,
}

impl ConditionParams {
    pub fn new(active_count: usize, energy_total: f64, alpha: f64) -> Self {
        Self { active_count, energy_total, alpha, c_rho: 1.0, c_gamma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub rho_ok: bool,
    pub gamma_ok: bool,
    /// Right-hand side minus `ρᵢ`.
    pub rho_margin: f64,
    /// Right-hand side minus `γ_{2,i}`.
    pub gamma_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub rho_bound: f64,
    pub gamma_bound: f64,
    pub per_subspace: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.per_subspace.iter().all(|c| c.rho_ok && c.gamma_ok)
    }
}

/// Checks `ρᵢ ≤ c_ρ/√(n E_A)` and `γ_{2,i} ≤ c_γ/√(E_A log(N/α))` per subspace.
/// Equality counts as a pass.
pub fn check_coherence_conditions(
    profile: &CoherenceProfile,
    params: &ConditionParams,
) -> Result<ConditionReport> {
    if !(params.alpha > 0.0 && params.alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {}", params.alpha)));
    }
    if params.active_count == 0 {
        return Err(invalid("number of active subspaces must be at least 1"));
    }
    if !(params.energy_total > 0.0) {
        return Err(invalid("cumulative active energy must be positive"));
    }
    if !(params.c_rho > 0.0 && params.c_gamma > 0.0) {
        return Err(invalid("condition constants must be positive"));
    }
    let count = profile.len() as f64;
    let rho_bound = params.c_rho / (params.active_count as f64 * params.energy_total).sqrt();
    let gamma_bound = params.c_gamma / (params.energy_total * (count / params.alpha).ln()).sqrt();
    let per_subspace = profile
        .avg_mixing
        .iter()
        .zip(&profile.local_two)
        .map(|(&rho, &gamma)| ConditionCheck {
            rho_ok: rho <= rho_bound,
            gamma_ok: gamma <= gamma_bound,
            rho_margin: rho_bound - rho,
            gamma_margin: gamma_bound - gamma,
        })
        .collect();
    Ok(ConditionReport { rho_bound, gamma_bound, per_subspace })
}

/// Equal-width histogram over `[0, max(values)]`; everything lands in bin 0
/// when all values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub upper: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let upper = values.iter().cloned().fold(0.0, f64::max);
        let mut counts = vec![0usize; bins.max(1)];
        let last = counts.len() - 1;
        for &v in values {
            let bin = if upper > 0.0 {
                ((v / upper * counts.len() as f64) as usize).min(last)
            } else {
                0
            };
            counts[bin] += 1;
        }
        Self { upper, counts }
    }

    pub fn bin_width(&self) -> f64 {
        self.upper / self.counts.len() as f64
    }
}

/// Right-multiplies every basis by the matching `d × d` orthogonal matrix.
pub fn rotate_bases(collection: &SubspaceCollection, rotations: &[DMatrix<f64>]) -> Result<SubspaceCollection> {
    if rotations.len() != collection.len() {
        return Err(invalid("need one rotation per subspace"));
    }
    let bases = collection
        .bases()
        .iter()
        .zip(rotations)
        .map(|(b, r)| BasisMatrix::new(b.matrix() * r))
        .collect::<Result<Vec<_>>>()?;
    SubspaceCollection::new(bases)
}
