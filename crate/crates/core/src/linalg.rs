//! Dense linear-algebra primitives: orthonormal bases, Haar sampling on the
//! Stiefel manifold, operator 2-norms and projection energies.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, MsdError, Result};
use crate::tolerances::TOLERANCES;

/// A `D × d` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    entries: DMatrix<f64>,
}

impl BasisMatrix {
    /// Wraps `entries` after checking finiteness and orthonormality.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if cols == 0 || rows == 0 {
            return Err(invalid("basis must have at least one row and one column"));
        }
        if cols > rows {
            return Err(invalid(format!(
                "basis has more columns ({cols}) than rows ({rows})"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid("basis contains non-finite entries"));
        }
        let deviation = orthonormality_defect(&entries);
        if deviation > TOLERANCES.orthonormality {
            return Err(invalid(format!(
                "columns are not orthonormal (max |UᵀU − I| = {deviation:e})"
            )));
        }
        Ok(Self { entries })
    }

    /// Ambient dimension `D`.
    pub fn ambient_dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Subspace dimension `d`.
    pub fn subspace_dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// `Uᵀ y`, the coordinates of the projection of `y`.
    pub fn coordinates(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.ambient_dim() {
            return Err(invalid(format!(
                "vector length {} does not match ambient dimension {}",
                y.len(),
                self.ambient_dim()
            )));
        }
        Ok(self.entries.tr_mul(y))
    }

    /// `U θ`, the embedding of subspace coordinates into the ambient space.
    pub fn embed(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.subspace_dim() {
            return Err(invalid(format!(
                "coefficient length {} does not match subspace dimension {}",
                theta.len(),
                self.subspace_dim()
            )));
        }
        Ok(&self.entries * theta)
    }

    /// `Uᵢᵀ Uⱼ`.
    pub fn cross_gram(&self, other: &BasisMatrix) -> Result<DMatrix<f64>> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(invalid(format!(
                "ambient dimensions differ ({} vs {})",
                self.ambient_dim(),
                other.ambient_dim()
            )));
        }
        Ok(self.entries.tr_mul(&other.entries))
    }
}

fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let gram = m.tr_mul(m);
    let identity = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
    (gram - identity).amax()
}

/// Draws a Haar-distributed element of the Stiefel manifold `S(d, D)`.
///
/// Gaussian fill, thin QR, then column `j` of `Q` is multiplied by
/// `sign(R_jj)` so the law is exactly Haar.
pub fn haar_stiefel_sample<R: Rng + ?Sized>(
    ambient_dim: usize,
    subspace_dim: usize,
    rng: &mut R,
) -> Result<BasisMatrix> {
    if subspace_dim == 0 || subspace_dim > ambient_dim {
        return Err(invalid(format!(
            "need 1 <= d <= D, got d = {subspace_dim}, D = {ambient_dim}"
        )));
    }
    let gaussian = DMatrix::<f64>::from_fn(ambient_dim, subspace_dim, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..subspace_dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    BasisMatrix::new(q)
}

/// Orthonormal basis for the column span of `raw`.
///
/// Each output column has its largest-magnitude entry positive (ties go to the
/// lowest row index), so the result is a deterministic function of `raw`.
pub fn orthonormalize(raw: &DMatrix<f64>) -> Result<BasisMatrix> {
    let (rows, cols) = raw.shape();
    if rows == 0 || cols == 0 || cols > rows {
        return Err(invalid(format!("cannot orthonormalize a {rows}×{cols} matrix")));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix contains non-finite entries"));
    }
    let sv = raw.clone().singular_values();
    let largest = sv.max();
    let smallest = sv.min();
    if largest == 0.0 || smallest <= TOLERANCES.rank * largest {
        return Err(MsdError::DegenerateInput(format!(
            "matrix is rank deficient (singular values {smallest:e} .. {largest:e})"
        )));
    }
    let mut q = raw.clone().qr().q();
    for mut column in q.column_iter_mut() {
        let mut pivot = 0;
        for (row, value) in column.iter().enumerate() {
            if value.abs() > column[pivot].abs() {
                pivot = row;
            }
        }
        if column[pivot] < 0.0 {
            column.neg_mut();
        }
    }
    BasisMatrix::new(q)
}

/// Largest singular value of `m`.
pub fn operator_norm_2(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix contains non-finite entries"));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let (rows, cols) = m.shape();
    if rows <= TOLERANCES.svd_max_dim && cols <= TOLERANCES.svd_max_dim {
        Ok(m.clone().singular_values().max())
    } else {
        Ok(power_iteration_norm(m))
    }
}

/// Power iteration on the smaller Gram matrix.
fn power_iteration_norm(m: &DMatrix<f64>) -> f64 {
    let gram = if m.nrows() < m.ncols() {
        m * m.transpose()
    } else {
        m.tr_mul(m)
    };
    let start = gram
        .column_iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .map(|c| c.into_owned());
    let Some(mut v) = start else { return 0.0 };
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut eigenvalue = 0.0;
    for _ in 0..TOLERANCES.power_iteration_max_iters {
        let w = &gram * &v;
        let next = v.dot(&w);
        let w_norm = w.norm();
        if w_norm == 0.0 {
            return 0.0;
        }
        v = w / w_norm;
        let converged = (next - eigenvalue).abs() <= TOLERANCES.power_iteration * next.abs();
        eigenvalue = next;
        if converged {
            break;
        }
    }
    eigenvalue.max(0.0).sqrt()
}

/// `‖Uᵀy‖²`, the energy of `y` projected onto `span(U)`.
pub fn projection_energy(basis: &BasisMatrix, y: &DVector<f64>) -> Result<f64> {
    Ok(basis.coordinates(y)?.norm_squared())
}
