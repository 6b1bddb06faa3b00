//! Weighted expansions, RKHS geometry, and finite-dimensional subspaces.
//!
//! Everything the release algorithms manipulate lives here: weighted kernel
//! expansions `sum_m w_m k(z_m, .)`, their inner products and distances, and
//! orthonormal bases of the span of a finite point set (built from the Gram
//! eigendecomposition with eigenvalue truncation).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::kernel::{gram, GramMatrix, KernelSpec};
use crate::{KmeError, Result};

/// Above this many kernel evaluations, [`inner`] fans rows out to the rayon
/// pool.  Both paths accumulate per-row subtotals in row order, so results
/// are bit-identical regardless of which path runs or how many workers the
/// pool has.
const PARALLEL_EVAL_THRESHOLD: usize = 1 << 22;

// ---------------------------------------------------------------------------
// WeightedExpansion
// ---------------------------------------------------------------------------

/// A finite expansion `sum_m w_m k(z_m, .)` in the kernel's RKHS.
///
/// `l1_bound = Some(c)` is a *certificate* that `sum |w_m| <= c` (up to a
/// 1e-9 slack), attached by the L1-constrained release paths; push-forward
/// consumes it.  Plain projections carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedExpansion {
    points: Dataset,
    weights: Vec<f64>,
    kernel: KernelSpec,
    l1_bound: Option<f64>,
}

impl WeightedExpansion {
    pub fn new(
        points: Dataset,
        weights: Vec<f64>,
        kernel: KernelSpec,
        l1_bound: Option<f64>,
    ) -> Result<Self> {
        if weights.len() != points.n_rows() {
            return Err(KmeError::DimMismatch { expected: points.n_rows(), got: weights.len() });
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(KmeError::NonFinite("expansion weights"));
        }
        if let Some(c) = l1_bound {
            if !c.is_finite() || c < 0.0 {
                return Err(KmeError::InvalidConfig(format!("invalid l1 bound {c}")));
            }
            let l1: f64 = weights.iter().map(|w| w.abs()).sum();
            if l1 > c + 1e-9 {
                return Err(KmeError::InvalidConfig(format!(
                    "weights violate the declared L1 bound: |w|_1 = {l1} > {c}"
                )));
            }
        }
        Ok(Self { points, weights, kernel, l1_bound })
    }

    pub fn points(&self) -> &Dataset {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn l1_bound(&self) -> Option<f64> {
        self.l1_bound
    }

    /// Number of expansion points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// The empirical kernel mean embedding of a dataset: uniform weights `1/N`.
pub fn empirical_kme(data: &Dataset, kernel: &KernelSpec) -> WeightedExpansion {
    let n = data.n_rows();
    WeightedExpansion {
        points: data.clone(),
        weights: vec![1.0 / n as f64; n],
        kernel: *kernel,
        l1_bound: None,
    }
}

// ---------------------------------------------------------------------------
// Inner products and distances
// ---------------------------------------------------------------------------

fn check_compatible(a: &WeightedExpansion, b: &WeightedExpansion) -> Result<()> {
    if a.kernel != b.kernel {
        return Err(KmeError::KernelMismatch);
    }
    if a.dim() != b.dim() {
        return Err(KmeError::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(())
}

/// RKHS inner product `<a, b> = sum_i sum_j a_i b_j k(x_i, y_j)`.
///
/// Requires both expansions to be over the *same* kernel spec (exact
/// equality; a kernel is part of an expansion's identity, not a tolerance).
pub fn inner(a: &WeightedExpansion, b: &WeightedExpansion) -> Result<f64> {
    check_compatible(a, b)?;
    let kernel = a.kernel;
    let row_sum = |i: usize| -> f64 {
        let x = a.points.row(i);
        let mut s = 0.0;
        for j in 0..b.len() {
            s += b.weights[j] * kernel.eval_unchecked(x, b.points.row(j));
        }
        a.weights[i] * s
    };
    let total = if a.len().saturating_mul(b.len()) >= PARALLEL_EVAL_THRESHOLD {
        let parts: Vec<f64> = (0..a.len()).into_par_iter().map(row_sum).collect();
        parts.iter().sum()
    } else {
        (0..a.len()).map(row_sum).sum()
    };
    Ok(total)
}

/// Combines the three inner products into a distance, clamping small
/// negative squared distances (floating-point cancellation) to zero and
/// flagging large ones as an internal inconsistency.
pub(crate) fn distance_from_inners(aa: f64, ab: f64, bb: f64) -> Result<f64> {
    let sq = aa - 2.0 * ab + bb;
    if sq < -1e-6 {
        return Err(KmeError::InternalConsistency(format!(
            "squared RKHS distance is {sq}, far below zero"
        )));
    }
    Ok(sq.max(0.0).sqrt())
}

/// RKHS distance `|a - b|_H`.
pub fn rkhs_distance(a: &WeightedExpansion, b: &WeightedExpansion) -> Result<f64> {
    distance_from_inners(inner(a, a)?, inner(a, b)?, inner(b, b)?)
}

/// Maximum mean discrepancy between two expansions; identical to
/// [`rkhs_distance`], provided under the name the testing literature uses.
pub fn mmd(a: &WeightedExpansion, b: &WeightedExpansion) -> Result<f64> {
    rkhs_distance(a, b)
}

/// RKHS norm `|a|_H`.
pub fn norm(a: &WeightedExpansion) -> Result<f64> {
    let aa = inner(a, a)?;
    if aa < -1e-6 {
        return Err(KmeError::InternalConsistency(format!("negative squared norm {aa}")));
    }
    Ok(aa.max(0.0).sqrt())
}

// ---------------------------------------------------------------------------
// Subspace basis
// ---------------------------------------------------------------------------

/// An orthonormal basis of `span{k(z_1, .), ..., k(z_M, .)}`.
///
/// Basis function `f` is `sum_m coeff[(f, m)] k(z_m, .)`; the coefficient
/// matrix satisfies `coeff * G * coeff^T = I_F` where `G` is the Gram matrix
/// of the span points.  `F <= M` is the numerical rank of `G` at the
/// configured truncation threshold.
///
/// The eigendecomposition is canonicalized (eigenvalues descending, each
/// eigenvector's largest-magnitude entry made positive) so that bases — and
/// therefore noised releases — are reproducible across runs.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    span_points: Dataset,
    kernel: KernelSpec,
    /// `F x M` coefficients of the orthonormal functions over the span.
    coeff: DMatrix<f64>,
    /// Kept Gram eigenvalues, descending, length `F`.
    eigenvalues: DVector<f64>,
    gram: GramMatrix,
}

impl SubspaceBasis {
    pub fn span_points(&self) -> &Dataset {
        &self.span_points
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn coeff_matrix(&self) -> &DMatrix<f64> {
        &self.coeff
    }

    /// Numerical rank `F` of the span.
    pub fn rank(&self) -> usize {
        self.coeff.nrows()
    }

    /// Kept Gram eigenvalues (descending).
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }
}

/// Builds an orthonormal basis for the span of `span_points`.
///
/// Eigenvalues at or below `trunc_tol * lambda_max` are truncated, which is
/// what makes duplicated or nearly-duplicated span points well-defined
/// (they lower the rank instead of exploding the coefficients).
pub fn build_subspace_basis(
    span_points: &Dataset,
    kernel: &KernelSpec,
    trunc_tol: f64,
) -> Result<SubspaceBasis> {
    if !trunc_tol.is_finite() || trunc_tol <= 0.0 {
        return Err(KmeError::InvalidConfig(format!(
            "trunc_tol must be a positive real, got {trunc_tol}"
        )));
    }
    let g = gram(span_points, kernel);
    let m = g.size();
    let eig = nalgebra::SymmetricEigen::new(g.entries().clone());

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let lambda_max = eig.eigenvalues[order[0]];
    if !(lambda_max > 0.0) {
        return Err(KmeError::InternalConsistency(
            "gram matrix has no positive eigenvalue".into(),
        ));
    }
    let cutoff = trunc_tol * lambda_max;
    let kept: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] > cutoff).collect();

    let f = kept.len();
    let mut coeff = DMatrix::zeros(f, m);
    let mut eigenvalues = DVector::zeros(f);
    for (fi, &i) in kept.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        eigenvalues[fi] = lambda;
        let col = eig.eigenvectors.column(i);
        let mut arg = 0;
        let mut best = col[0].abs();
        for r in 1..m {
            if col[r].abs() > best {
                best = col[r].abs();
                arg = r;
            }
        }
        let sign = if col[arg] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / lambda.sqrt();
        for r in 0..m {
            coeff[(fi, r)] = col[r] * scale;
        }
    }

    Ok(SubspaceBasis {
        span_points: span_points.clone(),
        kernel: *kernel,
        coeff,
        eigenvalues,
        gram: g,
    })
}

/// Coordinates of the orthogonal projection of `target` onto the basis's
/// span: `alpha_f = <b_f, target>`.
pub fn project_coeffs(target: &WeightedExpansion, basis: &SubspaceBasis) -> Result<DVector<f64>> {
    if target.kernel != basis.kernel {
        return Err(KmeError::KernelMismatch);
    }
    if target.dim() != basis.span_points.dim() {
        return Err(KmeError::DimMismatch {
            expected: basis.span_points.dim(),
            got: target.dim(),
        });
    }
    // r_m = <k(z_m, .), target> = sum_n w_n k(z_m, x_n), streamed so the
    // M x N kernel block is never materialized.
    let m = basis.span_points.n_rows();
    let kernel = basis.kernel;
    let row_value = |mi: usize| -> f64 {
        let z = basis.span_points.row(mi);
        let mut s = 0.0;
        for j in 0..target.len() {
            s += target.weights[j] * kernel.eval_unchecked(z, target.points.row(j));
        }
        s
    };
    let r_vals: Vec<f64> = if m.saturating_mul(target.len()) >= PARALLEL_EVAL_THRESHOLD {
        (0..m).into_par_iter().map(row_value).collect()
    } else {
        (0..m).map(row_value).collect()
    };
    let r = DVector::from_vec(r_vals);
    Ok(&basis.coeff * r)
}

/// Rebuilds a weighted expansion over the span points from basis
/// coordinates: weights `w = coeff^T * coeffs` (the minimum-norm
/// representative).
pub fn coeffs_to_expansion(coeffs: &DVector<f64>, basis: &SubspaceBasis) -> Result<WeightedExpansion> {
    if coeffs.len() != basis.rank() {
        return Err(KmeError::DimMismatch { expected: basis.rank(), got: coeffs.len() });
    }
    if !coeffs.iter().all(|c| c.is_finite()) {
        return Err(KmeError::NonFinite("basis coordinates"));
    }
    let w = basis.coeff.tr_mul(coeffs);
    WeightedExpansion::new(
        basis.span_points.clone(),
        w.iter().copied().collect(),
        basis.kernel,
        None,
    )
}

/// Orthogonal projection of `target` onto the basis's span, as an expansion
/// over the span points.
pub fn project(target: &WeightedExpansion, basis: &SubspaceBasis) -> Result<WeightedExpansion> {
    coeffs_to_expansion(&project_coeffs(target, basis)?, basis)
}
