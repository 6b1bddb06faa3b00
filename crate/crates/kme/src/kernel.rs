//! The exponentiated-quadratic kernel and Gram-matrix machinery.
//!
//! Exactly one kernel family is supported: `k(x, y) = exp(-gamma * |x-y|^2)`
//! with the squared Euclidean distance (no square root).  The family is a
//! closed enum on purpose — adding a kernel is a deliberate breaking change,
//! because the sensitivity analysis baked into the privacy layer relies on
//! `k(x, x) = 1`.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::{KmeError, Result};

/// Supported kernel families (closed set).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    ExpQuadratic,
}

/// A fully specified kernel: family plus bandwidth parameter `gamma > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    gamma: f64,
}

impl KernelSpec {
    /// The exponentiated-quadratic kernel `exp(-gamma * |x-y|^2)`.
    pub fn exp_quadratic(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(KmeError::NonFinite("kernel gamma"));
        }
        if gamma <= 0.0 {
            return Err(KmeError::InvalidConfig(format!(
                "kernel gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { family: KernelFamily::ExpQuadratic, gamma })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The bandwidth schedule used by the experiment harness: `1e-4 / D`.
    pub fn default_gamma(dim: usize) -> f64 {
        1e-4 / dim.max(1) as f64
    }

    /// Lipschitz constant of `y -> k(x, y)`: `sqrt(2 * gamma / e)`.
    pub fn lipschitz_constant(&self) -> f64 {
        (2.0 * self.gamma / std::f64::consts::E).sqrt()
    }

    /// Evaluates the kernel.  Errors on dimension mismatch or non-finite
    /// coordinates.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(KmeError::DimMismatch { expected: x.len(), got: y.len() });
        }
        if !x.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
            return Err(KmeError::NonFinite("kernel input point"));
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Hot-path evaluation over already-validated points.  The floating
    /// expression order is fixed so that `eval(x, y)` and `eval(y, x)` are
    /// bit-identical.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut sq = 0.0;
        for d in 0..x.len() {
            let t = x[d] - y[d];
            sq += t * t;
        }
        (-self.gamma * sq).exp()
    }
}

/// A symmetric kernel matrix over one point set, tagged with a digest of the
/// points it was built from so downstream plumbing can detect mix-ups.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    points_hash: u64,
}

impl GramMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn points_hash(&self) -> u64 {
        self.points_hash
    }
}

/// FNV-1a over the shape and raw bit patterns of the points.
pub(crate) fn points_digest(points: &Dataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut absorb = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    };
    absorb(&(points.n_rows() as u64).to_le_bytes());
    absorb(&(points.dim() as u64).to_le_bytes());
    for v in points.values() {
        absorb(&v.to_bits().to_le_bytes());
    }
    h
}

/// Builds the Gram matrix of a point set.  Symmetry is exact by
/// construction (the upper triangle is mirrored); positive semi-definiteness
/// is asserted in debug builds only, so it costs nothing in release binaries.
pub fn gram(points: &Dataset, kernel: &KernelSpec) -> GramMatrix {
    let m = points.n_rows();
    let mut entries = DMatrix::zeros(m, m);
    for i in 0..m {
        entries[(i, i)] = 1.0;
        for j in (i + 1)..m {
            let v = kernel.eval_unchecked(points.row(i), points.row(j));
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    #[cfg(debug_assertions)]
    {
        // PSD within a numerical slack: Cholesky of G + tol*I must succeed.
        let tol = 1e-8 * m.max(1) as f64;
        let shifted = entries.clone() + DMatrix::identity(m, m) * tol;
        debug_assert!(
            shifted.cholesky().is_some(),
            "gram matrix failed the PSD check (size {m})"
        );
    }
    GramMatrix { entries, points_hash: points_digest(points) }
}

/// The rectangular kernel matrix `K[i, j] = k(a_i, b_j)`.
pub fn cross_gram(a: &Dataset, b: &Dataset, kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() {
        return Err(KmeError::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    let mut out = DMatrix::zeros(a.n_rows(), b.n_rows());
    for i in 0..a.n_rows() {
        let x = a.row(i);
        for j in 0..b.n_rows() {
            out[(i, j)] = kernel.eval_unchecked(x, b.row(j));
        }
    }
    Ok(out)
}
