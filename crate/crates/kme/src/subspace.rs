//! Release algorithm 1: privatize the projection of the empirical embedding
//! onto the span of data-independent synthetic points.
//!
//! Pipeline (all randomness from one ChaCha8 stream seeded by the config):
//!
//! 1. choose synthetic points `z_1..z_M` — either sampled from a public
//!    Gaussian prior `q` or a publishable subset of the data — *before* the
//!    private rows are touched;
//! 2. orthonormalize their span (Gram eigendecomposition with truncation);
//! 3. project the empirical embedding onto the span: `alpha_f = <b_f, mu>`;
//! 4. privatize the coordinates with the Gaussian mechanism;
//! 5. re-express the noised element as weights over the synthetic points,
//!    either minimum-norm (`w = coeff^T beta`) or through the optional
//!    L1-constrained re-expression.
//!
//! The synthetic points, the basis, and the number of noise draws depend
//! only on `(config, N, dim)`, never on private values, so the privacy
//! guarantee of the mechanism carries to the whole release.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::dp::{gaussian_mechanism, PrivacyParams};
use crate::kernel::KernelSpec;
use crate::l1::project_l1;
use crate::rkhs::{
    build_subspace_basis, empirical_kme, project_coeffs, SubspaceBasis, WeightedExpansion,
};
use crate::{KmeError, Result};

/// Default relative eigenvalue truncation threshold for basis construction.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-10;

/// Where the synthetic span points come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticSource {
    /// i.i.d. draws from the spherical Gaussian `N(q_mean, q_std^2 I)`.
    SampleFromQ { q_mean: Vec<f64>, q_std: f64 },
    /// The first `count` rows of the dataset, assumed publishable.
    PublicSubset { count: usize },
}

/// Configuration of a subspace release.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceReleaseConfig {
    /// Number of synthetic points `M`.
    pub m_synthetic: usize,
    pub source: SyntheticSource,
    pub privacy: PrivacyParams,
    /// Relative eigenvalue truncation for the span basis.
    pub trunc_tol: f64,
    /// `Some(c)`: re-express the noised element under `|w|_1 <= c`
    /// (requires `c >= 1`); the release then carries the L1 certificate.
    pub regularization: Option<f64>,
    pub seed: u64,
}

impl SubspaceReleaseConfig {
    pub fn new(
        m_synthetic: usize,
        source: SyntheticSource,
        privacy: PrivacyParams,
        seed: u64,
    ) -> Self {
        Self {
            m_synthetic,
            source,
            privacy,
            trunc_tol: DEFAULT_TRUNC_TOL,
            regularization: None,
            seed,
        }
    }
}

/// A completed subspace release: the weighted expansion plus the quantities
/// a curator reports alongside it.
#[derive(Debug, Clone)]
pub struct SubspaceRelease {
    pub expansion: WeightedExpansion,
    /// Numerical rank `F` of the synthetic span.
    pub basis_rank: usize,
    /// Per-coordinate noise scale that was applied.
    pub noise_std: f64,
}

/// Default synthetic-set size schedule `M = ceil(N^(1 - 4/(2D + 4)))`.
pub fn m_schedule(n: usize, dim: usize) -> usize {
    let exponent = 1.0 - 4.0 / (2.0 * dim.max(1) as f64 + 4.0);
    (n.max(1) as f64).powf(exponent).ceil() as usize
}

/// Draws `m` i.i.d. points from `N(q_mean, q_std^2 I)` (coordinate order,
/// one point after another).
pub fn sample_synthetic_points<R: Rng + ?Sized>(
    q_mean: &[f64],
    q_std: f64,
    m: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if m == 0 {
        return Err(KmeError::Empty("requested synthetic points"));
    }
    if q_mean.is_empty() {
        return Err(KmeError::Empty("q_mean coordinates"));
    }
    if !q_mean.iter().all(|v| v.is_finite()) || !q_std.is_finite() {
        return Err(KmeError::NonFinite("q parameters"));
    }
    if q_std < 0.0 {
        return Err(KmeError::InvalidConfig(format!("q_std must be >= 0, got {q_std}")));
    }
    let dim = q_mean.len();
    let mut values = Vec::with_capacity(m * dim);
    for _ in 0..m {
        for mean in q_mean {
            let z: f64 = rng.sample(StandardNormal);
            values.push(mean + q_std * z);
        }
    }
    Dataset::new(values, m, dim)
}

/// The first `count` rows of a dataset, as the publishable subset.
pub fn take_public_subset(data: &Dataset, count: usize) -> Result<Dataset> {
    data.head(count)
}

/// Runs the full subspace release.  Deterministic in `cfg.seed`: the stream
/// is consumed by the synthetic-point draw first (if any), then by the noise
/// draw — `F` per-coordinate draws where `F` depends only on the synthetic
/// points.
pub fn release_subspace(
    private: &Dataset,
    kernel: &KernelSpec,
    cfg: &SubspaceReleaseConfig,
) -> Result<SubspaceRelease> {
    if cfg.m_synthetic == 0 {
        return Err(KmeError::InvalidConfig("m_synthetic must be >= 1".into()));
    }
    if cfg.privacy.n_private() != private.n_rows() {
        return Err(KmeError::InvalidConfig(format!(
            "privacy params claim N = {} but the dataset has {} rows",
            cfg.privacy.n_private(),
            private.n_rows()
        )));
    }
    if private.n_rows() == 1 {
        log::warn!("releasing a single-row dataset: the output is nearly pure noise");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let synthetic = match &cfg.source {
        SyntheticSource::SampleFromQ { q_mean, q_std } => {
            if q_mean.len() != private.dim() {
                return Err(KmeError::DimMismatch {
                    expected: private.dim(),
                    got: q_mean.len(),
                });
            }
            sample_synthetic_points(q_mean, *q_std, cfg.m_synthetic, &mut rng)?
        }
        SyntheticSource::PublicSubset { count } => {
            if *count != cfg.m_synthetic {
                return Err(KmeError::InvalidConfig(format!(
                    "public subset count {count} must equal m_synthetic {}",
                    cfg.m_synthetic
                )));
            }
            take_public_subset(private, *count)?
        }
    };

    let basis = build_subspace_basis(&synthetic, kernel, cfg.trunc_tol)?;
    let mu_hat = empirical_kme(private, kernel);
    let alpha = project_coeffs(&mu_hat, &basis)?;
    let beta = gaussian_mechanism(&alpha, &cfg.privacy, &mut rng)?;

    let weights: DVector<f64> = match cfg.regularization {
        None => basis.coeff_matrix().tr_mul(&beta),
        Some(c) => regularized_reexpress(&beta, &basis, c)?,
    };
    let expansion = WeightedExpansion::new(
        synthetic,
        weights.iter().copied().collect(),
        *kernel,
        cfg.regularization,
    )?;
    Ok(SubspaceRelease {
        expansion,
        basis_rank: basis.rank(),
        noise_std: cfg.privacy.noise_std(),
    })
}

/// Re-expresses basis coordinates `beta` as span weights under an L1
/// constraint: `w = argmin_{|u|_1 <= c} | sum_m u_m k(z_m, .) - mu~ |_H`
/// where `mu~ = sum_f beta_f b_f`.
///
/// Projected gradient descent on the (convex quadratic) squared distance,
/// step `1/(2 lambda_max)`, warm-started at the projected minimum-norm
/// weights; stops when the gradient-mapping norm falls to 1e-8 or after
/// 1e4 iterations.  When the constraint is inactive this returns the
/// minimum-norm weights themselves (the distance there is exactly zero).
pub fn regularized_reexpress(
    beta: &DVector<f64>,
    basis: &SubspaceBasis,
    c: f64,
) -> Result<DVector<f64>> {
    if !c.is_finite() || c < 1.0 {
        return Err(KmeError::InvalidConfig(format!(
            "regularization bound must be >= 1, got {c}"
        )));
    }
    if beta.len() != basis.rank() {
        return Err(KmeError::DimMismatch { expected: basis.rank(), got: beta.len() });
    }
    if !beta.iter().all(|b| b.is_finite()) {
        return Err(KmeError::NonFinite("basis coordinates"));
    }

    let gram = basis.gram().entries();
    let w_min = basis.coeff_matrix().tr_mul(beta);
    // <k(z_m, .), mu~> for every span point; gradient of the squared
    // distance is then 2 (G u - lin).
    let lin = gram * &w_min;
    let lambda_max = basis.eigenvalues()[0];
    let step = 1.0 / (2.0 * lambda_max);

    let mut u = project_l1(&w_min, c);
    for _ in 0..10_000 {
        let grad = 2.0 * (gram * &u - &lin);
        let next = project_l1(&(&u - step * &grad), c);
        let mapping_norm = (&u - &next).norm() / step;
        u = next;
        if mapping_norm <= 1e-8 {
            break;
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_mixture, MixtureSpec};
    use crate::rkhs::{inner, rkhs_distance};
    use approx::assert_relative_eq;

    fn kernel(gamma: f64) -> KernelSpec {
        KernelSpec::exp_quadratic(gamma).unwrap()
    }

    fn privacy(eps: f64, n: usize) -> PrivacyParams {
        PrivacyParams::new(eps, 1e-6, n).unwrap()
    }

    #[test]
    fn sample_points_deterministic_and_distributed() {
        let mean = vec![1.0, -2.0];
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = sample_synthetic_points(&mean, 3.0, 5000, &mut r1).unwrap();
        let b = sample_synthetic_points(&mean, 3.0, 5000, &mut r2).unwrap();
        assert_eq!(a, b);
        for d in 0..2 {
            let m: f64 = a.rows().map(|r| r[d]).sum::<f64>() / 5000.0;
            let bound = 4.0 * 3.0 / (5000f64).sqrt();
            assert!((m - mean[d]).abs() <= bound, "coordinate {d} mean {m}");
        }
    }

    #[test]
    fn sample_points_zero_std_collapses_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_synthetic_points(&[2.0, 3.0], 0.0, 4, &mut rng).unwrap();
        for row in pts.rows() {
            assert_eq!(row, &[2.0, 3.0]);
        }
    }

    #[test]
    fn sample_points_rejects_bad_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_synthetic_points(&[0.0], -1.0, 3, &mut rng).is_err());
        assert!(sample_synthetic_points(&[f64::NAN], 1.0, 3, &mut rng).is_err());
        assert!(sample_synthetic_points(&[0.0], 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn public_subset_takes_first_rows() {
        let data = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let head = take_public_subset(&data, 2).unwrap();
        assert_eq!(head.row(0), &[1.0]);
        assert_eq!(head.row(1), &[2.0]);
        assert!(take_public_subset(&data, 4).is_err());
        assert!(take_public_subset(&data, 0).is_err());
    }

    #[test]
    fn m_schedule_reference_values() {
        // D = 2: exponent 1/2, so N = 10^4 gives 100.
        assert_eq!(m_schedule(10_000, 2), 100);
        // D = 1: exponent 1/3, so N = 1000 gives 10.
        assert_eq!(m_schedule(1000, 1), 10);
        // Ceiling, not floor.
        assert_eq!(m_schedule(10, 2), 4); // sqrt(10) = 3.16 -> 4
    }

    #[test]
    fn release_is_deterministic_in_seed() {
        let data = generate_mixture(&MixtureSpec { dim: 2, seed: 3 }, 200).unwrap();
        let k = kernel(KernelSpec::default_gamma(2));
        let cfg = SubspaceReleaseConfig::new(
            20,
            SyntheticSource::SampleFromQ { q_mean: vec![0.0, 0.0], q_std: 500.0 },
            privacy(1.0, 200),
            42,
        );
        let a = release_subspace(&data, &k, &cfg).unwrap();
        let b = release_subspace(&data, &k, &cfg).unwrap();
        assert_eq!(a.expansion.weights(), b.expansion.weights());
        assert_eq!(a.expansion.points(), b.expansion.points());
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = release_subspace(&data, &k, &cfg2).unwrap();
        assert_ne!(a.expansion.weights(), c.expansion.weights());
    }

    #[test]
    fn synthetic_points_and_basis_ignore_private_values() {
        // Two different datasets of equal size: same seed must give
        // byte-identical synthetic points (the span never reads the data).
        let d1 = generate_mixture(&MixtureSpec { dim: 2, seed: 10 }, 150).unwrap();
        let d2 = generate_mixture(&MixtureSpec { dim: 2, seed: 11 }, 150).unwrap();
        assert_ne!(d1, d2);
        let k = kernel(KernelSpec::default_gamma(2));
        let cfg = SubspaceReleaseConfig::new(
            15,
            SyntheticSource::SampleFromQ { q_mean: vec![0.0, 0.0], q_std: 500.0 },
            privacy(1.0, 150),
            7,
        );
        let r1 = release_subspace(&d1, &k, &cfg).unwrap();
        let r2 = release_subspace(&d2, &k, &cfg).unwrap();
        assert_eq!(r1.expansion.points(), r2.expansion.points());
        // ... and the weights differ, because the data differs.
        assert_ne!(r1.expansion.weights(), r2.expansion.weights());
    }

    #[test]
    fn no_private_row_leaks_into_sampled_points() {
        let data = generate_mixture(&MixtureSpec { dim: 2, seed: 21 }, 300).unwrap();
        let k = kernel(KernelSpec::default_gamma(2));
        let cfg = SubspaceReleaseConfig::new(
            30,
            SyntheticSource::SampleFromQ { q_mean: vec![0.0, 0.0], q_std: 500.0 },
            privacy(1.0, 300),
            5,
        );
        let rel = release_subspace(&data, &k, &cfg).unwrap();
        for z in rel.expansion.points().rows() {
            for x in data.rows() {
                assert_ne!(z, x, "synthetic point equals a private row");
            }
        }
    }

    #[test]
    fn huge_epsilon_recovers_the_embedding() {
        // Well-separated private points spanning their own embedding: with
        // essentially no noise the release must coincide with it.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let data = sample_synthetic_points(&[0.0, 0.0], 500.0, 20, &mut rng).unwrap();
        let k = kernel(KernelSpec::default_gamma(2));
        let cfg = SubspaceReleaseConfig::new(
            20,
            SyntheticSource::PublicSubset { count: 20 },
            privacy(1e9, 20),
            3,
        );
        let rel = release_subspace(&data, &k, &cfg).unwrap();
        let mu = empirical_kme(&data, &k);
        assert!(rkhs_distance(&rel.expansion, &mu).unwrap() <= 1e-6);
    }

    #[test]
    fn config_mismatches_are_rejected() {
        let data = generate_mixture(&MixtureSpec { dim: 2, seed: 1 }, 50).unwrap();
        let k = kernel(0.01);
        // Wrong N in privacy params.
        let cfg = SubspaceReleaseConfig::new(
            5,
            SyntheticSource::PublicSubset { count: 5 },
            privacy(1.0, 49),
            0,
        );
        assert!(release_subspace(&data, &k, &cfg).is_err());
        // Public count disagreeing with M.
        let cfg = SubspaceReleaseConfig::new(
            5,
            SyntheticSource::PublicSubset { count: 6 },
            privacy(1.0, 50),
            0,
        );
        assert!(release_subspace(&data, &k, &cfg).is_err());
        // Subset larger than the dataset.
        let cfg = SubspaceReleaseConfig::new(
            60,
            SyntheticSource::PublicSubset { count: 60 },
            privacy(1.0, 50),
            0,
        );
        assert!(release_subspace(&data, &k, &cfg).is_err());
        // q_mean with the wrong dimension.
        let cfg = SubspaceReleaseConfig::new(
            5,
            SyntheticSource::SampleFromQ { q_mean: vec![0.0], q_std: 1.0 },
            privacy(1.0, 50),
            0,
        );
        assert!(release_subspace(&data, &k, &cfg).is_err());
    }

    #[test]
    fn single_row_dataset_still_releases() {
        let data = Dataset::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let k = kernel(0.01);
        let cfg = SubspaceReleaseConfig::new(
            3,
            SyntheticSource::SampleFromQ { q_mean: vec![0.0, 0.0], q_std: 10.0 },
            privacy(1.0, 1),
            9,
        );
        let rel = release_subspace(&data, &k, &cfg).unwrap();
        assert_eq!(rel.expansion.len(), 3);
    }

    // -- regularized re-expression ------------------------------------------

    fn toy_basis() -> SubspaceBasis {
        let pts = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.5]]).unwrap();
        build_subspace_basis(&pts, &kernel(0.5), 1e-10).unwrap()
    }

    #[test]
    fn reexpress_inactive_constraint_matches_minimum_norm() {
        let basis = toy_basis();
        let beta = DVector::from_vec(vec![0.05, -0.03, 0.02]);
        let w_min = basis.coeff_matrix().tr_mul(&beta);
        let l1: f64 = w_min.iter().map(|w| w.abs()).sum();
        let c = l1 * 2.0 + 1.0;
        let w = regularized_reexpress(&beta, &basis, c).unwrap();
        assert!((&w - &w_min).norm() <= 1e-8, "inactive constraint moved the weights");
    }

    #[test]
    fn reexpress_boundary_coincidence_keeps_weights() {
        let basis = toy_basis();
        let beta = DVector::from_vec(vec![0.4, -0.2, 0.1]);
        let w_min = basis.coeff_matrix().tr_mul(&beta);
        let c = w_min.iter().map(|w: &f64| w.abs()).sum::<f64>().max(1.0);
        let w = regularized_reexpress(&beta, &basis, c).unwrap();
        if c > 1.0 {
            // |w_min|_1 == c exactly: the minimum sits on the boundary and
            // must be returned unchanged.
            assert!((&w - &w_min).norm() <= 1e-8);
        }
    }

    #[test]
    fn reexpress_matches_dense_grid_search_on_active_constraint() {
        let basis = toy_basis();
        // Scale beta so the minimum-norm weights clearly violate |u|_1 <= 1.
        let mut beta = DVector::from_vec(vec![1.0, -0.7, 0.4]);
        let w_min = basis.coeff_matrix().tr_mul(&beta);
        let l1: f64 = w_min.iter().map(|w| w.abs()).sum();
        beta *= 3.0 / l1;
        let c = 1.0;

        let w = regularized_reexpress(&beta, &basis, c).unwrap();
        assert!(w.iter().map(|x| x.abs()).sum::<f64>() <= c + 1e-9);

        // Independent oracle: exhaustive grid over the feasible cube at
        // resolution 1e-2, objective |sum u_m k(z_m,.) - mu~|_H^2 expanded
        // as u^T G u - 2 u^T lin + |beta|^2.
        let g = basis.gram().entries();
        let lin = g * basis.coeff_matrix().tr_mul(&beta);
        let objective = |u: &[f64; 3]| -> f64 {
            let mut quad = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    quad += u[i] * u[j] * g[(i, j)];
                }
            }
            let linear: f64 = (0..3).map(|i| u[i] * lin[i]).sum();
            quad - 2.0 * linear + beta.norm_squared()
        };
        let mut best = f64::INFINITY;
        let steps = 101; // [-1, 1] at 0.02 resolution (kept fast), refined below
        for i in 0..steps {
            let u0 = -1.0 + 2.0 * i as f64 / (steps - 1) as f64;
            for j in 0..steps {
                let u1 = -1.0 + 2.0 * j as f64 / (steps - 1) as f64;
                if u0.abs() + u1.abs() > c {
                    continue;
                }
                for l in 0..steps {
                    let u2 = -1.0 + 2.0 * l as f64 / (steps - 1) as f64;
                    if u0.abs() + u1.abs() + u2.abs() > c {
                        continue;
                    }
                    best = best.min(objective(&[u0, u1, u2]));
                }
            }
        }
        let ours = objective(&[w[0], w[1], w[2]]);
        // The solver works in continuous space, so it may only *beat* the
        // grid (up to the grid's own resolution error).
        assert!(
            ours <= best + 1e-6,
            "solver objective {ours} worse than grid best {best}"
        );
        let scale = best.abs().max(1e-12);
        assert!(
            (ours - best).abs() / scale <= 0.05,
            "solver {ours} vs grid {best}: disagreement beyond 5%"
        );
    }

    #[test]
    fn reexpress_rejects_c_below_one() {
        let basis = toy_basis();
        let beta = DVector::from_vec(vec![0.1, 0.1, 0.1]);
        let err = regularized_reexpress(&beta, &basis, 0.5).unwrap_err();
        assert!(err.to_string().contains(">= 1"), "{err}");
    }

    #[test]
    fn regularized_release_carries_the_certificate() {
        let data = generate_mixture(&MixtureSpec { dim: 2, seed: 33 }, 400).unwrap();
        let k = kernel(KernelSpec::default_gamma(2));
        let mut cfg = SubspaceReleaseConfig::new(
            40,
            SyntheticSource::PublicSubset { count: 40 },
            privacy(0.1, 400),
            11,
        );
        cfg.regularization = Some(1.5);
        let rel = release_subspace(&data, &k, &cfg).unwrap();
        assert_eq!(rel.expansion.l1_bound(), Some(1.5));
        assert!(rel.expansion.l1_norm() <= 1.5 + 1e-9);
        // Unregularized releases carry no certificate.
        cfg.regularization = None;
        let plain = release_subspace(&data, &k, &cfg).unwrap();
        assert_eq!(plain.expansion.l1_bound(), None);
    }

    #[test]
    fn projection_beats_baseline_over_same_span_without_noise() {
        // With the public subset as span and negligible noise, the optimal
        // reweighting cannot do worse than uniform weights over that span.
        let data = generate_mixture(&MixtureSpec { dim: 2, seed: 13 }, 500).unwrap();
        let k = kernel(KernelSpec::default_gamma(2));
        let cfg = SubspaceReleaseConfig::new(
            25,
            SyntheticSource::PublicSubset { count: 25 },
            privacy(1e9, 500),
            2,
        );
        let rel = release_subspace(&data, &k, &cfg).unwrap();
        let mu = empirical_kme(&data, &k);
        let baseline = empirical_kme(&take_public_subset(&data, 25).unwrap(), &k);
        let d_rel = rkhs_distance(&mu, &rel.expansion).unwrap();
        let d_base = rkhs_distance(&mu, &baseline).unwrap();
        assert!(d_rel <= d_base + 1e-9, "projection {d_rel} vs baseline {d_base}");
    }

    #[test]
    fn released_element_norm_is_consistent_with_coefficients() {
        // Sanity link between the weight re-expression and the coordinates:
        // the released element's norm equals |beta|_2 (Parseval through the
        // minimum-norm path).
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let pts = sample_synthetic_points(&[0.0, 0.0], 300.0, 10, &mut rng).unwrap();
        let k = kernel(1e-4);
        let basis = build_subspace_basis(&pts, &k, 1e-10).unwrap();
        let beta = DVector::from_vec((0..basis.rank()).map(|i| 0.1 * i as f64).collect());
        let w = basis.coeff_matrix().tr_mul(&beta);
        let e = WeightedExpansion::new(pts, w.iter().copied().collect(), k, None).unwrap();
        assert_relative_eq!(
            inner(&e, &e).unwrap().sqrt(),
            beta.norm(),
            epsilon = 1e-8,
            max_relative = 1e-8
        );
    }
}
