//! Privacy accounting: the Gaussian mechanism over embedding coordinates.
//!
//! Swapping one row of an N-row dataset moves its empirical kernel mean
//! embedding by at most `2/N` in RKHS norm (each row contributes a unit-norm
//! function scaled by `1/N`, and the triangle inequality does the rest).
//! The same bound holds for the random-feature mean because the paired
//! feature vector has exact unit norm.  The mechanism therefore adds
//! `N(0, sigma^2)` per coordinate with
//!
//! `sigma = sqrt(8 * ln(1.25 / delta)) / (N * epsilon)`,
//!
//! the classical Gaussian-mechanism calibration at sensitivity `2/N`, taken
//! at equality (no slack factor).

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{KmeError, Result};

/// `(epsilon, delta)` privacy budget together with the dataset size the
/// sensitivity bound refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    n_private: usize,
}

impl PrivacyParams {
    /// Validates `epsilon > 0`, `0 < delta < 1`, `n_private >= 1`.
    ///
    /// `delta >= 1/N` is unusual for a meaningful guarantee; it is accepted
    /// but logged as a warning rather than rejected, since sweeps of loose
    /// budgets are legitimate experiment configurations.
    pub fn new(epsilon: f64, delta: f64, n_private: usize) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(KmeError::InvalidPrivacy(format!(
                "epsilon must be a positive real, got {epsilon}"
            )));
        }
        if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
            return Err(KmeError::InvalidPrivacy(format!(
                "delta must lie strictly between 0 and 1, got {delta}"
            )));
        }
        if n_private == 0 {
            return Err(KmeError::InvalidPrivacy("n_private must be >= 1".into()));
        }
        if delta >= 1.0 / n_private as f64 {
            log::warn!(
                "delta = {delta} is >= 1/N = {}; the guarantee is weak at this scale",
                1.0 / n_private as f64
            );
        }
        Ok(Self { epsilon, delta, n_private })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_private(&self) -> usize {
        self.n_private
    }

    /// Per-coordinate noise scale `sqrt(8 ln(1.25/delta)) / (N epsilon)`.
    pub fn noise_std(&self) -> f64 {
        (8.0 * (1.25 / self.delta).ln()).sqrt() / (self.n_private as f64 * self.epsilon)
    }
}

/// Replace-one-row L2 sensitivity bound of an empirical embedding mean:
/// `2/n`.  Requires `n >= 1`.
pub fn kme_sensitivity_bound(n_private: usize) -> f64 {
    assert!(n_private >= 1, "sensitivity bound needs n >= 1");
    2.0 / n_private as f64
}

/// Adds i.i.d. `N(0, noise_std^2)` to every coordinate, drawing from `rng`
/// in coordinate order.  The draw count and order depend only on the vector
/// length, never on its values, so the consumed stream is identical across
/// datasets of equal size — that is what makes the noise independent of the
/// data.
pub fn gaussian_mechanism<R: Rng + ?Sized>(
    coords: &DVector<f64>,
    privacy: &PrivacyParams,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !coords.iter().all(|c| c.is_finite()) {
        return Err(KmeError::NonFinite("mechanism input vector"));
    }
    let sigma = privacy.noise_std();
    Ok(coords.map(|c| {
        let z: f64 = rng.sample(StandardNormal);
        c + sigma * z
    }))
}
