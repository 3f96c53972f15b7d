//! Scalar denoisers, damping, and EM building blocks shared by every GaBP
//! stage.
//!
//! Each message-passing sweep ends the same way: an extrinsic belief
//! (a leave-one-out Gaussian summary of all observations about one unknown)
//! is pushed through the unknown's prior to obtain a posterior-mean estimate
//! and its MSE. Only two priors occur in this system: the QPSK constellation
//! for data symbols and a Gaussian with EM-tracked mean for computing
//! symbols and combining weights.

use num_complex::Complex64;

use crate::IccError;

/// Floor applied to every replica variance after damping. Keeps the
/// downstream precision divisions defined when a denoiser saturates to an
/// exactly-zero MSE.
pub const VAR_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Extrinsic belief about one scalar unknown.
///
/// `var = f64::INFINITY` encodes an uninformative belief (empty leave-one-out
/// set); both denoisers treat it exactly as the prior-only limit.
#[derive(Debug, Clone, Copy)]
pub struct BeliefScalar {
    pub mean: Complex64,
    pub var: f64,
}

impl BeliefScalar {
    /// Belief carrying no information; denoisers fall back to the prior.
    pub fn uninformative() -> Self {
        BeliefScalar {
            mean: Complex64::ZERO,
            var: f64::INFINITY,
        }
    }
}

/// Gaussian prior with a (possibly EM-updated) mean.
#[derive(Debug, Clone, Copy)]
pub struct PriorGaussian {
    pub mean: Complex64,
    pub var: f64,
}

// ---------------------------------------------------------------------------
// Denoisers
// ---------------------------------------------------------------------------

/// Posterior mean and MSE of a Gray-QPSK symbol under a Gaussian belief.
///
/// With `c_d = sqrt(data_power / 2)` the real and imaginary parts decouple
/// and the posterior mean is `c_d * tanh(2 c_d Re(mean) / var)` per
/// component; the MSE is `data_power - |estimate|^2`.
pub fn qpsk_denoise(b: BeliefScalar, data_power: f64) -> (Complex64, f64) {
    let c_d = (data_power / 2.0).sqrt();
    let est = if b.var.is_finite() {
        let scale = 2.0 * c_d / b.var;
        Complex64::new(
            c_d * (scale * b.mean.re).tanh(),
            c_d * (scale * b.mean.im).tanh(),
        )
    } else {
        Complex64::ZERO
    };
    let var = (data_power - est.norm_sqr()).max(0.0);
    (est, var)
}

/// Posterior mean and variance for a Gaussian unknown under a Gaussian
/// belief: the precision-weighted blend of belief and prior.
pub fn gaussian_denoise(
    b: BeliefScalar,
    prior: PriorGaussian,
) -> Result<(Complex64, f64), IccError> {
    if !b.var.is_finite() {
        // Uninformative belief: posterior is the prior itself.
        return Ok((prior.mean, prior.var));
    }
    let denom = b.var + prior.var;
    if denom <= 0.0 {
        return Err(IccError::Domain(format!(
            "gaussian denoiser with degenerate variances (belief {}, prior {})",
            b.var, prior.var
        )));
    }
    let est = (prior.var * b.mean + b.var * prior.mean) / denom;
    let var = prior.var * b.var / denom;
    Ok((est, var))
}

// ---------------------------------------------------------------------------
// Damping and EM
// ---------------------------------------------------------------------------

/// Convex blend `beta * new + (1 - beta) * old` for estimates.
#[inline]
pub fn damp(new: Complex64, old: Complex64, beta: f64) -> Complex64 {
    beta * new + (1.0 - beta) * old
}

/// Convex blend for variances; callers apply [`VAR_FLOOR`] afterwards.
#[inline]
pub fn damp_var(new: f64, old: f64, beta: f64) -> f64 {
    beta * new + (1.0 - beta) * old
}

/// EM re-estimate of an unknown prior mean: the arithmetic mean of the
/// current posterior estimates (over K consensus values for the computing
/// stream, over all N*N edges for the combining stage).
pub fn em_update_mean(estimates: &[Complex64]) -> Result<Complex64, IccError> {
    if estimates.is_empty() {
        return Err(IccError::Domain(
            "EM mean update over an empty collection".into(),
        ));
    }
    let sum: Complex64 = estimates.iter().sum();
    Ok(sum / estimates.len() as f64)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
