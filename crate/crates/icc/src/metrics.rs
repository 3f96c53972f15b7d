//! Bit-error-rate and function-accuracy metrics, SNR bookkeeping, and the
//! analytic reference curve for the matched-filter bound.
//!
//! One receiver run yields one [`TrialMetrics`] record; a campaign grid
//! point folds its records into a [`MetricsAccumulator`] in trial-index
//! order so that aggregates are bit-identical regardless of how many worker
//! threads produced the records. The sweep axis throughout is the computing
//! SNR in dB, converted to a noise variance by [`snr_to_noise_var`] via
//! `E[||H s||^2] = N * E_D` per stream.

use num_complex::Complex64;

use crate::model::SystemConfig;
use crate::receiver_icc::ConvergenceFlags;
use crate::IccError;

/// Two-sided 95% standard-normal quantile.
const Z_95: f64 = 1.959963984540054;

// ---------------------------------------------------------------------------
// Per-trial record
// ---------------------------------------------------------------------------

/// Tallies produced by a single receiver run.
///
/// Invariant: `bit_errors <= bits_total`.
#[derive(Debug, Clone, Copy)]
pub struct TrialMetrics {
    /// Mismatched bits over the counted data users.
    pub bit_errors: usize,
    /// Bits compared; zero when no user's data is detected.
    pub bits_total: usize,
    /// Squared function-estimate error summed over streams.
    pub nmse_num: f64,
    /// Number of function streams behind `nmse_num`.
    pub streams: usize,
    /// Stage health of the run that produced this record.
    pub converged: ConvergenceFlags,
}

impl TrialMetrics {
    /// Bundle one trial's counts; checks the tally invariant in debug builds.
    pub fn new(
        bit_errors: usize,
        bits_total: usize,
        nmse_num: f64,
        streams: usize,
        converged: ConvergenceFlags,
    ) -> Self {
        debug_assert!(bit_errors <= bits_total, "more bit errors than bits");
        Self { bit_errors, bits_total, nmse_num, streams, converged }
    }
}

// ---------------------------------------------------------------------------
// Point metrics
// ---------------------------------------------------------------------------

/// Hard decision on one consensus symbol under the Gray map: bit 1 is the
/// sign of the real part, bit 2 the sign of the imaginary part.
pub fn hard_decision(d: Complex64) -> [u8; 2] {
    [u8::from(d.re < 0.0), u8::from(d.im < 0.0)]
}

/// Fraction of mismatched bits, or `None` when no data bits were compared
/// (the undefined-metric marker for campaigns with zero data users).
pub fn ber(d_hat_bits: &[[u8; 2]], true_bits: &[[u8; 2]]) -> Result<Option<f64>, IccError> {
    if d_hat_bits.len() != true_bits.len() {
        return Err(IccError::Config(
            "bit sequences disagree in length".into(),
        ));
    }
    if d_hat_bits.is_empty() {
        return Ok(None);
    }
    let errors: usize = d_hat_bits
        .iter()
        .zip(true_bits)
        .map(|(a, b)| usize::from(a[0] != b[0]) + usize::from(a[1] != b[1]))
        .sum();
    Ok(Some(errors as f64 / (2 * d_hat_bits.len()) as f64))
}

/// Normalized mean squared error `||f_true - f_hat||^2 / K`. The divisor is
/// the user count, not the stream count.
pub fn nmse(f_hat: &[Complex64], f_true: &[Complex64], n_users: usize) -> Result<f64, IccError> {
    if f_hat.len() != f_true.len() {
        return Err(IccError::Config(
            "function estimate and target disagree in length".into(),
        ));
    }
    if n_users == 0 {
        return Err(IccError::Config("NMSE needs at least one user".into()));
    }
    let num: f64 = f_hat
        .iter()
        .zip(f_true)
        .map(|(a, b)| (b - a).norm_sqr())
        .sum();
    Ok(num / n_users as f64)
}

/// Noise variance that realizes a target computing SNR in dB:
/// `sigma_w^2 = M * N * E_D / 10^(snr/10)`, from
/// `E[||H s||^2] = N * K * E_S = N * E_D` per stream.
pub fn snr_to_noise_var(target_snr_s_db: f64, cfg: &SystemConfig) -> f64 {
    let signal = (cfg.n_streams * cfg.n_antennas) as f64 * cfg.data_power;
    signal / 10f64.powf(target_snr_s_db / 10.0)
}

/// Post-combining data SINR with the computing stream weighted by
/// `alpha_s` (1 treats it as interference, 0 removes it). Role-aware: only
/// data users contribute signal power and only computing users contribute
/// interference power. For the all-both configuration this is
/// `N*K*E_D / (alpha_s*N*E_D + sigma_w^2)`.
pub fn sinr_d(cfg: &SystemConfig, noise_var: f64, alpha_s: f64) -> f64 {
    let n = cfg.n_antennas as f64;
    let signal = n * cfg.data_users().len() as f64 * cfg.data_power;
    let interference = alpha_s * n * cfg.computing_users().len() as f64 * cfg.sigma_s2();
    signal / (interference + noise_var)
}

// ---------------------------------------------------------------------------
// Analytic reference
// ---------------------------------------------------------------------------

/// Closed-form average BER of Gray-QPSK with `n_branches`-fold maximal-ratio
/// combining over iid unit-variance Rayleigh branches. `snr_per_branch` is
/// the average received symbol SNR per branch, `E_D / sigma_w^2`; the Gray
/// split puts half of it on each bit. Requires `n_branches >= 1`.
pub fn analytic_mrc_qpsk_ber(n_branches: usize, snr_per_branch: f64) -> f64 {
    debug_assert!(n_branches >= 1, "need at least one diversity branch");
    let gamma_b = (snr_per_branch / 2.0).max(0.0);
    let mu = (gamma_b / (1.0 + gamma_b)).sqrt();
    let a = (1.0 - mu) / 2.0;
    let b = (1.0 + mu) / 2.0;
    // sum_{k=0}^{N-1} C(N-1+k, k) b^k via the multiplicative recurrence.
    let mut coeff = 1.0;
    let mut b_pow = 1.0;
    let mut sum = 1.0;
    for k in 1..n_branches {
        coeff *= (n_branches - 1 + k) as f64 / k as f64;
        b_pow *= b;
        sum += coeff * b_pow;
    }
    a.powi(n_branches as i32) * sum
}

// ---------------------------------------------------------------------------
// Interval estimates
// ---------------------------------------------------------------------------

/// Wilson 95% interval for a binomial proportion; `None` when no bits were
/// observed.
pub fn wilson_ci95(errors: usize, total: usize) -> Option<(f64, f64)> {
    if total == 0 {
        return None;
    }
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Some(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Normal-approximation 95% interval for a sample mean from running sums;
/// `None` when the sample is empty, degenerate at the mean for one sample.
pub fn normal_ci95(sum: f64, sum_sq: f64, n: usize) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mean = sum / nf;
    if n == 1 {
        return Some((mean, mean));
    }
    let var = ((sum_sq - sum * sum / nf) / (nf - 1.0)).max(0.0);
    let half = Z_95 * (var / nf).sqrt();
    Some((mean - half, mean + half))
}

// ---------------------------------------------------------------------------
// Campaign aggregation
// ---------------------------------------------------------------------------

/// Ordered reducer of per-trial records for one campaign grid point.
///
/// Integer tallies are order-independent; the NMSE running sums are not, so
/// callers feed records in trial-index order to keep aggregates
/// bit-identical across worker-thread counts.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    n_users: usize,
    trials: usize,
    evaluated: usize,
    bit_errors: usize,
    bits_total: usize,
    nmse_sum: f64,
    nmse_sum_sq: f64,
    diverged: usize,
}

impl MetricsAccumulator {
    /// Empty accumulator normalizing NMSE by `n_users`.
    pub fn new(n_users: usize) -> Self {
        Self {
            n_users,
            trials: 0,
            evaluated: 0,
            bit_errors: 0,
            bits_total: 0,
            nmse_sum: 0.0,
            nmse_sum_sq: 0.0,
            diverged: 0,
        }
    }

    /// Fold one completed trial. A combining fallback counts as a
    /// divergence, but the trial's output still enters the statistics.
    pub fn push(&mut self, t: &TrialMetrics) {
        self.trials += 1;
        self.evaluated += 1;
        self.bit_errors += t.bit_errors;
        self.bits_total += t.bits_total;
        let v = t.nmse_num / self.n_users as f64;
        self.nmse_sum += v;
        self.nmse_sum_sq += v * v;
        if !(t.converged.detection && t.converged.combining) {
            self.diverged += 1;
        }
    }

    /// Record a trial that diverged before producing any output; it counts
    /// toward the divergence fraction and nothing else.
    pub fn push_diverged(&mut self) {
        self.trials += 1;
        self.diverged += 1;
    }

    /// Trials seen, including ones that produced no output.
    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Pooled BER over all counted bits; `None` when no bits were compared.
    pub fn ber(&self) -> Option<f64> {
        (self.bits_total > 0).then(|| self.bit_errors as f64 / self.bits_total as f64)
    }

    /// Half-width of the Wilson 95% interval around the pooled BER.
    pub fn ber_ci95_half(&self) -> Option<f64> {
        wilson_ci95(self.bit_errors, self.bits_total).map(|(lo, hi)| (hi - lo) / 2.0)
    }

    /// Mean per-trial NMSE over trials that produced output.
    pub fn nmse(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| self.nmse_sum / self.evaluated as f64)
    }

    /// Half-width of the normal-approximation 95% interval around the mean
    /// NMSE.
    pub fn nmse_ci95_half(&self) -> Option<f64> {
        normal_ci95(self.nmse_sum, self.nmse_sum_sq, self.evaluated)
            .map(|(lo, hi)| (hi - lo) / 2.0)
    }

    /// Fraction of trials flagged as diverged; 0 on an empty accumulator.
    pub fn diverged_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.diverged as f64 / self.trials as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
