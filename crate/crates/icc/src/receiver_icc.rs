//! Integrated receivers: data-only GaBP detection with the computing stream
//! absorbed into a per-antenna effective noise profile, followed by a
//! combining stage that extracts the function value from the residual.
//!
//! Unlike the benchmark receiver, no individual computing symbol is ever
//! estimated. The detection stage runs over N x K data edges only, and the
//! combining stage solves one N-dimensional linear system per stream. This
//! is the receiver the library is about; the workflow is
//! detection -> error covariance -> combiner solve -> residual combining.

use num_complex::Complex64;

use crate::combiner::{
    apply_combiner, build_normal_system, error_covariance, gabp_linear_solve,
    mmse_combiner_direct, mmse_combiner_woodbury,
};
use crate::denoisers::{damp, damp_var, qpsk_denoise, BeliefScalar, PriorGaussian, VAR_FLOOR};
use crate::model::{ChannelRealization, RxSignal, SystemConfig, TransmitFrame, UserRole};
use crate::nomographic::{make_selectors, NomographicKind, StreamSelector};
use crate::{CMatrix, CVector, IccError, PipelineOptions, RMatrix, RVector, SolverMode};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Per-antenna variance of the unestimated part of the received signal,
/// `sigma_s^2 xi_n + sigma_w^2` under channel hardening.
#[derive(Debug, Clone)]
pub struct EffectiveNoiseProfile {
    pub per_antenna_var: RVector,
}

/// Receiver-side knowledge of which users transmit no data; their replicas
/// stay pinned at zero with zero variance.
#[derive(Debug, Clone)]
pub struct AccessConstraints {
    pub force_zero_data: Vec<bool>,
}

impl AccessConstraints {
    /// No pinning.
    pub fn none(n_users: usize) -> Self {
        AccessConstraints { force_zero_data: vec![false; n_users] }
    }

    /// Pin compute-only users; with `pin_kds` also pin dual-role users,
    /// which discards data they do transmit (kept for ablation).
    pub fn from_roles(roles: &[UserRole], pin_kds: bool) -> Self {
        AccessConstraints {
            force_zero_data: roles
                .iter()
                .map(|r| *r == UserRole::ComputeOnly || (pin_kds && *r == UserRole::Both))
                .collect(),
        }
    }
}

/// Stage health of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergenceFlags {
    /// Detection stage produced finite estimates.
    pub detection: bool,
    /// All combining solves finished without a divergence fallback.
    pub combining: bool,
}

/// Pipeline output: consensus data estimates, per-edge data stds, and one
/// function estimate per stream.
#[derive(Debug, Clone)]
pub struct IccOutput {
    pub d_hat: CVector,
    pub sigma_d: RMatrix,
    pub f_hat: Vec<Complex64>,
    pub converged: ConvergenceFlags,
}

// ---------------------------------------------------------------------------
// Effective noise
// ---------------------------------------------------------------------------

/// Diagonal approximation of the computing-signal covariance at the
/// antennas. With `sigma_s2 = 0` every entry is exactly `noise_var`.
pub fn effective_noise_profile(
    ch: &ChannelRealization,
    sigma_s2: f64,
    noise_var: f64,
) -> EffectiveNoiseProfile {
    EffectiveNoiseProfile {
        per_antenna_var: ch.xi.map(|xi| sigma_s2 * xi + noise_var),
    }
}

// ---------------------------------------------------------------------------
// Detection stage
// ---------------------------------------------------------------------------

/// How the per-edge replicas collapse into one estimate per user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Consensus {
    /// Arithmetic mean over antennas, as the single-stream receiver prints.
    PlainAverage,
    /// Precision-weighted sum from a fresh sIC pass, as the benchmark uses.
    PrecisionWeighted,
}

fn data_stage(
    y: &RxSignal,
    ch: &ChannelRealization,
    profile: &EffectiveNoiseProfile,
    cfg: &SystemConfig,
    constraints: &AccessConstraints,
    init: Option<&TransmitFrame>,
    consensus: Consensus,
) -> Result<(CVector, RMatrix), IccError> {
    let (n_ant, k_users) = ch.h.shape();
    if profile.per_antenna_var.len() != n_ant || constraints.force_zero_data.len() != k_users {
        return Err(IccError::Config(
            "effective-noise profile or constraints disagree with the channel shape".into(),
        ));
    }
    let e_d = cfg.data_power;
    let pinned = &constraints.force_zero_data;

    let mut d_hat = match init {
        Some(truth) => CMatrix::from_fn(n_ant, k_users, |_, k| {
            if pinned[k] { Complex64::ZERO } else { truth.d[k] }
        }),
        None => CMatrix::zeros(n_ant, k_users),
    };
    let mut d_var = RMatrix::from_fn(n_ant, k_users, |_, k| {
        if pinned[k] || init.is_some() { 0.0 } else { e_d }
    });

    let mut ytilde = CMatrix::zeros(n_ant, k_users);
    let mut vtilde = RMatrix::zeros(n_ant, k_users);
    let mut col_w = vec![Complex64::ZERO; k_users];
    let mut col_p = vec![0.0f64; k_users];

    let sic = |d_hat: &CMatrix,
                   d_var: &RMatrix,
                   ytilde: &mut CMatrix,
                   vtilde: &mut RMatrix,
                   col_w: &mut [Complex64],
                   col_p: &mut [f64]| {
        for n in 0..n_ant {
            let mut mean_sum = Complex64::ZERO;
            let mut var_sum = 0.0;
            for q in 0..k_users {
                mean_sum += ch.h[(n, q)] * d_hat[(n, q)];
                var_sum += ch.h[(n, q)].norm_sqr() * d_var[(n, q)];
            }
            let base = y.y[n] - mean_sum;
            for q in 0..k_users {
                let h2 = ch.h[(n, q)].norm_sqr();
                ytilde[(n, q)] = base + ch.h[(n, q)] * d_hat[(n, q)];
                vtilde[(n, q)] =
                    (var_sum - h2 * d_var[(n, q)]).max(0.0) + profile.per_antenna_var[n];
            }
        }
        for k in 0..k_users {
            let mut w = Complex64::ZERO;
            let mut p = 0.0;
            for n in 0..n_ant {
                let v = vtilde[(n, k)].max(VAR_FLOOR);
                w += ch.h[(n, k)].conj() * ytilde[(n, k)] / v;
                p += ch.h[(n, k)].norm_sqr() / v;
            }
            col_w[k] = w;
            col_p[k] = p;
        }
    };

    for iteration in 1..=cfg.i_max {
        sic(&d_hat, &d_var, &mut ytilde, &mut vtilde, &mut col_w, &mut col_p);
        let mut finite = true;
        for k in 0..k_users {
            if pinned[k] {
                continue;
            }
            for n in 0..n_ant {
                let v = vtilde[(n, k)].max(VAR_FLOOR);
                let h2 = ch.h[(n, k)].norm_sqr();
                let ext_p = col_p[k] - h2 / v;
                if ext_p > 0.0 {
                    let belief = BeliefScalar {
                        mean: (col_w[k] - ch.h[(n, k)].conj() * ytilde[(n, k)] / v) / ext_p,
                        var: ext_p.recip(),
                    };
                    let (est, var) = qpsk_denoise(belief, e_d);
                    d_hat[(n, k)] = damp(est, d_hat[(n, k)], cfg.beta_d);
                    d_var[(n, k)] = damp_var(var, d_var[(n, k)], cfg.beta_d).max(0.0);
                }
                finite &= d_hat[(n, k)].is_finite();
            }
            debug_assert!(
                d_var.column(k).iter().all(|&v| (0.0..=e_d * (1.0 + 1e-9)).contains(&v)),
                "data variance left [0, E_D] at iteration {iteration}"
            );
        }
        if !finite {
            return Err(IccError::Divergence {
                iteration,
                detail: "non-finite replica in detection sweep".into(),
            });
        }
    }

    let mut consensus_d = CVector::zeros(k_users);
    match consensus {
        Consensus::PlainAverage => {
            for k in 0..k_users {
                if !pinned[k] {
                    consensus_d[k] = d_hat.column(k).iter().sum::<Complex64>() / n_ant as f64;
                }
            }
        }
        Consensus::PrecisionWeighted => {
            sic(&d_hat, &d_var, &mut ytilde, &mut vtilde, &mut col_w, &mut col_p);
            for k in 0..k_users {
                if !pinned[k] && col_p[k] > 0.0 {
                    consensus_d[k] = col_w[k] / col_p[k];
                }
            }
        }
    }
    Ok((consensus_d, d_var.map(f64::sqrt)))
}

/// Detection with the computing stream as effective noise: cold start and
/// the plain-average consensus.
pub fn run_data_gabp(
    y: &RxSignal,
    ch: &ChannelRealization,
    profile: &EffectiveNoiseProfile,
    cfg: &SystemConfig,
    constraints: &AccessConstraints,
) -> Result<(CVector, RMatrix), IccError> {
    data_stage(y, ch, profile, cfg, constraints, None, Consensus::PlainAverage)
}

// ---------------------------------------------------------------------------
// Full pipelines
// ---------------------------------------------------------------------------

fn pipeline(
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    selectors: &[StreamSelector],
    opts: &PipelineOptions,
    init: Option<&TransmitFrame>,
) -> Result<IccOutput, IccError> {
    cfg.validate()?;
    debug_assert!(selectors.iter().all(|sel| sel.p.len() == cfg.n_users));
    let sigma_s2 = cfg.sigma_s2();
    let profile = effective_noise_profile(ch, sigma_s2, cfg.noise_var);
    let constraints = AccessConstraints::from_roles(&cfg.roles, opts.pin_kds);
    let consensus = if opts.precision_weighted_consensus {
        Consensus::PrecisionWeighted
    } else {
        Consensus::PlainAverage
    };
    let (d_hat, sigma_d) = data_stage(y, ch, &profile, cfg, &constraints, init, consensus)?;

    let omega = error_covariance(&sigma_d, opts.omega);
    let sys = build_normal_system(ch, sigma_s2, &omega, cfg.noise_var, selectors);
    let prior = PriorGaussian { mean: Complex64::ZERO, var: cfg.sigma_u2 };
    let mut f_hat = Vec::with_capacity(selectors.len());
    let mut fallback = false;
    for m in 0..selectors.len() {
        let u = if sys.b[m].norm_squared() == 0.0 {
            CVector::zeros(cfg.n_antennas)
        } else {
            match opts.solver {
                SolverMode::Direct => mmse_combiner_direct(&sys, m)?,
                SolverMode::Woodbury => {
                    mmse_combiner_woodbury(ch, sigma_s2, &sys.omega, cfg.noise_var, &sys.b[m])?
                }
                SolverMode::Gabp => {
                    match gabp_linear_solve(&sys, m, prior, cfg.beta_u, cfg.i_max) {
                        Ok(u) => u,
                        Err(IccError::CombinerDivergence { .. }) => {
                            fallback = true;
                            mmse_combiner_woodbury(
                                ch,
                                sigma_s2,
                                &sys.omega,
                                cfg.noise_var,
                                &sys.b[m],
                            )?
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        };
        f_hat.push(apply_combiner(&u, y, ch, &d_hat, NomographicKind::Sum, opts.real_only));
    }
    Ok(IccOutput {
        d_hat,
        sigma_d,
        f_hat,
        converged: ConvergenceFlags { detection: true, combining: !fallback },
    })
}

/// Single-stream receiver: one function over all computing users. Requires
/// `cfg.n_streams == 1`; delegates to the multi-stream pipeline with the
/// derived selector, so the two agree bit for bit at M = 1.
pub fn run_single_stream(
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    opts: &PipelineOptions,
) -> Result<IccOutput, IccError> {
    if cfg.n_streams != 1 {
        return Err(IccError::Config(format!(
            "single-stream receiver needs M = 1, got M = {}",
            cfg.n_streams
        )));
    }
    let selectors = make_selectors(&cfg.roles, &cfg.stream_assignment, 1)?;
    pipeline(y, ch, cfg, &selectors, opts, None)
}

/// Multi-stream receiver: the shared detection stage, then one combining
/// solve and residual combining per selector.
pub fn run_multi_stream(
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    selectors: &[StreamSelector],
    opts: &PipelineOptions,
) -> Result<IccOutput, IccError> {
    pipeline(y, ch, cfg, selectors, opts, None)
}

/// Matched-filter bound: identical pipeline warm-started at the true
/// transmit frame with zero replica variances.
pub fn run_mf_bound(
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    truth: &TransmitFrame,
    opts: &PipelineOptions,
) -> Result<IccOutput, IccError> {
    let selectors = make_selectors(&cfg.roles, &cfg.stream_assignment, cfg.n_streams)?;
    pipeline(y, ch, cfg, &selectors, opts, Some(truth))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
