//! Benchmark joint receiver: GaBP over every individual data and computing
//! symbol, then closed-form combining of the residual for the function
//! estimate.
//!
//! Each antenna observation holds soft replicas of all 2K symbols. One
//! iteration cancels interference per edge, aggregates extrinsic beliefs
//! down each column with leave-one-out precision weighting, denoises against
//! the QPSK prior (data) or an EM-tracked Gaussian prior (computing), and
//! damps. This receiver estimates every s_k individually, which the
//! single-stream receiver deliberately avoids; it serves as the performance
//! and complexity reference.

use num_complex::Complex64;

use crate::combiner::{
    apply_combiner, build_normal_system, error_covariance, gabp_linear_solve,
    mmse_combiner_direct, mmse_combiner_woodbury,
};
use crate::denoisers::{damp, damp_var, gaussian_denoise, qpsk_denoise, BeliefScalar, PriorGaussian, VAR_FLOOR};
use crate::model::{ChannelRealization, RxSignal, SystemConfig, TransmitFrame, UserRole};
use crate::nomographic::{make_selectors, NomographicKind};
use crate::{CMatrix, CVector, IccError, PipelineOptions, RMatrix, SolverMode};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Per-edge soft replicas of the benchmark receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct GabpState {
    /// Data replicas, one per (antenna, user) edge.
    pub d_hat: CMatrix,
    /// Computing-signal replicas.
    pub s_hat: CMatrix,
    /// Data replica variances, entries in [0, E_D].
    pub d_var: RMatrix,
    /// Computing replica variances, entries in [0, sigma_s^2].
    pub s_var: RMatrix,
    /// EM estimate of the computing-signal mean.
    pub mu_s_hat: Complex64,
    pub iteration: usize,
}

impl GabpState {
    /// Cold start: zero means, prior variances, pinned roles at zero.
    pub fn cold_start(cfg: &SystemConfig) -> Self {
        let n = cfg.n_antennas;
        let k = cfg.n_users;
        let sigma_s2 = cfg.sigma_s2();
        let mut d_var = RMatrix::from_element(n, k, cfg.data_power);
        let mut s_var = RMatrix::from_element(n, k, sigma_s2);
        for (k_idx, role) in cfg.roles.iter().enumerate() {
            if *role == UserRole::ComputeOnly {
                d_var.column_mut(k_idx).fill(0.0);
            }
            if *role == UserRole::DataOnly {
                s_var.column_mut(k_idx).fill(0.0);
            }
        }
        GabpState {
            d_hat: CMatrix::zeros(n, k),
            s_hat: CMatrix::zeros(n, k),
            d_var,
            s_var,
            mu_s_hat: Complex64::ZERO,
            iteration: 0,
        }
    }

    /// Genie start: every replica at ground truth with zero variance. Feeds
    /// the matched-filter bound.
    pub fn genie_start(cfg: &SystemConfig, truth: &TransmitFrame) -> Self {
        let n = cfg.n_antennas;
        let k = cfg.n_users;
        GabpState {
            d_hat: CMatrix::from_fn(n, k, |_, k_idx| truth.d[k_idx]),
            s_hat: CMatrix::from_fn(n, k, |_, k_idx| truth.s[k_idx]),
            d_var: RMatrix::zeros(n, k),
            s_var: RMatrix::zeros(n, k),
            mu_s_hat: Complex64::ZERO,
            iteration: 0,
        }
    }
}

/// Receiver output: consensus estimates, the per-edge data stds that feed
/// the combiner's error covariance, and one function estimate per stream.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub d_hat: CVector,
    pub s_hat: CVector,
    pub sigma_d: RMatrix,
    pub f_hat: Vec<Complex64>,
    /// True when a GaBP combining solve diverged and the Woodbury route
    /// supplied the weights instead.
    pub combiner_fallback: bool,
}

// ---------------------------------------------------------------------------
// Iteration
// ---------------------------------------------------------------------------

/// Per-edge interference-cancelled observations for both symbol streams.
struct SicPass {
    ytilde_d: CMatrix,
    vtilde_d: RMatrix,
    ytilde_s: CMatrix,
    vtilde_s: RMatrix,
}

/// Matched-filter column aggregates of one sIC pass.
struct ColumnSums {
    w_d: Vec<Complex64>,
    p_d: Vec<f64>,
    w_s: Vec<Complex64>,
    p_s: Vec<f64>,
}

fn sic_pass(state: &GabpState, y: &RxSignal, ch: &ChannelRealization, noise_var: f64) -> SicPass {
    let (n_ant, k_users) = ch.h.shape();
    let mut pass = SicPass {
        ytilde_d: CMatrix::zeros(n_ant, k_users),
        vtilde_d: RMatrix::zeros(n_ant, k_users),
        ytilde_s: CMatrix::zeros(n_ant, k_users),
        vtilde_s: RMatrix::zeros(n_ant, k_users),
    };
    for n in 0..n_ant {
        let mut d_mean = Complex64::ZERO;
        let mut d_var = 0.0;
        let mut s_mean = Complex64::ZERO;
        let mut s_var = 0.0;
        for q in 0..k_users {
            let h = ch.h[(n, q)];
            let h2 = h.norm_sqr();
            d_mean += h * state.d_hat[(n, q)];
            d_var += h2 * state.d_var[(n, q)];
            s_mean += h * state.s_hat[(n, q)];
            s_var += h2 * state.s_var[(n, q)];
        }
        let base = y.y[n] - d_mean - s_mean;
        for q in 0..k_users {
            let h = ch.h[(n, q)];
            let h2 = h.norm_sqr();
            pass.ytilde_d[(n, q)] = base + h * state.d_hat[(n, q)];
            pass.vtilde_d[(n, q)] =
                (d_var - h2 * state.d_var[(n, q)]).max(0.0) + s_var + noise_var;
            pass.ytilde_s[(n, q)] = base + h * state.s_hat[(n, q)];
            pass.vtilde_s[(n, q)] =
                d_var + (s_var - h2 * state.s_var[(n, q)]).max(0.0) + noise_var;
        }
    }
    pass
}

fn column_sums(pass: &SicPass, ch: &ChannelRealization) -> ColumnSums {
    let (n_ant, k_users) = ch.h.shape();
    let mut sums = ColumnSums {
        w_d: vec![Complex64::ZERO; k_users],
        p_d: vec![0.0; k_users],
        w_s: vec![Complex64::ZERO; k_users],
        p_s: vec![0.0; k_users],
    };
    for k in 0..k_users {
        let mut w_d = Complex64::ZERO;
        let mut p_d = 0.0;
        let mut w_s = Complex64::ZERO;
        let mut p_s = 0.0;
        for n in 0..n_ant {
            let hc = ch.h[(n, k)].conj();
            let h2 = ch.h[(n, k)].norm_sqr();
            let vd = pass.vtilde_d[(n, k)].max(VAR_FLOOR);
            w_d += hc * pass.ytilde_d[(n, k)] / vd;
            p_d += h2 / vd;
            let vs = pass.vtilde_s[(n, k)].max(VAR_FLOOR);
            w_s += hc * pass.ytilde_s[(n, k)] / vs;
            p_s += h2 / vs;
        }
        sums.w_d[k] = w_d;
        sums.p_d[k] = p_d;
        sums.w_s[k] = w_s;
        sums.p_s[k] = p_s;
    }
    sums
}

/// One full sweep: sIC, extrinsic beliefs, denoise, damp, per-iteration
/// computing consensus and EM mean update.
///
/// Edges with an empty extrinsic set (N = 1) keep their previous replica;
/// there is no new information to denoise against.
pub fn benchmark_iteration(
    state: &GabpState,
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
) -> Result<GabpState, IccError> {
    let (n_ant, k_users) = ch.h.shape();
    debug_assert_eq!(state.d_hat.shape(), (n_ant, k_users));
    let sigma_s2 = cfg.sigma_s2();
    let pass = sic_pass(state, y, ch, cfg.noise_var);
    let sums = column_sums(&pass, ch);

    let mut next = GabpState {
        d_hat: CMatrix::zeros(n_ant, k_users),
        s_hat: CMatrix::zeros(n_ant, k_users),
        d_var: RMatrix::zeros(n_ant, k_users),
        s_var: RMatrix::zeros(n_ant, k_users),
        mu_s_hat: state.mu_s_hat,
        iteration: state.iteration + 1,
    };
    let s_prior = PriorGaussian { mean: state.mu_s_hat, var: sigma_s2 };
    let mut finite = true;
    for k in 0..k_users {
        let role = cfg.roles[k];
        for n in 0..n_ant {
            let hc = ch.h[(n, k)].conj();
            let h2 = ch.h[(n, k)].norm_sqr();
            if role != UserRole::ComputeOnly {
                let vd = pass.vtilde_d[(n, k)].max(VAR_FLOOR);
                let ext_p = sums.p_d[k] - h2 / vd;
                if ext_p > 0.0 {
                    let belief = BeliefScalar {
                        mean: (sums.w_d[k] - hc * pass.ytilde_d[(n, k)] / vd) / ext_p,
                        var: ext_p.recip(),
                    };
                    let (est, var) = qpsk_denoise(belief, cfg.data_power);
                    next.d_hat[(n, k)] = damp(est, state.d_hat[(n, k)], cfg.beta_d);
                    next.d_var[(n, k)] =
                        damp_var(var, state.d_var[(n, k)], cfg.beta_d).max(0.0);
                } else {
                    next.d_hat[(n, k)] = state.d_hat[(n, k)];
                    next.d_var[(n, k)] = state.d_var[(n, k)];
                }
                finite &= next.d_hat[(n, k)].is_finite();
            }
            if role != UserRole::DataOnly {
                let vs = pass.vtilde_s[(n, k)].max(VAR_FLOOR);
                let ext_p = sums.p_s[k] - h2 / vs;
                if ext_p > 0.0 {
                    let belief = BeliefScalar {
                        mean: (sums.w_s[k] - hc * pass.ytilde_s[(n, k)] / vs) / ext_p,
                        var: ext_p.recip(),
                    };
                    let (est, var) = gaussian_denoise(belief, s_prior)?;
                    next.s_hat[(n, k)] = damp(est, state.s_hat[(n, k)], cfg.beta_s);
                    next.s_var[(n, k)] =
                        damp_var(var, state.s_var[(n, k)], cfg.beta_s).max(0.0);
                } else {
                    next.s_hat[(n, k)] = state.s_hat[(n, k)];
                    next.s_var[(n, k)] = state.s_var[(n, k)];
                }
                finite &= next.s_hat[(n, k)].is_finite();
            }
        }
        debug_assert!(
            next.d_var.column(k).iter().all(|&v| (0.0..=cfg.data_power * (1.0 + 1e-9)).contains(&v)),
            "data variance left [0, E_D] at iteration {}",
            next.iteration
        );
        debug_assert!(
            next.s_var.column(k).iter().all(|&v| (0.0..=sigma_s2 * (1.0 + 1e-9) + f64::MIN_POSITIVE).contains(&v)),
            "computing variance left [0, sigma_s^2] at iteration {}",
            next.iteration
        );
    }

    // Computing consensus feeds the EM mean; the fresh sIC statistics of
    // this sweep weight every antenna's message by its precision.
    let computing: Vec<usize> = cfg.computing_users();
    if !computing.is_empty() {
        let next_pass = sic_pass(&next, y, ch, cfg.noise_var);
        let next_sums = column_sums(&next_pass, ch);
        let mut acc = Complex64::ZERO;
        for &k in &computing {
            let s_k = if next_sums.p_s[k] > 0.0 {
                next_sums.w_s[k] / next_sums.p_s[k]
            } else {
                Complex64::ZERO
            };
            acc += s_k;
        }
        next.mu_s_hat = acc / computing.len() as f64;
        finite &= next.mu_s_hat.is_finite();
    }

    if !finite {
        return Err(IccError::Divergence {
            iteration: next.iteration,
            detail: "non-finite replica in benchmark sweep".into(),
        });
    }
    Ok(next)
}

/// Precision-weighted consensus over all antennas from a fresh sIC pass on
/// the final state.
fn consensus(state: &GabpState, y: &RxSignal, ch: &ChannelRealization, cfg: &SystemConfig) -> (CVector, CVector) {
    let k_users = ch.h.ncols();
    let pass = sic_pass(state, y, ch, cfg.noise_var);
    let sums = column_sums(&pass, ch);
    let mut d = CVector::zeros(k_users);
    let mut s = CVector::zeros(k_users);
    for k in 0..k_users {
        if cfg.roles[k] != UserRole::ComputeOnly && sums.p_d[k] > 0.0 {
            d[k] = sums.w_d[k] / sums.p_d[k];
        }
        if cfg.roles[k] != UserRole::DataOnly && sums.p_s[k] > 0.0 {
            s[k] = sums.w_s[k] / sums.p_s[k];
        }
    }
    (d, s)
}

// ---------------------------------------------------------------------------
// Full receiver
// ---------------------------------------------------------------------------

/// Full benchmark pipeline with explicit solver options and an optional
/// warm-started state (ground truth gives the matched-filter bound).
pub fn run_benchmark_with(
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    opts: &PipelineOptions,
    init: Option<GabpState>,
) -> Result<BenchmarkOutput, IccError> {
    cfg.validate()?;
    let mut state = init.unwrap_or_else(|| GabpState::cold_start(cfg));
    for _ in 0..cfg.i_max {
        state = benchmark_iteration(&state, y, ch, cfg)?;
    }
    let (d_hat, s_hat) = consensus(&state, y, ch, cfg);
    let sigma_d = state.d_var.map(f64::sqrt);

    let selectors = make_selectors(&cfg.roles, &cfg.stream_assignment, cfg.n_streams)?;
    let omega = error_covariance(&sigma_d, opts.omega);
    let sigma_s2 = cfg.sigma_s2();
    let sys = build_normal_system(ch, sigma_s2, &omega, cfg.noise_var, &selectors);
    let prior = PriorGaussian { mean: Complex64::ZERO, var: cfg.sigma_u2 };

    let mut f_hat = Vec::with_capacity(selectors.len());
    let mut combiner_fallback = false;
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
                            combiner_fallback = true;
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
    Ok(BenchmarkOutput { d_hat, s_hat, sigma_d, f_hat, combiner_fallback })
}

/// Benchmark receiver with the direct combiner solve and cold start.
pub fn run_benchmark(
    y: &RxSignal,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
) -> Result<BenchmarkOutput, IccError> {
    let opts = PipelineOptions { solver: SolverMode::Direct, ..PipelineOptions::default() };
    run_benchmark_with(y, ch, cfg, &opts, None)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
