//! MMSE combiner construction and solving for the computing stream.
//!
//! The combining vector for stream m solves `A u_m = b_m` with
//! `A = H (sigma_s^2 I + Omega) H^H + sigma_w^2 I` and `b_m = sigma_s^2 H p_m`,
//! where `Omega` captures residual data-detection error. Three routes are
//! provided: a dense Hermitian solve, the Woodbury identity working in the
//! K-dimensional user space, and an inversion-free GaBP sweep over the
//! N-dimensional linear system. The routes are algebraically equivalent and
//! kept separate so each can serve as an oracle for the others.

use num_complex::Complex64;
use serde::Deserialize;

use crate::denoisers::{
    damp, damp_var, gaussian_denoise, BeliefScalar, PriorGaussian, VAR_FLOOR,
};
use crate::model::{ChannelRealization, RxSignal};
use crate::nomographic::{postprocess, NomographicKind, StreamSelector};
use crate::{CMatrix, CVector, IccError, RMatrix};

// ---------------------------------------------------------------------------
// Modes
// ---------------------------------------------------------------------------

/// Which linear-system route computes the combining vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Direct,
    Woodbury,
    Gabp,
}

impl SolverMode {
    pub fn name(self) -> &'static str {
        match self {
            SolverMode::Direct => "direct",
            SolverMode::Woodbury => "woodbury",
            SolverMode::Gabp => "gabp",
        }
    }
}

/// How the detection-error covariance enters the combiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    /// Full cross form `Omega = Sigma^H Sigma`, off-diagonal std products
    /// included.
    AsPrinted,
    /// Keep only the per-user diagonal `sum_n sigma_{n,k}^2`.
    Diagonal,
}

impl OmegaMode {
    pub fn name(self) -> &'static str {
        match self {
            OmegaMode::AsPrinted => "as_printed",
            OmegaMode::Diagonal => "diagonal",
        }
    }
}

// ---------------------------------------------------------------------------
// System assembly
// ---------------------------------------------------------------------------

/// Normal system shared by all solver routes: one Hermitian `A` and one
/// right-hand side per stream.
#[derive(Debug, Clone)]
pub struct CombinerSystem {
    /// `A = H (sigma_s^2 I + Omega) H^H + sigma_w^2 I`, N x N Hermitian.
    pub a: CMatrix,
    /// `b_m = sigma_s^2 H p_m`, one per stream.
    pub b: Vec<CVector>,
    /// Error covariance used in the assembly, K x K.
    pub omega: CMatrix,
}

/// Detection-error covariance from the per-edge standard deviations of the
/// data stage, `Omega = Sigma^H Sigma` with `Sigma` the N x K std matrix.
pub fn error_covariance(sigma_d: &RMatrix, mode: OmegaMode) -> CMatrix {
    let k = sigma_d.ncols();
    match mode {
        OmegaMode::AsPrinted => {
            let real = sigma_d.transpose() * sigma_d;
            CMatrix::from_fn(k, k, |i, j| Complex64::new(real[(i, j)], 0.0))
        }
        OmegaMode::Diagonal => CMatrix::from_fn(k, k, |i, j| {
            if i == j {
                Complex64::new(sigma_d.column(i).norm_squared(), 0.0)
            } else {
                Complex64::ZERO
            }
        }),
    }
}

/// Positive-definiteness sanity check, debug builds only. A Gershgorin
/// shift plus power iteration approximates the extreme eigenvalue; the
/// Rayleigh quotient bounds it from below, so a clearly indefinite A trips
/// the assert while a marginal one may pass.
#[cfg(debug_assertions)]
fn debug_check_pd(a: &CMatrix) {
    let n = a.nrows();
    let shift: f64 = a
        .row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let shifted = {
        let mut m = -a.clone();
        for i in 0..n {
            m[(i, i)] += Complex64::new(shift, 0.0);
        }
        m
    };
    let mut v = CVector::from_element(n, Complex64::ONE / (n as f64).sqrt());
    for _ in 0..8 {
        v = &shifted * v;
        let norm = v.norm();
        if norm == 0.0 {
            return;
        }
        v /= Complex64::new(norm, 0.0);
    }
    let rayleigh = v.dotc(&(&shifted * &v)).re;
    let min_eig_upper = shift - rayleigh;
    debug_assert!(
        min_eig_upper > -1e-10 * shift.max(1.0),
        "combiner system lost positive definiteness (lambda_min <= {min_eig_upper:.3e})"
    );
}

/// Assemble `A` and the per-stream right-hand sides.
///
/// The selected channel columns are summed in ascending user order, so
/// right-hand sides are additive across a partition of the users.
pub fn build_normal_system(
    ch: &ChannelRealization,
    sigma_s2: f64,
    omega: &CMatrix,
    noise_var: f64,
    selectors: &[StreamSelector],
) -> CombinerSystem {
    let (n, k) = ch.h.shape();
    debug_assert_eq!(omega.nrows(), k);
    let mut c = omega.clone();
    for i in 0..k {
        c[(i, i)] += Complex64::new(sigma_s2, 0.0);
    }
    let mut a = &ch.h * (c * ch.h.adjoint());
    for i in 0..n {
        a[(i, i)] += Complex64::new(noise_var, 0.0);
    }
    // Assembly of H C H^H rounds asymmetrically; restore exact Hermitian
    // structure before any solver sees the matrix.
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    #[cfg(debug_assertions)]
    if noise_var > 0.0 {
        debug_check_pd(&a);
    }
    let b = selectors
        .iter()
        .map(|sel| {
            debug_assert_eq!(sel.p.len(), k);
            let mut acc = CVector::zeros(n);
            for (k_idx, &member) in sel.p.iter().enumerate() {
                if member {
                    acc += ch.h.column(k_idx);
                }
            }
            acc * Complex64::new(sigma_s2, 0.0)
        })
        .collect();
    CombinerSystem { a, b, omega: omega.clone() }
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Dense Hermitian solve `u_m = A^{-1} b_m` via Cholesky; no inverse is
/// materialized.
pub fn mmse_combiner_direct(sys: &CombinerSystem, stream: usize) -> Result<CVector, IccError> {
    let b = sys.b.get(stream).ok_or_else(|| {
        IccError::Config(format!("stream {stream} out of range, system has {}", sys.b.len()))
    })?;
    let chol = nalgebra::linalg::Cholesky::new(sys.a.clone()).ok_or_else(|| {
        IccError::Singular("combiner system is not positive definite".into())
    })?;
    Ok(chol.solve(b))
}

/// Woodbury form of the same solve, O(N K^2):
/// `u = (1/sigma_w^2) (b - H (sigma_w^2 C^{-1} + H^H H)^{-1} H^H b)`
/// with `C = sigma_s^2 I + Omega`.
pub fn mmse_combiner_woodbury(
    ch: &ChannelRealization,
    sigma_s2: f64,
    omega: &CMatrix,
    noise_var: f64,
    b: &CVector,
) -> Result<CVector, IccError> {
    let k = ch.h.ncols();
    if noise_var <= 0.0 {
        return Err(IccError::Singular(
            "Woodbury route needs strictly positive noise variance".into(),
        ));
    }
    let mut c = omega.clone();
    for i in 0..k {
        c[(i, i)] += Complex64::new(sigma_s2, 0.0);
    }
    let c_chol = nalgebra::linalg::Cholesky::new(c)
        .ok_or_else(|| IccError::Singular("C = sigma_s^2 I + Omega is singular".into()))?;
    let mut inner = c_chol.inverse() * Complex64::new(noise_var, 0.0);
    inner += ch.h.adjoint() * &ch.h;
    // inner = sigma_w^2 C^{-1} + H^H H is Hermitian positive definite.
    let inner_chol = nalgebra::linalg::Cholesky::new(inner)
        .ok_or_else(|| IccError::Singular("Woodbury inner system is singular".into()))?;
    let hh_b = ch.h.adjoint() * b;
    let correction = &ch.h * inner_chol.solve(&hh_b);
    Ok((b - correction) / Complex64::new(noise_var, 0.0))
}

/// Per-edge state of the combining GaBP solver.
#[derive(Debug, Clone)]
pub struct CombinerEdgeState {
    /// Soft replica of unknown n' held by observation n.
    pub u_hat: CMatrix,
    /// Replica variances.
    pub u_var: RMatrix,
    /// EM estimate of the common prior mean, refreshed every sweep.
    pub mu_u_hat: Complex64,
}

impl CombinerEdgeState {
    fn new(n: usize, prior: PriorGaussian) -> Self {
        CombinerEdgeState {
            u_hat: CMatrix::from_element(n, n, prior.mean),
            u_var: RMatrix::from_element(n, n, prior.var),
            mu_u_hat: prior.mean,
        }
    }
}

/// Inversion-free GaBP solve of `A u = b` for one stream.
///
/// Each observation row performs soft interference cancellation against the
/// replicas it holds, beliefs aggregate extrinsically down each column, and
/// a Gaussian prior with EM-learned mean denoises every edge. The variance
/// recursion carries the interference term only; the system is noiseless.
/// Divergence is declared when the residual grows five sweeps in a row.
pub fn gabp_linear_solve(
    sys: &CombinerSystem,
    stream: usize,
    prior: PriorGaussian,
    beta_u: f64,
    i_max: usize,
) -> Result<CVector, IccError> {
    let b = sys.b.get(stream).ok_or_else(|| {
        IccError::Config(format!("stream {stream} out of range, system has {}", sys.b.len()))
    })?;
    let n = sys.a.nrows();
    debug_assert!(beta_u > 0.0 && beta_u < 1.0);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(CVector::zeros(n));
    }

    let a = &sys.a;
    let a_abs2 = RMatrix::from_fn(n, n, |i, j| a[(i, j)].norm_sqr());
    let mut state = CombinerEdgeState::new(n, prior);
    let mut btilde = CMatrix::zeros(n, n);
    let mut vtilde = RMatrix::zeros(n, n);
    let mut col_w = vec![Complex64::ZERO; n];
    let mut col_p = vec![0.0f64; n];
    let mut consensus = CVector::zeros(n);

    let mut prev_residual = f64::INFINITY;
    let mut rising = 0usize;

    for sweep in 1..=i_max {
        // Soft interference cancellation per edge, via row aggregates.
        for row in 0..n {
            let mut mean_sum = Complex64::ZERO;
            let mut var_sum = 0.0;
            for q in 0..n {
                mean_sum += a[(row, q)] * state.u_hat[(row, q)];
                var_sum += a_abs2[(row, q)] * state.u_var[(row, q)];
            }
            for q in 0..n {
                btilde[(row, q)] = b[row] - (mean_sum - a[(row, q)] * state.u_hat[(row, q)]);
                vtilde[(row, q)] = (var_sum - a_abs2[(row, q)] * state.u_var[(row, q)]).max(0.0);
            }
        }

        // Column aggregates of the matched-filtered messages.
        for col in 0..n {
            let mut w = Complex64::ZERO;
            let mut p = 0.0;
            for q in 0..n {
                let vt = vtilde[(q, col)].max(VAR_FLOOR);
                w += a[(q, col)].conj() * btilde[(q, col)] / vt;
                p += a_abs2[(q, col)] / vt;
            }
            col_w[col] = w;
            col_p[col] = p;
        }

        // Extrinsic beliefs, denoise, damp.
        let em_prior = PriorGaussian { mean: state.mu_u_hat, var: prior.var };
        for col in 0..n {
            for row in 0..n {
                let vt = vtilde[(row, col)].max(VAR_FLOOR);
                let own_w = a[(row, col)].conj() * btilde[(row, col)] / vt;
                let own_p = a_abs2[(row, col)] / vt;
                let ext_p = col_p[col] - own_p;
                let belief = if ext_p > 0.0 {
                    BeliefScalar { mean: (col_w[col] - own_w) / ext_p, var: ext_p.recip() }
                } else {
                    BeliefScalar::uninformative()
                };
                let (mean_new, var_new) = gaussian_denoise(belief, em_prior)?;
                state.u_hat[(row, col)] = damp(mean_new, state.u_hat[(row, col)], beta_u);
                state.u_var[(row, col)] =
                    damp_var(var_new, state.u_var[(row, col)], beta_u).max(VAR_FLOOR);
            }
        }
        state.mu_u_hat = state.u_hat.iter().sum::<Complex64>() / (n * n) as f64;

        // Precision-weighted consensus over each column's full message set.
        for col in 0..n {
            consensus[col] = if col_p[col] > 0.0 {
                col_w[col] / col_p[col]
            } else {
                Complex64::ZERO
            };
        }

        let residual = (a * &consensus - b).norm();
        if !residual.is_finite() {
            return Err(IccError::CombinerDivergence {
                sweeps: sweep,
                residual,
                last_iterate: consensus,
            });
        }
        if residual <= 1e-13 * b_norm {
            break;
        }
        if residual > prev_residual {
            rising += 1;
            if rising >= 5 {
                return Err(IccError::CombinerDivergence {
                    sweeps: sweep,
                    residual,
                    last_iterate: consensus,
                });
            }
        } else {
            rising = 0;
        }
        prev_residual = residual;
    }
    Ok(consensus)
}

// ---------------------------------------------------------------------------
// Residual combining
// ---------------------------------------------------------------------------

/// Function estimate from the residual signal: `u^H (y - H d_hat)`, real
/// part extracted first when the computing signals are known real, then the
/// stream's postprocessing applied.
pub fn apply_combiner(
    u: &CVector,
    rx: &RxSignal,
    ch: &ChannelRealization,
    d_hat: &CVector,
    kind: NomographicKind,
    real_only: bool,
) -> Complex64 {
    debug_assert_eq!(u.len(), rx.y.len());
    debug_assert_eq!(d_hat.len(), ch.h.ncols());
    let residual = &rx.y - &ch.h * d_hat;
    let mut aggregate = u.dotc(&residual);
    if real_only {
        aggregate = Complex64::new(aggregate.re, 0.0);
    }
    postprocess(kind, aggregate)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
