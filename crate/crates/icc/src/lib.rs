//! Joint data detection and over-the-air computation for SIMO uplinks.
//!
//! # Overview
//!
//! An `N`-antenna receiver serves `K` single-antenna users. Each user
//! superimposes a QPSK data symbol and a low-power computing signal in the
//! same resource element; the receiver must both detect every data symbol
//! and estimate a nomographic function (sum, product) of the computing
//! signals directly from the superposition, without recovering the
//! individual computing values.
//!
//! Everything is built from Gaussian belief propagation (GaBP) on the dense
//! channel graph:
//!
//! - [`receiver_benchmark`]: joint GaBP that estimates every data symbol and
//!   every computing symbol individually, then combines a data-cancelled
//!   residual with a closed-form MMSE vector.
//! - [`receiver_icc`]: the single-stream and multi-stream receivers, which
//!   treat the computing signals as colored effective noise during
//!   detection and obtain the combining vector by running GaBP a second
//!   time as an inversion-free linear-system solver.
//! - [`combiner`]: normal-system assembly plus the three interchangeable
//!   solvers (direct Hermitian solve, inversion-lemma form, GaBP).
//! - [`harness`]: scenario-driven Monte Carlo campaigns with deterministic
//!   seeding and CSV output; the `icc` binary is a thin wrapper over it.
//!
//! # Example
//!
//! ```
//! use icc::model::{self, SystemConfig};
//! use icc::receiver_icc;
//! use icc::PipelineOptions;
//!
//! let mut cfg = SystemConfig::new(16, 8);
//! cfg.noise_var = 4.0;
//! cfg.i_max = 12;
//!
//! let mut ch_rng = model::trial_rng(cfg.base_seed, 0, model::Substream::Channel);
//! let mut fr_rng = model::trial_rng(cfg.base_seed, 0, model::Substream::Frame);
//! let mut nz_rng = model::trial_rng(cfg.base_seed, 0, model::Substream::Noise);
//!
//! let ch = model::generate_channel(&cfg, &mut ch_rng);
//! let frame = model::generate_frame(&cfg, &mut fr_rng);
//! let y = model::synthesize_rx(&ch, &frame, cfg.noise_var, &mut nz_rng).unwrap();
//!
//! let out = receiver_icc::run_single_stream(&y, &ch, &cfg, &PipelineOptions::default()).unwrap();
//! assert_eq!(out.d_hat.len(), 8);
//! assert_eq!(out.f_hat.len(), 1);
//! ```

pub mod combiner;
pub mod denoisers;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nomographic;
pub mod receiver_benchmark;
pub mod receiver_icc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use combiner::{OmegaMode, SolverMode};
pub use model::SystemConfig;

/// Dense complex matrix used for channels, per-edge replica fields, and
/// normal systems.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex vector.
pub type CVector = DVector<Complex64>;
/// Dense real matrix (per-edge variances, standard deviations).
pub type RMatrix = DMatrix<f64>;
/// Dense real vector.
pub type RVector = DVector<f64>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Unified error type for configuration, numerical, and I/O failures.
#[derive(Debug, thiserror::Error)]
pub enum IccError {
    /// Invalid configuration or dimension mismatch.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A message-passing sweep produced non-finite values.
    #[error("numerical divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    /// The combining-stage GaBP solver diverged; the last consensus iterate
    /// is attached so callers can fall back or inspect it.
    #[error("combining solver diverged after {sweeps} sweeps (relative residual {residual:.3e})")]
    CombinerDivergence {
        sweeps: usize,
        residual: f64,
        last_iterate: CVector,
    },

    /// A linear system that must be positive definite was not.
    #[error("singular system: {0}")]
    Singular(String),

    /// Scenario file could not be parsed or failed validation.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Filesystem failure; the offending path is included.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// Pipeline options
// ---------------------------------------------------------------------------

/// Receiver-side switches shared by the benchmark and single/multi-stream
/// pipelines. Everything here has a safe default; the scenario file exposes
/// the subset that the campaign runner sweeps.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    /// How the combining vector is obtained.
    pub solver: SolverMode,
    /// Error-covariance construction for the normal system.
    pub omega: OmegaMode,
    /// Pin the data replicas of users that transmit both streams, not just
    /// compute-only users. Reproduces the literal mixed-access rule for
    /// ablation; degrades those users' data on purpose.
    pub pin_kds: bool,
    /// Use the precision-weighted data consensus instead of the plain
    /// per-antenna average in the single/multi-stream data stage.
    pub precision_weighted_consensus: bool,
    /// Keep only the real part of each function estimate (valid when the
    /// computing signals are real).
    pub real_only: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            solver: SolverMode::Gabp,
            omega: OmegaMode::AsPrinted,
            pin_kds: false,
            precision_weighted_consensus: false,
            real_only: false,
        }
    }
}
