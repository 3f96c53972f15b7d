//! Scenario-driven Monte Carlo campaigns: TOML scenario files, deterministic
//! per-trial seeding, ordered metric reduction, and CSV emission.
//!
//! This is the only module that touches the filesystem. A [`Scenario`] pairs
//! one system description with one campaign grid. [`run_campaign`] walks the
//! SNR grid, runs `trials` seeded trials per point in a work pool, folds the
//! per-trial records in trial-index order so aggregates do not depend on the
//! worker count, and returns one [`ResultRow`] per grid point, ordered by
//! `(snr_db, algorithm)`. [`write_csv`] serializes rows in a fixed column
//! layout; `elapsed_ms` is wall-clock time and is the only column that can
//! differ between identical reruns.
//!
//! Trial `t` at every SNR point reuses the channel, frame, and unit-scale
//! noise draws of trial `t` at every other point (the noise is scaled by the
//! per-point standard deviation afterwards), so grid points are coupled by
//! common random numbers and sweep curves are smooth at moderate trial
//! counts.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::combiner::{OmegaMode, SolverMode};
use crate::metrics::{self, MetricsAccumulator, TrialMetrics};
use crate::model::{self, AlgorithmKind, Modulation, Substream, SystemConfig, UserRole};
use crate::nomographic::{evaluate_target, make_selectors, NomographicKind, StreamSelector};
use crate::receiver_benchmark::run_benchmark_with;
use crate::receiver_icc::{run_mf_bound, run_multi_stream, run_single_stream, ConvergenceFlags};
use crate::{IccError, PipelineOptions};

// ---------------------------------------------------------------------------
// Scenario schema
// ---------------------------------------------------------------------------

fn default_streams() -> usize {
    1
}
fn default_power() -> f64 {
    1.0
}
fn default_imax() -> usize {
    30
}
fn default_beta_d() -> f64 {
    0.5
}
fn default_beta_s() -> f64 {
    0.8
}
fn default_beta_u() -> f64 {
    0.3
}
fn default_sigma_u2() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    0x1cc
}
fn default_modulation() -> Modulation {
    Modulation::Qpsk
}
fn default_algorithm() -> AlgorithmKind {
    AlgorithmKind::SingleStream
}
fn default_solver() -> SolverMode {
    SolverMode::Gabp
}
fn default_omega() -> OmegaMode {
    OmegaMode::AsPrinted
}

/// System half of a scenario file (`[system]` section). Every field of
/// [`SystemConfig`] except the noise variance, which the campaign derives
/// from each SNR grid point. User roles are given as counts; the first
/// `k_data_only` users transmit data only, the next `k_compute_only` only a
/// computing signal, and the remainder transmit both. Computing users are
/// split into `n_streams` contiguous, near-even stream blocks.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_antennas: usize,
    pub n_users: usize,
    #[serde(default = "default_streams")]
    pub n_streams: usize,
    #[serde(default = "default_power")]
    pub data_power: f64,
    #[serde(default = "default_imax")]
    pub i_max: usize,
    #[serde(default = "default_beta_d")]
    pub beta_d: f64,
    #[serde(default = "default_beta_s")]
    pub beta_s: f64,
    #[serde(default = "default_beta_u")]
    pub beta_u: f64,
    #[serde(default = "default_sigma_u2")]
    pub sigma_u2: f64,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_modulation")]
    pub modulation: Modulation,
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmKind,
    #[serde(default)]
    pub k_data_only: usize,
    #[serde(default)]
    pub k_compute_only: usize,
}

/// Campaign half of a scenario file (`[campaign]` section).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    /// Computing-SNR grid in dB; each entry becomes one CSV row.
    pub snr_grid_db: Vec<f64>,
    /// Monte Carlo trials per grid point.
    pub trials: usize,
    #[serde(default = "default_solver")]
    pub solver_mode: SolverMode,
    #[serde(default = "default_omega")]
    pub omega_mode: OmegaMode,
    /// Pin dual-role users' data replicas (ablation switch).
    #[serde(default)]
    pub pin_kds: bool,
    /// Default CSV destination; the command line can override it.
    pub output_path: String,
}

/// One parsed scenario file. Unknown keys in either section are parse
/// errors, not warnings, so misspelled fields cannot silently fall back to
/// defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    pub campaign: CampaignSection,
}

impl Scenario {
    /// Parse a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, IccError> {
        toml::from_str(text).map_err(|e| IccError::Scenario(e.to_string()))
    }

    /// Read and parse a scenario file.
    pub fn load(path: &Path) -> Result<Self, IccError> {
        let text = std::fs::read_to_string(path).map_err(|source| IccError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Reject impossible campaigns before any work is done.
    pub fn validate(&self) -> Result<(), IccError> {
        if self.campaign.snr_grid_db.is_empty() {
            return Err(IccError::Scenario("snr_grid_db must be nonempty".into()));
        }
        if self.campaign.snr_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(IccError::Scenario("snr_grid_db entries must be finite".into()));
        }
        if self.campaign.trials == 0 {
            return Err(IccError::Scenario("trials must be at least 1".into()));
        }
        if self.system.algorithm == AlgorithmKind::SingleStream && self.system.n_streams != 1 {
            return Err(IccError::Scenario(
                "the single-stream receiver requires n_streams = 1".into(),
            ));
        }
        // The reference config catches dimension and parameter violations.
        self.system_config(1.0).map(|_| ())
    }

    /// Materialize the [`SystemConfig`] for one noise variance, expanding
    /// role counts into per-user roles and contiguous stream blocks.
    pub fn system_config(&self, noise_var: f64) -> Result<SystemConfig, IccError> {
        let s = &self.system;
        if s.k_data_only + s.k_compute_only > s.n_users {
            return Err(IccError::Scenario(format!(
                "role counts {} + {} exceed n_users {}",
                s.k_data_only, s.k_compute_only, s.n_users
            )));
        }
        let mut roles = vec![UserRole::Both; s.n_users];
        roles[..s.k_data_only].fill(UserRole::DataOnly);
        roles[s.k_data_only..s.k_data_only + s.k_compute_only].fill(UserRole::ComputeOnly);

        let mut assignment = vec![None; s.n_users];
        let computing: Vec<usize> = (s.k_data_only..s.n_users).collect();
        if s.n_streams > 0 && !computing.is_empty() {
            let base = computing.len() / s.n_streams;
            let rem = computing.len() % s.n_streams;
            let mut next = 0usize;
            for stream in 1..=s.n_streams {
                let block = base + usize::from(stream <= rem);
                for _ in 0..block {
                    assignment[computing[next]] = Some(stream);
                    next += 1;
                }
            }
        }

        let mut cfg = SystemConfig::new(s.n_antennas.max(1), s.n_users.max(1));
        cfg.n_antennas = s.n_antennas;
        cfg.n_users = s.n_users;
        cfg.n_streams = s.n_streams;
        cfg.data_power = s.data_power;
        cfg.noise_var = noise_var;
        cfg.i_max = s.i_max;
        cfg.beta_d = s.beta_d;
        cfg.beta_s = s.beta_s;
        cfg.beta_u = s.beta_u;
        cfg.sigma_u2 = s.sigma_u2;
        cfg.base_seed = s.base_seed;
        cfg.modulation = s.modulation;
        cfg.algorithm = s.algorithm;
        cfg.roles = roles;
        cfg.stream_assignment = assignment;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply the `ICC_SEED` environment override to the base seed; returns
    /// the override when one was set.
    pub fn apply_seed_override(&mut self) -> Result<Option<u64>, IccError> {
        match std::env::var("ICC_SEED") {
            Ok(text) => {
                let seed = text.trim().parse::<u64>().map_err(|_| {
                    IccError::Scenario(format!("ICC_SEED must be a u64, got {text:?}"))
                })?;
                self.system.base_seed = seed;
                Ok(Some(seed))
            }
            Err(_) => Ok(None),
        }
    }
}

// ---------------------------------------------------------------------------
// Campaign runner
// ---------------------------------------------------------------------------

/// One CSV row: the aggregate of all trials at a single grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub solver_mode: String,
    /// Column `N`.
    pub n_antennas: usize,
    /// Column `K`.
    pub n_users: usize,
    /// Column `M`.
    pub n_streams: usize,
    pub snr_db: f64,
    pub trials: usize,
    /// Pooled BER; `None` (serialized `nan`) when no data bits exist.
    pub ber: Option<f64>,
    /// Half-width of the Wilson 95% interval around `ber`.
    pub ber_ci95: Option<f64>,
    /// Mean per-trial NMSE; `None` when every trial diverged.
    pub nmse: Option<f64>,
    /// `10 log10(nmse)`; `-inf` when `nmse` is exactly zero.
    pub nmse_db: Option<f64>,
    pub diverged_fraction: f64,
    /// Wall-clock milliseconds for the grid point; not deterministic.
    pub elapsed_ms: f64,
}

fn trial_outcome(
    cfg: &SystemConfig,
    selectors: &[StreamSelector],
    opts: &PipelineOptions,
    trial: u64,
) -> Result<TrialMetrics, IccError> {
    let ch = model::generate_channel(
        cfg,
        &mut model::trial_rng(cfg.base_seed, trial, Substream::Channel),
    );
    let frame = model::generate_frame(
        cfg,
        &mut model::trial_rng(cfg.base_seed, trial, Substream::Frame),
    );
    let rx = model::synthesize_rx(
        &ch,
        &frame,
        cfg.noise_var,
        &mut model::trial_rng(cfg.base_seed, trial, Substream::Noise),
    )?;

    let (d_hat, f_hat, converged) = match cfg.algorithm {
        AlgorithmKind::Benchmark => {
            let out = run_benchmark_with(&rx, &ch, cfg, opts, None)?;
            let flags = ConvergenceFlags {
                detection: true,
                combining: !out.combiner_fallback,
            };
            (out.d_hat, out.f_hat, flags)
        }
        AlgorithmKind::SingleStream => {
            let out = run_single_stream(&rx, &ch, cfg, opts)?;
            (out.d_hat, out.f_hat, out.converged)
        }
        AlgorithmKind::MultiStream => {
            let out = run_multi_stream(&rx, &ch, cfg, selectors, opts)?;
            (out.d_hat, out.f_hat, out.converged)
        }
        AlgorithmKind::MfBound => {
            let out = run_mf_bound(&rx, &ch, cfg, &frame, opts)?;
            (out.d_hat, out.f_hat, out.converged)
        }
    };

    // Bits are counted only for users whose data the receiver estimates:
    // compute-only users transmit none, and the pin_kds ablation discards
    // dual-role users' data on purpose.
    let mut bit_errors = 0usize;
    let mut bits_total = 0usize;
    for k in 0..cfg.n_users {
        let skipped = cfg.roles[k] == UserRole::ComputeOnly
            || (opts.pin_kds
                && cfg.algorithm != AlgorithmKind::Benchmark
                && cfg.roles[k] == UserRole::Both);
        if skipped {
            continue;
        }
        let decided = metrics::hard_decision(d_hat[k]);
        bit_errors += usize::from(decided[0] != frame.bits[k][0])
            + usize::from(decided[1] != frame.bits[k][1]);
        bits_total += 2;
    }

    let mut nmse_num = 0.0;
    for (m, sel) in selectors.iter().enumerate() {
        let (target, _) = evaluate_target(NomographicKind::Sum, &frame.s, sel)?;
        nmse_num += (target - f_hat[m]).norm_sqr();
    }

    Ok(TrialMetrics::new(
        bit_errors,
        bits_total,
        nmse_num,
        selectors.len(),
        converged,
    ))
}

/// Run every grid point of a validated scenario. Per-trial numerical
/// divergence is counted into `diverged_fraction`; configuration errors
/// abort the campaign. Rows come back ordered by `(snr_db, algorithm)`.
pub fn run_campaign(scenario: &Scenario) -> Result<Vec<ResultRow>, IccError> {
    scenario.validate()?;
    let camp = &scenario.campaign;
    let reference = scenario.system_config(1.0)?;
    let opts = PipelineOptions {
        solver: camp.solver_mode,
        omega: camp.omega_mode,
        pin_kds: camp.pin_kds,
        precision_weighted_consensus: false,
        real_only: false,
    };

    let mut rows = Vec::with_capacity(camp.snr_grid_db.len());
    for &snr_db in &camp.snr_grid_db {
        let noise_var = metrics::snr_to_noise_var(snr_db, &reference);
        let cfg = scenario.system_config(noise_var)?;
        let selectors = make_selectors(&cfg.roles, &cfg.stream_assignment, cfg.n_streams)?;

        let started = Instant::now();
        let outcomes: Vec<Result<TrialMetrics, IccError>> = (0..camp.trials as u64)
            .into_par_iter()
            .map(|t| trial_outcome(&cfg, &selectors, &opts, t))
            .collect();
        let mut acc = MetricsAccumulator::new(cfg.n_users);
        for outcome in outcomes {
            match outcome {
                Ok(m) => acc.push(&m),
                Err(IccError::Divergence { .. }) | Err(IccError::CombinerDivergence { .. }) => {
                    acc.push_diverged()
                }
                Err(e) => return Err(e),
            }
        }
        let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

        let nmse = acc.nmse();
        rows.push(ResultRow {
            algorithm: cfg.algorithm.name().to_string(),
            solver_mode: camp.solver_mode.name().to_string(),
            n_antennas: cfg.n_antennas,
            n_users: cfg.n_users,
            n_streams: cfg.n_streams,
            snr_db,
            trials: acc.trials(),
            ber: acc.ber(),
            ber_ci95: acc.ber_ci95_half(),
            nmse,
            nmse_db: nmse.map(|v| 10.0 * v.log10()),
            diverged_fraction: acc.diverged_fraction(),
            elapsed_ms,
        });
    }
    rows.sort_by(|a, b| {
        a.snr_db
            .partial_cmp(&b.snr_db)
            .expect("grid entries validated finite")
            .then_with(|| a.algorithm.cmp(&b.algorithm))
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Exact header line of every campaign CSV.
pub const CSV_HEADER: &str =
    "algorithm,solver_mode,N,K,M,snr_db,trials,ber,ber_ci95,nmse,nmse_db,diverged_fraction,elapsed_ms";

fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt_float)
}

/// Serialize rows in campaign order with 9-significant-digit floats.
/// `nan` marks an undefined metric and `-inf` a zero-NMSE decibel value.
pub fn csv_string(rows: &[ResultRow]) -> Result<String, IccError> {
    if rows.is_empty() {
        return Err(IccError::Config("refusing to write an empty CSV".into()));
    }
    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.algorithm,
            r.solver_mode,
            r.n_antennas,
            r.n_users,
            r.n_streams,
            fmt_float(r.snr_db),
            r.trials,
            fmt_opt(r.ber),
            fmt_opt(r.ber_ci95),
            fmt_opt(r.nmse),
            fmt_opt(r.nmse_db),
            fmt_float(r.diverged_fraction),
            fmt_float(r.elapsed_ms),
        )
        .expect("writing to a string cannot fail");
    }
    Ok(out)
}

/// Write rows to `path`; I/O failures carry the path in the error.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), IccError> {
    let text = csv_string(rows)?;
    std::fs::write(path, text).map_err(|source| IccError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str) -> Result<T, IccError> {
    field
        .parse::<T>()
        .map_err(|_| IccError::Scenario(format!("unparsable {name} field {field:?}")))
}

fn parse_opt(field: &str, name: &str) -> Result<Option<f64>, IccError> {
    if field == "nan" {
        Ok(None)
    } else {
        parse_field::<f64>(field, name).map(Some)
    }
}

/// Parse CSV text produced by [`csv_string`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, IccError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IccError::Scenario("empty CSV".into()))?;
    if header != CSV_HEADER {
        return Err(IccError::Scenario(format!("unexpected CSV header {header:?}")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(IccError::Scenario(format!(
                    "expected 13 fields, found {} in {line:?}",
                    f.len()
                )));
            }
            Ok(ResultRow {
                algorithm: f[0].to_string(),
                solver_mode: f[1].to_string(),
                n_antennas: parse_field(f[2], "N")?,
                n_users: parse_field(f[3], "K")?,
                n_streams: parse_field(f[4], "M")?,
                snr_db: parse_field(f[5], "snr_db")?,
                trials: parse_field(f[6], "trials")?,
                ber: parse_opt(f[7], "ber")?,
                ber_ci95: parse_opt(f[8], "ber_ci95")?,
                nmse: parse_opt(f[9], "nmse")?,
                nmse_db: parse_opt(f[10], "nmse_db")?,
                diverged_fraction: parse_field(f[11], "diverged_fraction")?,
                elapsed_ms: parse_field(f[12], "elapsed_ms")?,
            })
        })
        .collect()
}

/// Read and parse a campaign CSV.
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, IccError> {
    let text = std::fs::read_to_string(path).map_err(|source| IccError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// A named bundle of ready-to-run scenarios.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub scenarios: Vec<Scenario>,
}

/// Names accepted by [`preset`], in listing order.
pub const PRESET_NAMES: [&str; 5] = ["fig2a", "fig2b", "fig4", "fig5", "fig7"];

fn base_scenario(
    n_antennas: usize,
    n_users: usize,
    algorithm: AlgorithmKind,
    snr_grid_db: Vec<f64>,
    trials: usize,
    output_path: &str,
) -> Scenario {
    Scenario {
        system: SystemSection {
            n_antennas,
            n_users,
            n_streams: 1,
            data_power: 1.0,
            i_max: 30,
            beta_d: 0.5,
            beta_s: 0.8,
            beta_u: 0.3,
            sigma_u2: 1.0,
            base_seed: 0x1cc,
            modulation: Modulation::Qpsk,
            algorithm,
            k_data_only: 0,
            k_compute_only: 0,
        },
        campaign: CampaignSection {
            snr_grid_db,
            trials,
            solver_mode: SolverMode::Gabp,
            omega_mode: OmegaMode::AsPrinted,
            pin_kds: false,
            output_path: output_path.to_string(),
        },
    }
}

fn wide_grid() -> Vec<f64> {
    vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
}

/// Look up a built-in scenario bundle by name.
pub fn preset(name: &str) -> Option<Preset> {
    match name {
        "fig2a" => Some(Preset {
            name: "fig2a",
            summary: "benchmark receiver BER/NMSE sweep at N=100 for K=75/100/125",
            scenarios: [75, 100, 125]
                .iter()
                .map(|&k| {
                    base_scenario(100, k, AlgorithmKind::Benchmark, wide_grid(), 1000, "fig2a.csv")
                })
                .collect(),
        }),
        "fig2b" => Some(Preset {
            name: "fig2b",
            summary: "benchmark receiver BER/NMSE sweep at N=200 for K=150/200",
            scenarios: [150, 200]
                .iter()
                .map(|&k| {
                    base_scenario(200, k, AlgorithmKind::Benchmark, wide_grid(), 500, "fig2b.csv")
                })
                .collect(),
        }),
        "fig4" => Some(Preset {
            name: "fig4",
            summary: "benchmark vs single-stream receiver at N=64, K=32 on shared seeds",
            scenarios: vec![
                base_scenario(64, 32, AlgorithmKind::Benchmark, wide_grid(), 1000, "fig4.csv"),
                base_scenario(64, 32, AlgorithmKind::SingleStream, wide_grid(), 1000, "fig4.csv"),
            ],
        }),
        "fig5" => Some(Preset {
            name: "fig5",
            summary: "single-stream loading sweep K=20..120 at N=100, 10 dB",
            scenarios: (20..=120)
                .step_by(20)
                .map(|k| {
                    base_scenario(
                        100,
                        k,
                        AlgorithmKind::SingleStream,
                        vec![10.0],
                        1000,
                        "fig5.csv",
                    )
                })
                .collect(),
        }),
        "fig7" => Some(Preset {
            name: "fig7",
            summary: "mixed-access splits (data-only, compute-only, dual) at N=100",
            scenarios: [(25usize, 25usize, 25usize), (30, 30, 40), (40, 40, 45)]
                .iter()
                .map(|&(k_d, k_s, k_ds)| {
                    let mut sc = base_scenario(
                        100,
                        k_d + k_s + k_ds,
                        AlgorithmKind::SingleStream,
                        vec![-10.0, 0.0, 10.0, 20.0],
                        1000,
                        "fig7.csv",
                    );
                    sc.system.k_data_only = k_d;
                    sc.system.k_compute_only = k_s;
                    sc
                })
                .collect(),
        }),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
