//! Uplink signal model: system configuration, Rayleigh channels, transmit
//! frames, and received-signal synthesis.
//!
//! The model is `y = H (d + s) + w`: `K` single-antenna users superimpose a
//! QPSK data symbol `d_k` and a low-power computing signal `s_k` on the same
//! resource element, observed at `N` antennas through an iid block-Rayleigh
//! channel `H` with circular complex noise `w`.
//!
//! All randomness flows through caller-provided streams so trials are
//! reproducible independent of execution order; see [`trial_rng`].

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{CMatrix, CVector, IccError, RVector};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Modulation of the data stream. QPSK is the only constellation wired into
/// the denoisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    Qpsk,
}

/// Receiver pipeline selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    /// Joint per-symbol estimation of data and computing streams.
    Benchmark,
    /// Data-only GaBP with the computing stream as effective noise; one
    /// function estimate.
    SingleStream,
    /// Same detection stage, one combining solve per stream selector.
    MultiStream,
    /// Genie-initialized single-stream pipeline (matched-filter bound).
    MfBound,
}

impl AlgorithmKind {
    /// Stable lowercase name used in CSV rows and scenario files.
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Benchmark => "benchmark",
            AlgorithmKind::SingleStream => "single_stream",
            AlgorithmKind::MultiStream => "multi_stream",
            AlgorithmKind::MfBound => "mf_bound",
        }
    }
}

/// What each user transmits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserRole {
    DataOnly,
    ComputeOnly,
    Both,
}

/// Full system description shared by every stage of a trial.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Receive antennas N.
    pub n_antennas: usize,
    /// Users K.
    pub n_users: usize,
    /// Function streams M (multi-stream receiver only).
    pub n_streams: usize,
    /// Per-symbol average data power E_D.
    pub data_power: f64,
    /// Noise variance sigma_w^2 at each antenna.
    pub noise_var: f64,
    /// GaBP iterations per stage.
    pub i_max: usize,
    /// Damping for data replicas.
    pub beta_d: f64,
    /// Damping for computing replicas (benchmark receiver).
    pub beta_s: f64,
    /// Damping for combining-weight replicas.
    pub beta_u: f64,
    /// Prior variance of the combining weights (approximately 1 for a
    /// norm-constrained combiner; exposed because it is an approximation).
    pub sigma_u2: f64,
    /// Campaign-level seed; per-trial streams derive from it.
    pub base_seed: u64,
    pub modulation: Modulation,
    pub algorithm: AlgorithmKind,
    /// Per-user transmit roles; length K.
    pub roles: Vec<UserRole>,
    /// 1-based stream index per user; `None` for data-only users.
    pub stream_assignment: Vec<Option<usize>>,
}

impl SystemConfig {
    /// Single-stream defaults: every user transmits both streams, unit data
    /// power, damping 0.5/0.8/0.3, 30 iterations.
    pub fn new(n_antennas: usize, n_users: usize) -> Self {
        SystemConfig {
            n_antennas,
            n_users,
            n_streams: 1,
            data_power: 1.0,
            noise_var: 1.0,
            i_max: 30,
            beta_d: 0.5,
            beta_s: 0.8,
            beta_u: 0.3,
            sigma_u2: 1.0,
            base_seed: 0x1cc,
            modulation: Modulation::Qpsk,
            algorithm: AlgorithmKind::SingleStream,
            roles: vec![UserRole::Both; n_users],
            stream_assignment: vec![Some(1); n_users],
        }
    }

    /// Validate dimensions, damping ranges, and role/stream consistency.
    pub fn validate(&self) -> Result<(), IccError> {
        let fail = |msg: String| Err(IccError::Config(msg));
        if self.n_antennas == 0 || self.n_users == 0 || self.n_streams == 0 {
            return fail(format!(
                "N, K, M must all be at least 1 (got N={}, K={}, M={})",
                self.n_antennas, self.n_users, self.n_streams
            ));
        }
        if !(self.data_power > 0.0) {
            return fail(format!("data_power must be positive (got {})", self.data_power));
        }
        if !(self.noise_var >= 0.0) {
            return fail(format!("noise_var must be nonnegative (got {})", self.noise_var));
        }
        if self.i_max == 0 {
            return fail("i_max must be at least 1".into());
        }
        for (name, beta) in [
            ("beta_d", self.beta_d),
            ("beta_s", self.beta_s),
            ("beta_u", self.beta_u),
        ] {
            if !(beta > 0.0 && beta < 1.0) {
                return fail(format!("{name} must lie strictly inside (0,1), got {beta}"));
            }
        }
        if !(self.sigma_u2 > 0.0) {
            return fail(format!("sigma_u2 must be positive (got {})", self.sigma_u2));
        }
        if self.roles.len() != self.n_users || self.stream_assignment.len() != self.n_users {
            return fail(format!(
                "roles and stream_assignment must have length K={}",
                self.n_users
            ));
        }
        for (k, (role, assignment)) in self.roles.iter().zip(&self.stream_assignment).enumerate() {
            match (role, assignment) {
                (UserRole::DataOnly, Some(_)) => {
                    return fail(format!("data-only user {k} must not carry a stream index"));
                }
                (UserRole::DataOnly, None) => {}
                (_, None) => {
                    return fail(format!("computing user {k} needs a stream index"));
                }
                (_, Some(m)) => {
                    if *m == 0 || *m > self.n_streams {
                        return fail(format!(
                            "user {k} assigned to stream {m}, valid range is 1..={}",
                            self.n_streams
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-user computing power E_S, or 0 when no user computes.
    pub fn sigma_s2(&self) -> f64 {
        if self.roles.iter().any(|r| *r != UserRole::DataOnly) {
            power_allocation(self.data_power, self.n_users)
        } else {
            0.0
        }
    }

    /// Magnitude of each QPSK component, `sqrt(E_D / 2)`.
    pub fn c_d(&self) -> f64 {
        (self.data_power / 2.0).sqrt()
    }

    /// Indices of users that transmit data.
    pub fn data_users(&self) -> Vec<usize> {
        (0..self.n_users)
            .filter(|&k| self.roles[k] != UserRole::ComputeOnly)
            .collect()
    }

    /// Indices of users that transmit a computing signal.
    pub fn computing_users(&self) -> Vec<usize> {
        (0..self.n_users)
            .filter(|&k| self.roles[k] != UserRole::DataOnly)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// Independent random substreams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Channel = 1,
    /// Data bits and computing signals of the transmit frame.
    Frame = 2,
    Noise = 3,
}

/// Splitmix64-style finalizer; decorrelates nearby (trial, substream) pairs.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one (trial, substream) pair. Stable across platforms, thread
/// counts, and execution order.
pub fn derive_seed(base_seed: u64, trial_index: u64, substream: Substream) -> u64 {
    let tagged = base_seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(trial_index.wrapping_add(1)))
        .wrapping_add(0xd1b5_4a32_d192_ed03u64.wrapping_mul(substream as u64));
    mix64(tagged)
}

/// ChaCha stream for one (trial, substream) pair.
pub fn trial_rng(base_seed: u64, trial_index: u64, substream: Substream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, trial_index, substream))
}

/// One draw from CN(0, 1): real and imaginary parts each N(0, 1/2).
#[inline]
pub fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    const ROOT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(
        ROOT_HALF * rng.sample::<f64, _>(StandardNormal),
        ROOT_HALF * rng.sample::<f64, _>(StandardNormal),
    )
}

// ---------------------------------------------------------------------------
// Realizations
// ---------------------------------------------------------------------------

/// One block-fading channel draw plus its per-antenna squared row norms
/// `xi_n = sum_k |h_nk|^2`, used by the effective-noise approximation.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub xi: RVector,
}

impl ChannelRealization {
    /// Wrap an explicit channel matrix, recomputing `xi`.
    pub fn from_matrix(h: CMatrix) -> Self {
        let xi = RVector::from_iterator(h.nrows(), h.row_iter().map(|r| r.norm_squared()));
        ChannelRealization { h, xi }
    }
}

/// One frame of transmit signals.
#[derive(Debug, Clone)]
pub struct TransmitFrame {
    /// Gray bits per user; all-zero placeholder rows for compute-only users.
    pub bits: Vec<[u8; 2]>,
    /// QPSK symbols, zero for compute-only users.
    pub d: CVector,
    /// Computing signals, zero for data-only users.
    pub s: CVector,
    /// Per-user computing power E_S.
    pub e_s: f64,
}

/// Received vector at the N antennas.
#[derive(Debug, Clone)]
pub struct RxSignal {
    pub y: CVector,
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Computing-signal power per user: the data budget split evenly, E_D / K.
pub fn power_allocation(data_power: f64, n_users: usize) -> f64 {
    debug_assert!(data_power > 0.0 && n_users >= 1);
    data_power / n_users as f64
}

/// Gray map for one user's bit pair. Bit 1 selects the sign of the real
/// part, bit 2 the sign of the imaginary part; (0,0) lands on +c_d(1+j).
pub fn qpsk_map(bits: [u8; 2], data_power: f64) -> Complex64 {
    let c_d = (data_power / 2.0).sqrt();
    Complex64::new(
        if bits[0] == 0 { c_d } else { -c_d },
        if bits[1] == 0 { c_d } else { -c_d },
    )
}

/// Draw an iid CN(0,1) channel and its row-norm vector.
pub fn generate_channel(cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelRealization {
    let h = CMatrix::from_fn(cfg.n_antennas, cfg.n_users, |_, _| standard_complex(rng));
    ChannelRealization::from_matrix(h)
}

/// Draw one transmit frame: uniform Gray bits mapped to QPSK for data users,
/// CN(0, E_S) computing signals for computing users.
pub fn generate_frame(cfg: &SystemConfig, rng: &mut impl Rng) -> TransmitFrame {
    let k_users = cfg.n_users;
    let e_s = power_allocation(cfg.data_power, k_users);
    let mut bits = vec![[0u8; 2]; k_users];
    let mut d = CVector::zeros(k_users);
    for k in 0..k_users {
        if cfg.roles[k] != UserRole::ComputeOnly {
            bits[k] = [rng.random::<bool>() as u8, rng.random::<bool>() as u8];
            d[k] = qpsk_map(bits[k], cfg.data_power);
        }
    }
    let mut s = CVector::zeros(k_users);
    let scale = e_s.sqrt();
    for k in 0..k_users {
        if cfg.roles[k] != UserRole::DataOnly {
            s[k] = scale * standard_complex(rng);
        }
    }
    TransmitFrame { bits, d, s, e_s }
}

/// Form `y = H (d + s) + w` with `w ~ CN(0, noise_var I)`.
///
/// The unit noise draw happens before scaling, so sweeping `noise_var` with
/// a fixed noise stream reuses the same underlying randomness (common random
/// numbers across SNR points).
pub fn synthesize_rx(
    ch: &ChannelRealization,
    frame: &TransmitFrame,
    noise_var: f64,
    rng: &mut impl Rng,
) -> Result<RxSignal, IccError> {
    let (n, k) = ch.h.shape();
    if frame.d.len() != k || frame.s.len() != k {
        return Err(IccError::Config(format!(
            "frame has {} users but channel has {k} columns",
            frame.d.len()
        )));
    }
    let x = &frame.d + &frame.s;
    let mut y = &ch.h * x;
    let sigma = noise_var.sqrt();
    for n_idx in 0..n {
        y[n_idx] += sigma * standard_complex(rng);
    }
    Ok(RxSignal { y })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SystemConfig {
        SystemConfig::new(4, 8)
    }

    // 1. Power allocation anchor values.
    #[test]
    fn power_allocation_values() {
        assert_eq!(power_allocation(1.0, 100), 0.01);
        assert_eq!(power_allocation(1.0, 1), 1.0);
        assert_eq!(power_allocation(4.0, 8), 0.5);
    }

    // 2. Gray map table: bit 1 flips the real sign, bit 2 the imaginary.
    #[test]
    fn gray_map_table() {
        let c_d = (0.5f64).sqrt();
        assert_eq!(qpsk_map([0, 0], 1.0), Complex64::new(c_d, c_d));
        assert_eq!(qpsk_map([0, 1], 1.0), Complex64::new(c_d, -c_d));
        assert_eq!(qpsk_map([1, 0], 1.0), Complex64::new(-c_d, c_d));
        assert_eq!(qpsk_map([1, 1], 1.0), Complex64::new(-c_d, -c_d));
    }

    // 3. Channel moments: unit power and zero mean per entry.
    #[test]
    fn channel_moments() {
        let mut cfg = small_cfg();
        cfg.n_antennas = 100;
        cfg.n_users = 100;
        cfg.roles = vec![UserRole::Both; 100];
        cfg.stream_assignment = vec![Some(1); 100];
        let mut rng = trial_rng(1, 0, Substream::Channel);
        let mut power = 0.0;
        let mut mean = Complex64::ZERO;
        let mut count = 0usize;
        for _ in 0..100 {
            let ch = generate_channel(&cfg, &mut rng);
            power += ch.h.iter().map(|h| h.norm_sqr()).sum::<f64>();
            mean += ch.h.iter().sum::<Complex64>();
            count += ch.h.len();
        }
        power /= count as f64;
        mean /= count as f64;
        assert!((power - 1.0).abs() < 0.01, "per-entry power {power}");
        assert!(mean.re.abs() < 0.01 && mean.im.abs() < 0.01, "mean {mean}");
    }

    // 4. xi equals the squared row norms.
    #[test]
    fn xi_matches_row_norms() {
        let cfg = small_cfg();
        let mut rng = trial_rng(2, 0, Substream::Channel);
        let ch = generate_channel(&cfg, &mut rng);
        for n in 0..cfg.n_antennas {
            let row_norm: f64 = (0..cfg.n_users).map(|k| ch.h[(n, k)].norm_sqr()).sum();
            assert!((ch.xi[n] - row_norm).abs() <= 1e-12 * row_norm.max(1.0));
        }
    }

    // 5. Frame structure: QPSK magnitudes, role zeroing, computing power.
    #[test]
    fn frame_structure_and_moments() {
        let mut cfg = SystemConfig::new(2, 3);
        cfg.roles = vec![UserRole::DataOnly, UserRole::Both, UserRole::ComputeOnly];
        cfg.stream_assignment = vec![None, Some(1), Some(1)];
        cfg.validate().unwrap();
        let c_d = cfg.c_d();
        let mut rng = trial_rng(3, 0, Substream::Frame);
        let frame = generate_frame(&cfg, &mut rng);
        assert!((frame.d[0].re.abs() - c_d).abs() < 1e-15);
        assert!((frame.d[1].im.abs() - c_d).abs() < 1e-15);
        assert_eq!(frame.d[2], Complex64::ZERO, "compute-only carries no data");
        assert_eq!(frame.bits[2], [0, 0]);
        assert_eq!(frame.s[0], Complex64::ZERO, "data-only carries no computing signal");
        assert_eq!(frame.e_s, 1.0 / 3.0);

        // Computing-signal variance at E_S = 0.01 over ~1e6 draws.
        let mut cfg = SystemConfig::new(1, 100);
        cfg.data_power = 1.0;
        let mut rng = trial_rng(4, 0, Substream::Frame);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..10_000 {
            let frame = generate_frame(&cfg, &mut rng);
            acc += frame.s.norm_squared();
            count += frame.s.len();
        }
        let var = acc / count as f64;
        assert!((var - 0.01).abs() < 0.01 * 0.01, "E_S estimate {var}");
    }

    // 6. Noiseless single user: y is the scaled channel column.
    #[test]
    fn synthesize_noiseless_single_user() {
        let mut cfg = SystemConfig::new(4, 1);
        cfg.roles = vec![UserRole::DataOnly];
        cfg.stream_assignment = vec![None];
        let mut rng = trial_rng(5, 0, Substream::Channel);
        let ch = generate_channel(&cfg, &mut rng);
        let mut frng = trial_rng(5, 0, Substream::Frame);
        let frame = generate_frame(&cfg, &mut frng);
        let mut nrng = trial_rng(5, 0, Substream::Noise);
        let rx = synthesize_rx(&ch, &frame, 0.0, &mut nrng).unwrap();
        for n in 0..4 {
            assert!((rx.y[n] - ch.h[(n, 0)] * frame.d[0]).norm() < 1e-15);
        }
    }

    // 7. Zero channel passes the noise through exactly; noise variance
    //    matches the requested level.
    #[test]
    fn synthesize_noise_only() {
        let ch = ChannelRealization::from_matrix(CMatrix::zeros(64, 2));
        let frame = TransmitFrame {
            bits: vec![[0, 0]; 2],
            d: CVector::zeros(2),
            s: CVector::zeros(2),
            e_s: 0.5,
        };
        let mut rng = trial_rng(6, 0, Substream::Noise);
        let mut acc = 0.0;
        for _ in 0..2000 {
            let rx = synthesize_rx(&ch, &frame, 2.5, &mut rng).unwrap();
            acc += rx.y.norm_squared();
        }
        let var = acc / (2000.0 * 64.0);
        assert!((var - 2.5).abs() < 0.05, "noise variance estimate {var}");
    }

    // 8. Dimension mismatch is rejected.
    #[test]
    fn synthesize_dimension_mismatch() {
        let ch = ChannelRealization::from_matrix(CMatrix::zeros(4, 3));
        let frame = TransmitFrame {
            bits: vec![[0, 0]; 2],
            d: CVector::zeros(2),
            s: CVector::zeros(2),
            e_s: 0.5,
        };
        let mut rng = trial_rng(7, 0, Substream::Noise);
        assert!(matches!(
            synthesize_rx(&ch, &frame, 1.0, &mut rng),
            Err(IccError::Config(_))
        ));
    }

    // 9. Average signal powers anchor the SNR definitions:
    //    E||Hd||^2 = N K E_D and E||Hs||^2 = N E_D.
    #[test]
    fn average_signal_powers() {
        let mut cfg = SystemConfig::new(4, 8);
        cfg.data_power = 2.0;
        let mut pd = 0.0;
        let mut ps = 0.0;
        let trials = 100_000u64;
        for t in 0..trials {
            let ch = generate_channel(&cfg, &mut trial_rng(8, t, Substream::Channel));
            let frame = generate_frame(&cfg, &mut trial_rng(8, t, Substream::Frame));
            pd += (&ch.h * &frame.d).norm_squared();
            ps += (&ch.h * &frame.s).norm_squared();
        }
        pd /= trials as f64;
        ps /= trials as f64;
        let expect_d = (cfg.n_antennas * cfg.n_users) as f64 * cfg.data_power;
        let expect_s = cfg.n_antennas as f64 * cfg.data_power;
        assert!((pd - expect_d).abs() < 0.02 * expect_d, "E||Hd||^2 = {pd}");
        assert!((ps - expect_s).abs() < 0.02 * expect_s, "E||Hs||^2 = {ps}");
    }

    // 10. Identical (cfg, seed, trial) reproduces H, d, s, w bit for bit.
    #[test]
    fn reproducible_across_streams() {
        let cfg = small_cfg();
        let draw = |trial: u64| {
            let ch = generate_channel(&cfg, &mut trial_rng(42, trial, Substream::Channel));
            let frame = generate_frame(&cfg, &mut trial_rng(42, trial, Substream::Frame));
            let rx =
                synthesize_rx(&ch, &frame, 1.3, &mut trial_rng(42, trial, Substream::Noise))
                    .unwrap();
            (ch, frame, rx)
        };
        let (ch_a, fr_a, rx_a) = draw(9);
        let (ch_b, fr_b, rx_b) = draw(9);
        assert_eq!(ch_a.h, ch_b.h);
        assert_eq!(fr_a.d, fr_b.d);
        assert_eq!(fr_a.s, fr_b.s);
        assert_eq!(rx_a.y, rx_b.y);
        // Different trials produce different draws.
        let (ch_c, _, _) = draw(10);
        assert_ne!(ch_a.h, ch_c.h);
    }

    // 11. Config validation rejects the spec'd failure modes.
    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(0, 4).validate().is_err());
        assert!(SystemConfig::new(4, 0).validate().is_err());
        let mut cfg = small_cfg();
        cfg.beta_d = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.data_power = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.roles[0] = UserRole::DataOnly;
        assert!(cfg.validate().is_err(), "data-only user keeping a stream index");
        cfg.stream_assignment[0] = None;
        assert!(cfg.validate().is_ok());
        let mut cfg = small_cfg();
        cfg.stream_assignment[3] = Some(2);
        assert!(cfg.validate().is_err(), "stream index beyond M");
    }

    // 12. sigma_s2 vanishes exactly when nobody computes.
    #[test]
    fn sigma_s2_role_dependence() {
        let mut cfg = small_cfg();
        assert_eq!(cfg.sigma_s2(), 1.0 / 8.0);
        cfg.roles = vec![UserRole::DataOnly; 8];
        cfg.stream_assignment = vec![None; 8];
        assert_eq!(cfg.sigma_s2(), 0.0);
    }
}
