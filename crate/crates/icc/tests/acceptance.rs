//! End-to-end acceptance gate for the receiver library. Each test checks one
//! release criterion against an independent oracle (closed forms, exhaustive
//! algebraic identities, or brute-force Monte Carlo) and prints exactly one
//! `[PASS]`/`[FAIL]` line with the measured numbers; run with `--nocapture`
//! to see the lines for passing criteria too.
//!
//! The tests share one process-wide lock so wall-clock budgets and the rayon
//! pool are never shared between two criteria at once.

use std::fmt::Write as _;
use std::hint::black_box;
use std::slice;
use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use icc::combiner::{
    apply_combiner, build_normal_system, error_covariance, gabp_linear_solve,
    mmse_combiner_direct, mmse_combiner_woodbury, CombinerSystem,
};
use icc::denoisers::{damp, damp_var, qpsk_denoise, BeliefScalar, PriorGaussian, VAR_FLOOR};
use icc::harness::{csv_string, run_campaign, CampaignSection, Scenario, SystemSection};
use icc::metrics;
use icc::model::{
    self, AlgorithmKind, ChannelRealization, Modulation, RxSignal, Substream, SystemConfig,
    TransmitFrame, UserRole,
};
use icc::nomographic::{evaluate_target, make_selectors, NomographicKind, StreamSelector};
use icc::receiver_icc::{run_mf_bound, run_multi_stream, run_single_stream};
use icc::{CMatrix, CVector, IccError, OmegaMode, PipelineOptions, RMatrix, SolverMode};

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(PoisonError::into_inner)
}

fn report(id: &str, pass: bool, detail: &str) {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn draw_trial(
    cfg: &SystemConfig,
    seed: u64,
    trial: u64,
) -> (ChannelRealization, TransmitFrame, RxSignal) {
    let ch = model::generate_channel(cfg, &mut model::trial_rng(seed, trial, Substream::Channel));
    let frame = model::generate_frame(cfg, &mut model::trial_rng(seed, trial, Substream::Frame));
    let rx = model::synthesize_rx(
        &ch,
        &frame,
        cfg.noise_var,
        &mut model::trial_rng(seed, trial, Substream::Noise),
    )
    .expect("finite noise variance");
    (ch, frame, rx)
}

fn all_users_selector(k: usize) -> StreamSelector {
    StreamSelector { p: vec![true; k], stream_index: 1 }
}

fn system_section(n_antennas: usize, n_users: usize, algorithm: AlgorithmKind) -> SystemSection {
    SystemSection {
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
    }
}

fn campaign_section(snr_grid_db: Vec<f64>, trials: usize, solver: SolverMode) -> CampaignSection {
    CampaignSection {
        snr_grid_db,
        trials,
        solver_mode: solver,
        omega_mode: OmegaMode::AsPrinted,
        pin_kds: false,
        output_path: "unused.csv".into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Spearman rank correlation of `vals` against their index order. Exactly
/// -1.0 iff the values are strictly decreasing; ties pull it above -1.
fn spearman_vs_index(vals: &[f64]) -> f64 {
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let mut rank = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && vals[idx[j + 1]] == vals[idx[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0;
        for &p in &idx[i..=j] {
            rank[p] = shared;
        }
        i = j + 1;
    }
    let mean = (n as f64 - 1.0) / 2.0;
    let (mut num, mut den_a, mut den_b) = (0.0, 0.0, 0.0);
    for (i, &r) in rank.iter().enumerate() {
        let a = i as f64 - mean;
        let b = r - mean;
        num += a * b;
        den_a += a * a;
        den_b += b * b;
    }
    num / (den_a * den_b).sqrt()
}

// ---------------------------------------------------------------------------
// 1. Combiner solver agreement
// ---------------------------------------------------------------------------

// Direct, matrix-inversion-lemma, and message-passing solvers on the same
// normal system: 100 random instances at N=32, K=16, noise 0.1, error
// covariance from uniform per-edge stds in [0, 0.3]. Direct and lemma forms
// must agree to 1e-9; the message-passing solve may drop at most 5 instances
// as diverged and must match to 1e-3 on the rest.
#[test]
fn a01_combiner_solver_agreement() {
    let _gate = serial();
    let started = Instant::now();
    const SEED: u64 = 0xacc0_0001;
    let (n, k) = (32usize, 16usize);
    let cfg = SystemConfig::new(n, k);
    let sigma_s2 = cfg.sigma_s2();
    let noise_var = 0.1;
    let sel = all_users_selector(k);
    let prior = PriorGaussian { mean: Complex64::ZERO, var: cfg.sigma_u2 };

    let mut max_dw = 0.0f64;
    let mut max_gabp: Option<f64> = None;
    let mut diverged = 0usize;
    for inst in 0..100u64 {
        let ch = model::generate_channel(&cfg, &mut model::trial_rng(SEED, inst, Substream::Channel));
        let mut rng = model::trial_rng(SEED, inst, Substream::Frame);
        let sigma = RMatrix::from_fn(n, k, |_, _| rng.random_range(0.0..0.3));
        let omega = error_covariance(&sigma, OmegaMode::AsPrinted);
        let sys = build_normal_system(&ch, sigma_s2, &omega, noise_var, slice::from_ref(&sel));

        let direct = mmse_combiner_direct(&sys, 0).unwrap();
        let wood = mmse_combiner_woodbury(&ch, sigma_s2, &sys.omega, noise_var, &sys.b[0]).unwrap();
        max_dw = max_dw.max((&direct - &wood).norm() / direct.norm());

        match gabp_linear_solve(&sys, 0, prior, cfg.beta_u, 500) {
            Ok(u) => {
                let rel = (&u - &direct).norm() / direct.norm();
                max_gabp = Some(max_gabp.map_or(rel, |m| m.max(rel)));
            }
            Err(IccError::CombinerDivergence { .. }) => diverged += 1,
            Err(e) => panic!("unexpected solver error: {e}"),
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    let gabp_txt = max_gabp.map_or_else(|| "n/a".to_string(), |m| format!("{m:.3e}"));
    let pass = max_dw <= 1e-9
        && diverged <= 5
        && max_gabp.map_or(true, |m| m <= 1e-3)
        && elapsed < 60.0;
    let detail = format!(
        "direct-vs-lemma max rel {max_dw:.3e} (need <= 1e-9), message-passing diverged \
         {diverged}/100 (need <= 5), max rel over converged {gabp_txt} (need <= 1e-3), \
         {elapsed:.1}s (need < 60s)"
    );
    report("01 combiner solver agreement", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 2. MMSE combiner optimality
// ---------------------------------------------------------------------------

// The closed-form combiner must beat 200 random perturbations of itself
// (norm 10% of the weight norm) on the Monte Carlo objective
// E|1^T s - u^H (H(s + e) + w)|^2 with e drawn from the same error
// covariance the combiner was built with; 5 instances, 1e5 shared samples.
// The instances sit at high fidelity (small noise, small stds) so the true
// optimality gap dominates the 1/sqrt(samples) wobble of the empirical
// objective; a perturbation radius of 0.1 norm is then decisively uphill.
#[test]
fn a02_mmse_combiner_optimality() {
    let _gate = serial();
    let started = Instant::now();
    const SEED: u64 = 0xacc0_0002;
    let (n, k) = (16usize, 8usize);
    let cfg = SystemConfig::new(n, k);
    let sigma_s2 = cfg.sigma_s2();
    let noise_var = 0.01;
    let sel = all_users_selector(k);
    let samples = 100_000usize;

    let mut worst_margin = f64::INFINITY;
    for inst in 0..5u64 {
        let ch = model::generate_channel(&cfg, &mut model::trial_rng(SEED, inst, Substream::Channel));
        let mut rng = model::trial_rng(SEED, inst, Substream::Frame);
        let sigma = RMatrix::from_fn(n, k, |_, _| rng.random_range(0.0..0.05));
        let omega = error_covariance(&sigma, OmegaMode::AsPrinted);
        let sys = build_normal_system(&ch, sigma_s2, &omega, noise_var, slice::from_ref(&sel));
        let u_star = mmse_combiner_direct(&sys, 0).unwrap();

        // Factor omega so the detection error e = L g has covariance omega.
        let l = nalgebra::linalg::Cholesky::new(sys.omega.clone())
            .expect("full-rank error covariance")
            .l();

        let mut srng = model::trial_rng(SEED, inst, Substream::Noise);
        let s_scale = Complex64::new(sigma_s2.sqrt(), 0.0);
        let w_scale = Complex64::new(noise_var.sqrt(), 0.0);
        let mut z = CMatrix::zeros(n, samples);
        let mut t = vec![Complex64::ZERO; samples];
        for j in 0..samples {
            let s = CVector::from_fn(k, |_, _| model::standard_complex(&mut srng) * s_scale);
            let g = CVector::from_fn(k, |_, _| model::standard_complex(&mut srng));
            let w = CVector::from_fn(n, |_, _| model::standard_complex(&mut srng) * w_scale);
            t[j] = s.iter().sum();
            z.set_column(j, &(&ch.h * (&s + &l * g) + w));
        }

        let obj = |u: &CVector| -> f64 {
            let proj = u.adjoint() * &z;
            let mut acc = 0.0;
            for j in 0..samples {
                acc += (t[j] - proj[(0, j)]).norm_sqr();
            }
            acc / samples as f64
        };
        let obj_star = obj(&u_star);

        // Same sample set for every candidate, so the comparison is paired.
        let radius = 0.1 * u_star.norm();
        let perturbed: Vec<CVector> = (0..200)
            .map(|_| {
                let g = CVector::from_fn(n, |_, _| model::standard_complex(&mut srng));
                let dir = Complex64::new(radius / g.norm(), 0.0);
                &u_star + g * dir
            })
            .collect();
        let margin = perturbed
            .par_iter()
            .map(|u| obj(u) - obj_star)
            .reduce(|| f64::INFINITY, f64::min);
        worst_margin = worst_margin.min(margin);
    }
    let elapsed = started.elapsed().as_secs_f64();

    let pass = worst_margin >= 0.0 && elapsed < 120.0;
    let detail = format!(
        "worst objective margin over 5 x 200 perturbations {worst_margin:.3e} (need >= 0), \
         {elapsed:.1}s (need < 120s)"
    );
    report("02 mmse combiner optimality", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 3. Genie detection matches the diversity-combining closed form
// ---------------------------------------------------------------------------

// One data-only user, 8 antennas: the genie-initialized receiver with the
// precision-weighted consensus decides on the exact maximal-ratio statistic,
// so its BER must match the Rayleigh closed form within 3 sigma at each of
// three noise levels, 1e5 trials per level.
#[test]
fn a03_genie_ber_matches_mrc_closed_form() {
    let _gate = serial();
    let started = Instant::now();
    const SEED: u64 = 0xacc0_0003;
    let trials = 100_000u64;
    let noise_vars = [8.0, 4.0, 1.0];
    let opts =
        PipelineOptions { precision_weighted_consensus: true, ..PipelineOptions::default() };

    let mut pass = true;
    let mut detail = String::new();
    for &nv in &noise_vars {
        let mut cfg = SystemConfig::new(8, 1);
        cfg.noise_var = nv;
        cfg.roles = vec![UserRole::DataOnly];
        cfg.stream_assignment = vec![None];
        let errors: u64 = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let (ch, frame, rx) = draw_trial(&cfg, SEED, trial);
                let out = run_mf_bound(&rx, &ch, &cfg, &frame, &opts).unwrap();
                let bits = metrics::hard_decision(out.d_hat[0]);
                u64::from(bits[0] != frame.bits[0][0]) + u64::from(bits[1] != frame.bits[0][1])
            })
            .sum();
        let p_hat = errors as f64 / (2 * trials) as f64;
        let p = metrics::analytic_mrc_qpsk_ber(8, cfg.data_power / nv);
        let three_sigma = 3.0 * (p * (1.0 - p) / (2.0 * trials as f64)).sqrt();
        let ok = (p_hat - p).abs() <= three_sigma;
        pass &= ok;
        write!(
            detail,
            "nv={nv}: |{p_hat:.4e} - {p:.4e}| {} 3sig {three_sigma:.1e}; ",
            if ok { "<=" } else { ">" }
        )
        .unwrap();
    }
    let elapsed = started.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    write!(detail, "{elapsed:.1}s (need < 300s)").unwrap();
    report("03 genie ber matches mrc closed form", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 4. Pure-communication reduction
// ---------------------------------------------------------------------------

// With every user data-only, the single-stream pipeline must be bit-identical
// (in fact f64-identical) to a plain QPSK detector that carries no computing
// terms at all, over 100 trials.
#[test]
fn a04_pure_communication_bit_identity() {
    let _gate = serial();
    const SEED: u64 = 0xacc0_0004;
    let mut cfg = SystemConfig::new(16, 8);
    cfg.noise_var = 2.0;
    cfg.roles = vec![UserRole::DataOnly; 8];
    cfg.stream_assignment = vec![None; 8];
    let opts = PipelineOptions::default();

    let trials = 100u64;
    let mut identical = 0u64;
    let mut bits_equal = true;
    for trial in 0..trials {
        let (ch, _, rx) = draw_trial(&cfg, SEED, trial);
        let out = run_single_stream(&rx, &ch, &cfg, &opts).unwrap();
        let reference = reference_qpsk_gabp(&rx, &ch, &cfg);
        if out.d_hat == reference {
            identical += 1;
        }
        for k in 0..cfg.n_users {
            bits_equal &=
                metrics::hard_decision(out.d_hat[k]) == metrics::hard_decision(reference[k]);
        }
    }

    let pass = identical == trials && bits_equal;
    let detail = format!(
        "estimates f64-identical on {identical}/{trials} trials, hard bits identical: {bits_equal}"
    );
    report("04 pure communication bit identity", pass, &detail);
    assert!(pass, "{detail}");
}

// Freestanding QPSK detector with a constant noise floor: same message
// schedule, no effective-noise profile, no combining stage.
fn reference_qpsk_gabp(y: &RxSignal, ch: &ChannelRealization, cfg: &SystemConfig) -> CVector {
    let (n_ant, k_users) = ch.h.shape();
    let e_d = cfg.data_power;
    let mut d_hat = CMatrix::zeros(n_ant, k_users);
    let mut d_var = RMatrix::from_element(n_ant, k_users, e_d);
    let mut ytilde = CMatrix::zeros(n_ant, k_users);
    let mut vtilde = RMatrix::zeros(n_ant, k_users);
    for _ in 0..cfg.i_max {
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
                vtilde[(n, q)] = (var_sum - h2 * d_var[(n, q)]).max(0.0) + cfg.noise_var;
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
            for n in 0..n_ant {
                let v = vtilde[(n, k)].max(VAR_FLOOR);
                let ext_p = p - ch.h[(n, k)].norm_sqr() / v;
                if ext_p > 0.0 {
                    let belief = BeliefScalar {
                        mean: (w - ch.h[(n, k)].conj() * ytilde[(n, k)] / v) / ext_p,
                        var: ext_p.recip(),
                    };
                    let (est, var) = qpsk_denoise(belief, e_d);
                    d_hat[(n, k)] = damp(est, d_hat[(n, k)], cfg.beta_d);
                    d_var[(n, k)] = damp_var(var, d_var[(n, k)], cfg.beta_d).max(0.0);
                }
            }
        }
    }
    CVector::from_fn(k_users, |k, _| d_hat.column(k).iter().sum::<Complex64>() / n_ant as f64)
}

// ---------------------------------------------------------------------------
// 5. Noiseless computing limit
// ---------------------------------------------------------------------------

// With the data known exactly and a zero error covariance, the direct
// combiner's function NMSE must fall by at least 9 dB per decade of noise
// over four decades (pseudo-inverse limit).
#[test]
fn a05_noiseless_combining_limit() {
    let _gate = serial();
    const SEED: u64 = 0xacc0_0005;
    let (n, k) = (16usize, 8usize);
    let cfg = SystemConfig::new(n, k);
    let sigma_s2 = cfg.sigma_s2();
    let sel = all_users_selector(k);
    let omega = CMatrix::zeros(k, k);
    let trials = 400u64;
    let grid = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

    let mut nmse_db = Vec::with_capacity(grid.len());
    for &nv in &grid {
        let mut acc = 0.0;
        for trial in 0..trials {
            let ch =
                model::generate_channel(&cfg, &mut model::trial_rng(SEED, trial, Substream::Channel));
            let frame =
                model::generate_frame(&cfg, &mut model::trial_rng(SEED, trial, Substream::Frame));
            let rx = model::synthesize_rx(
                &ch,
                &frame,
                nv,
                &mut model::trial_rng(SEED, trial, Substream::Noise),
            )
            .unwrap();
            let sys = build_normal_system(&ch, sigma_s2, &omega, nv, slice::from_ref(&sel));
            let u = mmse_combiner_direct(&sys, 0).unwrap();
            let f_hat = apply_combiner(&u, &rx, &ch, &frame.d, NomographicKind::Sum, false);
            let (target, _) = evaluate_target(NomographicKind::Sum, &frame.s, &sel).unwrap();
            acc += (target - f_hat).norm_sqr() / k as f64;
        }
        nmse_db.push(10.0 * (acc / trials as f64).log10());
    }

    let mut worst_drop = f64::INFINITY;
    for pair in nmse_db.windows(2) {
        worst_drop = worst_drop.min(pair[0] - pair[1]);
    }
    let pass = worst_drop >= 9.0;
    let detail = format!(
        "nmse over noise decades {:?} dB, worst per-decade drop {worst_drop:.2} dB (need >= 9)",
        nmse_db.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    report("05 noiseless combining limit", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 6. Loading-grid trends
// ---------------------------------------------------------------------------

// Benchmark receiver at N=64 under two loadings: both BER and NMSE must be
// strictly decreasing across an 8-point SNR grid (Spearman rho exactly -1)
// at 1e4 trials per point, and the lighter loading must be pointwise no
// worse in NMSE.
//
// The grid [4, 18] dB covers the receiver's active region: below ~2 dB the
// NMSE curves ride their zero-combiner ceilings (exactly 1/K, since the
// per-user computing power is E_D/K and the metric divides by K), and above
// ~18 dB the bit-error counts starve at 1e4 trials. Those same facts make
// the pointwise leg unattainable together with the BER leg: the 1/K ceiling
// orders the loadings the other way until the fully-loaded error growth
// overtakes it, which measurement places near +21.5 dB, past the last SNR
// with a countable bit-error rate. The leg is asserted as stated and the
// observed margin is reported.
#[test]
fn a06_loading_grid_trends() {
    let _gate = serial();
    let started = Instant::now();
    let grid: Vec<f64> = (2..=9).map(|i| 2.0 * i as f64).collect();
    let trials = 10_000usize;

    let mut curves = Vec::new();
    let mut pass = true;
    let mut detail = String::new();
    for &k in &[48usize, 64] {
        let sc = Scenario {
            system: system_section(64, k, AlgorithmKind::Benchmark),
            campaign: campaign_section(grid.clone(), trials, SolverMode::Direct),
        };
        let rows = run_campaign(&sc).unwrap();
        let ber: Vec<f64> = rows.iter().map(|r| r.ber.unwrap()).collect();
        let nmse: Vec<f64> = rows.iter().map(|r| r.nmse.unwrap()).collect();
        let rho_ber = spearman_vs_index(&ber);
        let rho_nmse = spearman_vs_index(&nmse);
        pass &= rho_ber == -1.0 && rho_nmse == -1.0;
        write!(detail, "K={k}: rho_ber {rho_ber}, rho_nmse {rho_nmse}; ").unwrap();
        curves.push(nmse);
    }
    let worst_gap_db = curves[0]
        .iter()
        .zip(&curves[1])
        .map(|(a, b)| 10.0 * (a / b).log10())
        .fold(f64::NEG_INFINITY, f64::max);
    let lighter_no_worse = worst_gap_db <= 0.0;
    pass &= lighter_no_worse;
    let elapsed = started.elapsed().as_secs_f64();
    pass &= elapsed < 900.0;
    write!(
        detail,
        "nmse(K=48) <= nmse(K=64) pointwise: {lighter_no_worse} (worst excess \
         {worst_gap_db:.2} dB); {elapsed:.0}s (need < 900s)"
    )
    .unwrap();
    report("06 loading grid trends", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 7. Benchmark and single-stream parity
// ---------------------------------------------------------------------------

// At N=64, K=32, mid SNR, the benchmark receiver with the message-passing
// combiner and the single-stream receiver must land within 1 dB of each
// other in NMSE over 1e4 shared-seed trials.
#[test]
fn a07_benchmark_single_stream_parity() {
    let _gate = serial();
    let started = Instant::now();
    let trials = 10_000usize;
    let run = |algorithm: AlgorithmKind| {
        let sc = Scenario {
            system: system_section(64, 32, algorithm),
            campaign: campaign_section(vec![10.0], trials, SolverMode::Gabp),
        };
        run_campaign(&sc).unwrap().remove(0)
    };
    let bench = run(AlgorithmKind::Benchmark);
    let single = run(AlgorithmKind::SingleStream);
    let gap = (bench.nmse_db.unwrap() - single.nmse_db.unwrap()).abs();
    let elapsed = started.elapsed().as_secs_f64();

    let pass = gap <= 1.0;
    let detail = format!(
        "benchmark {:.2} dB (diverged frac {:.2}) vs single-stream {:.2} dB (diverged frac \
         {:.2}), gap {gap:.2} dB (need <= 1), {elapsed:.0}s",
        bench.nmse_db.unwrap(),
        bench.diverged_fraction,
        single.nmse_db.unwrap(),
        single.diverged_fraction,
    );
    report("07 benchmark single-stream parity", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 8. Stream partition consistency
// ---------------------------------------------------------------------------

// Splitting the computing users over two streams and summing the two
// estimates must reproduce the merged single-stream estimate to 1e-12 per
// trial with the direct solver, and the M=1 multi-stream run must be
// f64-identical to the single-stream entry point.
#[test]
fn a08_stream_partition_consistency() {
    let _gate = serial();
    const SEED: u64 = 0xacc0_0008;
    let mut cfg2 = SystemConfig::new(16, 8);
    cfg2.noise_var = 2.0;
    cfg2.n_streams = 2;
    cfg2.stream_assignment = (0..8).map(|k| Some(if k < 4 { 1 } else { 2 })).collect();
    let sel2 = make_selectors(&cfg2.roles, &cfg2.stream_assignment, 2).unwrap();

    let mut cfg1 = cfg2.clone();
    cfg1.n_streams = 1;
    cfg1.stream_assignment = vec![Some(1); 8];
    let sel1 = make_selectors(&cfg1.roles, &cfg1.stream_assignment, 1).unwrap();
    let opts = PipelineOptions { solver: SolverMode::Direct, ..PipelineOptions::default() };

    let trials = 100u64;
    let mut max_gap = 0.0f64;
    let mut reductions_identical = true;
    for trial in 0..trials {
        let (ch, _, rx) = draw_trial(&cfg2, SEED, trial);
        let split = run_multi_stream(&rx, &ch, &cfg2, &sel2, &opts).unwrap();
        let merged = run_multi_stream(&rx, &ch, &cfg1, &sel1, &opts).unwrap();
        let single = run_single_stream(&rx, &ch, &cfg1, &opts).unwrap();
        max_gap = max_gap.max((split.f_hat[0] + split.f_hat[1] - merged.f_hat[0]).norm());
        reductions_identical &= single.d_hat == merged.d_hat
            && single.f_hat == merged.f_hat
            && single.sigma_d == merged.sigma_d;
    }

    let pass = max_gap <= 1e-12 && reductions_identical;
    let detail = format!(
        "max |f1 + f2 - merged| {max_gap:.3e} over {trials} trials (need <= 1e-12), M=1 \
         reduction f64-identical: {reductions_identical}"
    );
    report("08 stream partition consistency", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 9. Stage complexity scaling
// ---------------------------------------------------------------------------

// Doubling N at fixed K and fixed sweep counts: the per-run combining solve
// does O(N^2) work per sweep, so its median time may grow at most 4.5x; the
// detection stage does O(NK), so at most 2.5x. Sweep counts are pinned by
// choosing systems that neither converge early nor diverge.
#[test]
fn a09_stage_complexity_scaling() {
    let _gate = serial();
    const SEED: u64 = 0xacc0_0009;
    let reps = 20u64;

    // Hermitian systems with diagonal twice the off-diagonal row mass: the
    // damped solve contracts slowly enough that 50 sweeps never hit the
    // residual exit and never trip the divergence guard.
    let diag_dominant = |n: usize, rep: u64| -> CombinerSystem {
        let mut rng = model::trial_rng(SEED, rep, Substream::Channel);
        let mut a = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = model::standard_complex(&mut rng);
                a[(i, j)] = v;
                a[(j, i)] = v.conj();
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].norm()).sum();
            a[(i, i)] = Complex64::new(2.0 * off, 0.0);
        }
        let b = CVector::from_fn(n, |_, _| model::standard_complex(&mut rng));
        // The solver never reads omega.
        CombinerSystem { a, b: vec![b], omega: CMatrix::zeros(0, 0) }
    };
    let prior = PriorGaussian { mean: Complex64::ZERO, var: 1.0 };
    let time_combining = |n: usize| -> f64 {
        let _ = gabp_linear_solve(&diag_dominant(n, 0), 0, prior, 0.3, 50);
        let times: Vec<f64> = (0..reps)
            .map(|rep| {
                let sys = diag_dominant(n, rep);
                let t0 = Instant::now();
                let u = gabp_linear_solve(&sys, 0, prior, 0.3, 50);
                let dt = t0.elapsed().as_secs_f64();
                assert!(u.is_ok(), "pinned-sweep system diverged at N={n}");
                black_box(u.unwrap());
                dt
            })
            .collect();
        median(times)
    };

    let time_detection = |n: usize| -> f64 {
        let mut cfg = SystemConfig::new(n, 16);
        cfg.noise_var = 2.0;
        let profile_of = |ch: &ChannelRealization| {
            icc::receiver_icc::effective_noise_profile(ch, cfg.sigma_s2(), cfg.noise_var)
        };
        let constraints = icc::receiver_icc::AccessConstraints::none(16);
        {
            let (ch, _, rx) = draw_trial(&cfg, SEED, 0);
            let _ = icc::receiver_icc::run_data_gabp(&rx, &ch, &profile_of(&ch), &cfg, &constraints);
        }
        let times: Vec<f64> = (0..reps)
            .map(|rep| {
                let (ch, _, rx) = draw_trial(&cfg, SEED, rep);
                let profile = profile_of(&ch);
                let t0 = Instant::now();
                let out =
                    icc::receiver_icc::run_data_gabp(&rx, &ch, &profile, &cfg, &constraints);
                let dt = t0.elapsed().as_secs_f64();
                black_box(out.unwrap());
                dt
            })
            .collect();
        median(times)
    };

    let comb_ratio = time_combining(64) / time_combining(32);
    let det_ratio = time_detection(64) / time_detection(32);

    let pass = comb_ratio <= 4.5 && det_ratio <= 2.5;
    let detail = format!(
        "combining median time ratio {comb_ratio:.2} (need <= 4.5), detection median time \
         ratio {det_ratio:.2} (need <= 2.5), medians of {reps} runs"
    );
    report("09 stage complexity scaling", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 10. Deterministic campaign CSV
// ---------------------------------------------------------------------------

// The same scenario must serialize to byte-identical CSV regardless of the
// worker-thread count, once the wall-clock column is zeroed.
#[test]
fn a10_deterministic_campaign_csv() {
    let _gate = serial();
    let sc = Scenario {
        system: system_section(8, 4, AlgorithmKind::SingleStream),
        campaign: campaign_section(vec![0.0, 10.0], 50, SolverMode::Gabp),
    };
    let csv_of = |threads: Option<usize>| -> String {
        let rows = match threads {
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
                pool.install(|| run_campaign(&sc)).unwrap()
            }
            None => run_campaign(&sc).unwrap(),
        };
        let mut rows = rows;
        for r in &mut rows {
            r.elapsed_ms = 0.0;
        }
        csv_string(&rows).unwrap()
    };

    let single = csv_of(Some(1));
    let quad = csv_of(Some(4));
    let global = csv_of(None);
    let pass = single == quad && quad == global;
    let detail = format!(
        "1-thread vs 4-thread vs global pool CSV bytes equal: {pass} ({} bytes, wall-clock \
         column zeroed)",
        single.len()
    );
    report("10 deterministic campaign csv", pass, &detail);
    assert!(pass, "{detail}");
}
