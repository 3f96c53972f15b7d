//! Over-the-air product computation via the nomographic pair
//! `product = phi(sum psi(x_k))` with `psi = log2`, `phi = 2^x`: users
//! transmit scaled logs, the channel adds them, the receiver estimates the
//! sum and exponentiates.
//!
//! Run with `cargo run --release --example product_function`.

use icc::model::{self, Substream, SystemConfig, TransmitFrame, UserRole};
use icc::nomographic::{postprocess, preprocess, NomographicKind};
use icc::receiver_icc::run_single_stream;
use icc::{CVector, PipelineOptions, SolverMode};
use num_complex::Complex64;
use rand::Rng;

fn main() {
    let mut cfg = SystemConfig::new(32, 4);
    cfg.noise_var = 0.5;
    cfg.roles = vec![UserRole::ComputeOnly; 4];
    cfg.stream_assignment = vec![Some(1); 4];
    let opts = PipelineOptions { solver: SolverMode::Direct, ..PipelineOptions::default() };

    // Inputs x_k = 2^g with g uniform on [-1, 1], so psi(x_k) = g is
    // uniform with power 1/3; the scale c makes E|s_k|^2 exactly the
    // per-user computing allocation the combiner prior assumes.
    let e_s = cfg.sigma_s2();
    let c = (3.0 * e_s).sqrt();

    println!("over-the-air product of 4 inputs, N=32 antennas");
    println!("{:>6} {:>12} {:>12} {:>10}", "trial", "product", "estimate", "rel err");
    for trial in 0..5u64 {
        let mut rng = model::trial_rng(cfg.base_seed, trial, Substream::Frame);
        let x: Vec<f64> = (0..4).map(|_| 2f64.powf(rng.random_range(-1.0..1.0))).collect();
        let product: f64 = x.iter().product();

        let s = CVector::from_fn(4, |k, _| {
            preprocess(NomographicKind::Product, Complex64::new(x[k], 0.0)).unwrap()
                * Complex64::new(c, 0.0)
        });
        let frame = TransmitFrame {
            bits: vec![[0u8; 2]; 4],
            d: CVector::zeros(4),
            s,
            e_s,
        };
        let ch = model::generate_channel(
            &cfg,
            &mut model::trial_rng(cfg.base_seed, trial, Substream::Channel),
        );
        let rx = model::synthesize_rx(
            &ch,
            &frame,
            cfg.noise_var,
            &mut model::trial_rng(cfg.base_seed, trial, Substream::Noise),
        )
        .unwrap();

        let out = run_single_stream(&rx, &ch, &cfg, &opts).unwrap();
        let estimate = postprocess(NomographicKind::Product, out.f_hat[0] / c).re;
        println!(
            "{:>6} {:>12.4} {:>12.4} {:>10.2e}",
            trial,
            product,
            estimate,
            (estimate - product).abs() / product
        );
    }
}
