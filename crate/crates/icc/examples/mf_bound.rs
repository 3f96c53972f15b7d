//! Matched-filter bound: the same pipeline warm-started at the true
//! transmit frame. Its error lower-bounds the cold-start receiver at every
//! noise level.
//!
//! Run with `cargo run --release --example mf_bound`.

use icc::model::{self, Substream, SystemConfig};
use icc::receiver_icc::{run_mf_bound, run_single_stream};
use icc::PipelineOptions;
use num_complex::Complex64;

fn main() {
    let opts = PipelineOptions::default();
    let trials = 300u64;
    println!("single-stream receiver vs matched-filter bound, N=16, K=8, {trials} trials");
    println!("{:>10} {:>14} {:>14}", "noise_var", "nmse_cold", "nmse_genie");

    for noise_var in [4.0, 1.0, 0.25] {
        let mut cfg = SystemConfig::new(16, 8);
        cfg.noise_var = noise_var;
        let mut nmse_cold = 0.0;
        let mut nmse_genie = 0.0;
        for trial in 0..trials {
            let ch = model::generate_channel(
                &cfg,
                &mut model::trial_rng(cfg.base_seed, trial, Substream::Channel),
            );
            let frame = model::generate_frame(
                &cfg,
                &mut model::trial_rng(cfg.base_seed, trial, Substream::Frame),
            );
            let rx = model::synthesize_rx(
                &ch,
                &frame,
                cfg.noise_var,
                &mut model::trial_rng(cfg.base_seed, trial, Substream::Noise),
            )
            .unwrap();

            let truth: Complex64 = frame.s.iter().sum();
            let cold = run_single_stream(&rx, &ch, &cfg, &opts).unwrap();
            let genie = run_mf_bound(&rx, &ch, &cfg, &frame, &opts).unwrap();
            nmse_cold += (cold.f_hat[0] - truth).norm_sqr() / cfg.n_users as f64;
            nmse_genie += (genie.f_hat[0] - truth).norm_sqr() / cfg.n_users as f64;
        }
        println!(
            "{:>10.2} {:>14.4e} {:>14.4e}",
            noise_var,
            nmse_cold / trials as f64,
            nmse_genie / trials as f64
        );
    }
}
