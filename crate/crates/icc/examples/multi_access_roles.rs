//! Mixed-access uplink: some users transmit only data, some only a
//! computing signal, some both. Compute-only users' data replicas are
//! pinned at zero; the `pin_kds` ablation additionally pins dual-role
//! users, trading their data for cleaner aggregation.
//!
//! Run with `cargo run --release --example multi_access_roles`.

use icc::metrics::hard_decision;
use icc::model::{self, Substream, SystemConfig, UserRole};
use icc::nomographic::{evaluate_target, make_selectors, NomographicKind};
use icc::receiver_icc::run_single_stream;
use icc::{PipelineOptions, SolverMode};

fn main() {
    let mut cfg = SystemConfig::new(32, 12);
    cfg.noise_var = 3.0;
    cfg.roles = vec![
        UserRole::DataOnly,
        UserRole::DataOnly,
        UserRole::DataOnly,
        UserRole::DataOnly,
        UserRole::ComputeOnly,
        UserRole::ComputeOnly,
        UserRole::ComputeOnly,
        UserRole::ComputeOnly,
        UserRole::Both,
        UserRole::Both,
        UserRole::Both,
        UserRole::Both,
    ];
    cfg.stream_assignment = cfg
        .roles
        .iter()
        .map(|r| if *r == UserRole::DataOnly { None } else { Some(1) })
        .collect();
    let selectors = make_selectors(&cfg.roles, &cfg.stream_assignment, 1).unwrap();
    let trials = 200u64;

    for pin_kds in [false, true] {
        let opts = PipelineOptions {
            solver: SolverMode::Direct,
            pin_kds,
            ..PipelineOptions::default()
        };
        let mut bit_errors = 0usize;
        let mut bits = 0usize;
        let mut nmse_acc = 0.0;
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
            let out = run_single_stream(&rx, &ch, &cfg, &opts).unwrap();

            // Count bits only for users whose data the receiver estimates.
            for k in 0..cfg.n_users {
                let skipped = cfg.roles[k] == UserRole::ComputeOnly
                    || (pin_kds && cfg.roles[k] == UserRole::Both);
                if skipped {
                    continue;
                }
                let decided = hard_decision(out.d_hat[k]);
                bit_errors += usize::from(decided[0] != frame.bits[k][0])
                    + usize::from(decided[1] != frame.bits[k][1]);
                bits += 2;
            }
            let (target, _) =
                evaluate_target(NomographicKind::Sum, &frame.s, &selectors[0]).unwrap();
            nmse_acc += (target - out.f_hat[0]).norm_sqr() / cfg.n_users as f64;
        }
        println!(
            "pin_kds={pin_kds:<5} detected users' BER {:.4e} ({bits} bits), mean NMSE {:.4e}",
            bit_errors as f64 / bits as f64,
            nmse_acc / trials as f64
        );
    }
    println!("roles: 4 data-only, 4 compute-only, 4 dual; N=32, {trials} trials");
}
