//! BER/NMSE sweep of the single-stream receiver over a computing-SNR grid,
//! built from an in-code scenario and printed as a table.
//!
//! Run with `cargo run --release --example snr_sweep`.

use icc::harness::{run_campaign, CampaignSection, Scenario, SystemSection};
use icc::model::{AlgorithmKind, Modulation};
use icc::{OmegaMode, SolverMode};

fn main() {
    let scenario = Scenario {
        system: SystemSection {
            n_antennas: 32,
            n_users: 16,
            n_streams: 1,
            data_power: 1.0,
            i_max: 30,
            beta_d: 0.5,
            beta_s: 0.8,
            beta_u: 0.3,
            sigma_u2: 1.0,
            base_seed: 0x1cc,
            modulation: Modulation::Qpsk,
            algorithm: AlgorithmKind::SingleStream,
            k_data_only: 0,
            k_compute_only: 0,
        },
        campaign: CampaignSection {
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 500,
            solver_mode: SolverMode::Direct,
            omega_mode: OmegaMode::AsPrinted,
            pin_kds: false,
            output_path: "snr_sweep.csv".into(),
        },
    };

    let rows = run_campaign(&scenario).expect("scenario validates");
    println!("single-stream receiver, N=32, K=16, 500 trials per point");
    println!("{:>8} {:>12} {:>12} {:>10}", "snr_db", "ber", "nmse", "nmse_db");
    for r in &rows {
        println!(
            "{:>8.1} {:>12.4e} {:>12.4e} {:>10.2}",
            r.snr_db,
            r.ber.unwrap_or(f64::NAN),
            r.nmse.unwrap_or(f64::NAN),
            r.nmse_db.unwrap_or(f64::NAN),
        );
    }
}
