//! Coherent exchange with each ensemble spread over four positions per
//! wavelength: π versus 2π/3 pulses, and 2π/3 with alternating phases.
//!
//! ```text
//! cargo run --example position_sampling
//! ```

use std::f64::consts::PI;

use wgdicke::coupling::WaveguideModel;
use wgdicke::experiments::{position_sampled_run, IntegratorSettings, PositionSampling};

fn main() -> wgdicke::Result<()> {
    let model = WaveguideModel::default();
    let settings = IntegratorSettings { horizon: 1000.0, ..IntegratorSettings::default() };
    let cases = [
        ("θ = π", PI, false),
        ("θ = 2π/3", 2.0 * PI / 3.0, false),
        ("θ = 2π/3, phases 0 and π", 2.0 * PI / 3.0, true),
    ];
    for positions in [4, 6] {
        for (label, theta, opposite_phases) in cases {
            let sampling = PositionSampling { n: 1_000, n_p: 800, theta, positions, opposite_phases, zero_omega: false };
            let run = position_sampled_run(&model, &sampling, &settings)?;
            let (p, np) = run.steady_populations();
            println!("{positions} positions, {label}: ⟨σ^ee_p⟩ = {p:.4}, ⟨σ^ee_np⟩ = {np:.4}, T_sa = {:.3e}/Γ", run.transfer_time()?);
        }
    }
    Ok(())
}
