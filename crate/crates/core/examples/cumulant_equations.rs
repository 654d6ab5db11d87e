//! Second-order cumulant equations: derivation and a 10⁴-atom run.
//!
//! ```text
//! cargo run --example cumulant_equations
//! ```

use std::f64::consts::PI;

use wgdicke::coupling::{EnsembleLayout, WaveguideModel};
use wgdicke::cumulant::{derive_system, evolve, MomentSystem};
use wgdicke::ode::IntegratorConfig;

fn main() -> wgdicke::Result<()> {
    let symbolic = derive_system(2)?;
    print!("{}", symbolic.listing());
    for m in [8, 12] {
        let s = derive_system(m)?;
        println!("{m} sub-ensembles: {} equations, {} with conjugates", s.len(), s.count_with_conjugates());
    }

    let model = WaveguideModel::default();
    let n = 10_000;
    for (label, theta) in [("π", PI), ("2π/3", 2.0 * PI / 3.0)] {
        let layout = EnsembleLayout::two_ensembles(n, 4_000, theta, 1.0)?;
        let system = MomentSystem::new(&model, &layout)?;
        let config = IntegratorConfig { stop_at_steady: true, ..IntegratorConfig::for_atoms(n, model.gamma1d) };
        let run = evolve(&system, &system.initial_state(&layout)?, &config)?;
        let (first, last) = (run.trajectory.initial(), run.trajectory.last());
        let lost = first[run.total_index()] - last[run.total_index()];
        println!(
            "N = {n}, 40 % pumped, θ = {label}: lost {lost:.2} of {:.0} excitations, ⟨σ^ee_p⟩ = {:.4}, ⟨σ^ee_np⟩ = {:.2e}, steady at {:?}",
            first[run.total_index()],
            last[0],
            last[1],
            run.steady_time
        );
    }
    Ok(())
}
