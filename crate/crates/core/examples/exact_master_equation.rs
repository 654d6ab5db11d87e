//! Exact master-equation dynamics of 20 atoms, 8 of them pumped, at
//! emitter spacings λ and λ/2.
//!
//! The layout is first merged into as few collective spins as the couplings
//! allow, then only the populations within each excitation sector are
//! propagated.
//!
//! ```text
//! cargo run --example exact_master_equation
//! ```

use std::f64::consts::PI;

use wgdicke::coupling::{EnsembleLayout, WaveguideModel};
use wgdicke::dicke::{decompose_initial_state, predicted_lost_excitation};
use wgdicke::exact::{build_liouvillian, evolve_populations, initial_product_state, reduce_layout};
use wgdicke::experiments::LayoutTemplate;
use wgdicke::ode::IntegratorConfig;

fn main() -> wgdicke::Result<()> {
    let model = WaveguideModel::default();
    let (n, n_p) = (20, 8);
    for (spacing, sites, theta) in [("λ, θ = π", 1, PI), ("λ, θ = 2π/3", 1, 2.0 * PI / 3.0), ("λ/2, θ = 2π/3", 2, 2.0 * PI / 3.0)] {
        let layout = LayoutTemplate::spacing(sites).build(&model, n, n_p, theta)?;
        let reduced = reduce_layout(&model, &layout)?;
        let generator = build_liouvillian(&model, &reduced.layout)?;
        let state = initial_product_state(&reduced.layout)?;
        let config = IntegratorConfig { t_end: 100.0 / n as f64, ..IntegratorConfig::for_atoms(n, model.gamma1d) };
        let run = evolve_populations(&state, &generator, &config, true)?;

        let traj = &run.trajectory;
        let total = run.total_index();
        let lost = traj.initial()[total] - traj.last()[total];
        println!(
            "spacing {spacing}: {} spins, dim {}, {} steps, lost {lost:.4}, t = {:.3}/Γ",
            reduced.layout.len(),
            generator.basis().dim(),
            run.accepted_steps,
            traj.t_end()
        );
        for (name, v) in run.names.iter().zip(traj.last()) {
            println!("  {name:>10} = {v:.5}");
        }
        if let Some(d) = run.defects {
            println!("  worst trace error {:.1e}, min eigenvalue {:.1e}", d.trace_error, d.min_eigenvalue);
        }
    }
    let dist = decompose_initial_state(&EnsembleLayout::two_ensembles(n, n_p, PI, 1.0)?)?;
    println!("dark-state prediction at spacing λ: {:.4}", predicted_lost_excitation(&dist));
    Ok(())
}
