//! Total-spin content of a partially inverted ensemble.
//!
//! Prints the `M` marginal for π and 2π/3 pulses on 8 of 20 atoms, the loss
//! predicted from the populations of dark states, and the `(J, M, P)` table
//! of the π case as CSV.
//!
//! ```text
//! cargo run --example dicke_triangle > triangle.csv
//! ```

use std::f64::consts::PI;

use wgdicke::coupling::EnsembleLayout;
use wgdicke::dicke::{decompose_initial_state, predicted_lost_excitation, saturation_limit};

fn main() -> wgdicke::Result<()> {
    let (n, n_p) = (20, 8);
    for (label, theta) in [("π", PI), ("2π/3", 2.0 * PI / 3.0)] {
        let dist = decompose_initial_state(&EnsembleLayout::two_ensembles(n, n_p, theta, 1.0)?)?;
        eprintln!("θ = {label}: Σ P = {:.12}", dist.total());
        for (m, p) in dist.m_marginal() {
            eprintln!("  M = {:>5.1}  P = {p:.5}", m.value());
        }
        eprintln!("  predicted lost excitation: {:.4}", predicted_lost_excitation(&dist));
    }
    eprintln!("large-N limit for π: {:.4}", saturation_limit(n_p, n - n_p)?);

    let dist = decompose_initial_state(&EnsembleLayout::two_ensembles(n, n_p, PI, 1.0)?)?;
    dist.write_csv(std::io::stdout().lock())
}
