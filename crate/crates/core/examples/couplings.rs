//! Waveguide-mediated couplings between four sub-ensembles a quarter
//! wavelength apart.
//!
//! ```text
//! cargo run --example couplings
//! ```

use nalgebra::SymmetricEigen;
use wgdicke::coupling::{build_matrices, jump_operator_weights, EnsembleLayout, SubEnsemble, WaveguideModel};

fn main() -> wgdicke::Result<()> {
    let model = WaveguideModel::default();
    let lambda = model.wavelength();
    let layout = EnsembleLayout::new((0..4).map(|k| SubEnsemble::ground(10, k as f64 * lambda / 4.0)).collect())?;

    let m = build_matrices(&model, &layout)?;
    println!("Ω_ab / Γ:{}", m.omega);
    println!("Γ_ab / Γ:{}", m.gamma);

    let eig = SymmetricEigen::new(m.gamma.clone());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    println!("eigenvalues of Γ: {ev:.3?}");

    let w = jump_operator_weights(&model, &layout);
    println!("cos channel: {:.3?}", w.cos);
    println!("sin channel: {:.3?}", w.sin);
    let residual = (w.gamma() - &m.gamma).abs().max();
    println!("|c cᵀ + s sᵀ - Γ|_max = {residual:.1e}");
    Ok(())
}
