//! Waveguide-mediated couplings between emitters.
//!
//! A single guided mode couples every pair of emitters with a coherent
//! exchange rate `Ω_ij = (Γ/2)·sin(k·x_ij)` and a collective decay rate
//! `Γ_ij = Γ·cos(k·x_ij)`, where `x_ij = |x_i − x_j|`. Both depend only on
//! the phase `k·x` modulo 2π, so positions are reduced to phases before any
//! trigonometry is evaluated.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-mode waveguide: decay rate into the mode and effective wavenumber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideModel {
    pub gamma1d: f64,
    pub k_eff: f64,
}

impl Default for WaveguideModel {
    /// `Γ = 1` and `λ_eff = 1`.
    fn default() -> Self {
        Self { gamma1d: 1.0, k_eff: TAU }
    }
}

impl WaveguideModel {
    pub fn new(gamma1d: f64, k_eff: f64) -> Result<Self> {
        let model = Self { gamma1d, k_eff };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1d.is_finite() && self.gamma1d > 0.0) {
            return Err(Error::InvalidModel(format!("gamma1d must be > 0, got {}", self.gamma1d)));
        }
        if !(self.k_eff.is_finite() && self.k_eff > 0.0) {
            return Err(Error::InvalidModel(format!("k_eff must be > 0, got {}", self.k_eff)));
        }
        Ok(())
    }

    /// Effective guided wavelength `2π / k_eff`.
    pub fn wavelength(&self) -> f64 {
        TAU / self.k_eff
    }

    /// Phase `k_eff·x` reduced to `[0, 2π)`.
    pub fn phase(&self, x: f64) -> f64 {
        (self.k_eff * x).rem_euclid(TAU)
    }

    /// Phase of `|x_i − x_j|`, computed from the reduced phases.
    ///
    /// The sign of the unreduced separation decides the orientation of the
    /// phase difference, which keeps `Ω` symmetric under `i ↔ j`.
    fn separation_phase(&self, x_i: f64, x_j: f64) -> f64 {
        let d = self.phase(x_i) - self.phase(x_j);
        let d = if x_i >= x_j { d } else { -d };
        d.rem_euclid(TAU)
    }

    /// Coherent exchange rate `Ω_ij`.
    pub fn omega_ij(&self, x_i: f64, x_j: f64) -> f64 {
        flush(0.5 * self.separation_phase(x_i, x_j).sin()) * self.gamma1d
    }

    /// Collective decay rate `Γ_ij`.
    pub fn gamma_ij(&self, x_i: f64, x_j: f64) -> f64 {
        flush(self.separation_phase(x_i, x_j).cos()) * self.gamma1d
    }
}

/// Relative couplings below this are rounding noise of `sin(π)` and friends.
pub const COUPLING_FLOOR: f64 = 1e-12;

fn flush(v: f64) -> f64 {
    if v.abs() < COUPLING_FLOOR {
        0.0
    } else {
        v
    }
}

/// One homogeneous group of emitters sharing a position and a preparation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubEnsemble {
    pub count: u64,
    pub position: f64,
    /// Pulse area θ in `[0, π]`; the excited population is `sin²(θ/2)`.
    pub pulse_area: f64,
    /// Pulse phase φ in `[0, 2π)`.
    pub pulse_phase: f64,
    pub pumped: bool,
}

impl SubEnsemble {
    /// A sub-ensemble in the ground state.
    pub fn ground(count: u64, position: f64) -> Self {
        Self { count, position, pulse_area: 0.0, pulse_phase: 0.0, pumped: false }
    }

    /// A sub-ensemble prepared by a coherent pulse of area `theta` and phase `phi`.
    pub fn pumped(count: u64, position: f64, theta: f64, phi: f64) -> Self {
        Self { count, position, pulse_area: theta, pulse_phase: phi, pumped: true }
    }

    /// Excited-state population after the pulse.
    pub fn initial_excitation(&self) -> f64 {
        if self.pumped {
            (0.5 * self.pulse_area).sin().powi(2)
        } else {
            0.0
        }
    }

    /// Effective pulse area: zero for non-pumped groups.
    pub fn effective_pulse_area(&self) -> f64 {
        if self.pumped {
            self.pulse_area
        } else {
            0.0
        }
    }
}

/// Ordered list of sub-ensembles along the waveguide.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLayout {
    pub subensembles: Vec<SubEnsemble>,
}

impl EnsembleLayout {
    pub fn new(subensembles: Vec<SubEnsemble>) -> Result<Self> {
        let layout = Self { subensembles };
        layout.validate()?;
        Ok(layout)
    }

    /// Pumped ensemble of `n_p` atoms at the origin and a ground-state
    /// ensemble of `n - n_p` atoms a distance `spacing` away.
    pub fn two_ensembles(n: u64, n_p: u64, theta: f64, spacing: f64) -> Result<Self> {
        if n_p == 0 || n_p >= n {
            return Err(Error::InvalidLayout(format!(
                "need 0 < n_p < n for two ensembles, got n = {n}, n_p = {n_p}"
            )));
        }
        Self::new(vec![
            SubEnsemble::pumped(n_p, 0.0, theta, 0.0),
            SubEnsemble::ground(n - n_p, spacing),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.subensembles.is_empty() {
            return Err(Error::InvalidLayout("layout has no sub-ensembles".into()));
        }
        for (a, s) in self.subensembles.iter().enumerate() {
            if s.count == 0 {
                return Err(Error::InvalidLayout(format!("sub-ensemble {a} is empty")));
            }
            if !(s.position.is_finite() && s.position >= 0.0) {
                return Err(Error::InvalidLayout(format!(
                    "sub-ensemble {a} has invalid position {}",
                    s.position
                )));
            }
            if !(0.0..=PI + 1e-12).contains(&s.pulse_area) {
                return Err(Error::InvalidLayout(format!(
                    "sub-ensemble {a} pulse area {} outside [0, π]",
                    s.pulse_area
                )));
            }
            if !(0.0..TAU).contains(&s.pulse_phase) {
                return Err(Error::InvalidLayout(format!(
                    "sub-ensemble {a} pulse phase {} outside [0, 2π)",
                    s.pulse_phase
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.subensembles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subensembles.is_empty()
    }

    pub fn total_atoms(&self) -> u64 {
        self.subensembles.iter().map(|s| s.count).sum()
    }

    pub fn pumped_atoms(&self) -> u64 {
        self.subensembles.iter().filter(|s| s.pumped).map(|s| s.count).sum()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.subensembles.iter().map(|s| s.count).collect()
    }

    /// Initial excitation fraction `E = Σ_a N_a⟨σ^ee_a⟩(0) / N`.
    pub fn excitation_fraction(&self) -> f64 {
        self.initial_excitations() / self.total_atoms() as f64
    }

    /// Total number of excitations right after the pulse.
    pub fn initial_excitations(&self) -> f64 {
        self.subensembles.iter().map(|s| s.count as f64 * s.initial_excitation()).sum()
    }
}

/// `Ω` and `Γ` between sub-ensembles.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrices {
    pub omega: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

pub fn build_matrices(model: &WaveguideModel, layout: &EnsembleLayout) -> Result<CouplingMatrices> {
    model.validate()?;
    layout.validate()?;
    let x: Vec<f64> = layout.subensembles.iter().map(|s| s.position).collect();
    let m = x.len();
    let omega = DMatrix::from_fn(m, m, |a, b| if a == b { 0.0 } else { model.omega_ij(x[a], x[b]) });
    let gamma = DMatrix::from_fn(m, m, |a, b| {
        if a == b {
            model.gamma1d
        } else {
            model.gamma_ij(x[a], x[b])
        }
    });
    Ok(CouplingMatrices { omega, gamma })
}

/// Rank-2 factorization `Γ = c cᵀ + s sᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpWeights {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl JumpWeights {
    /// Reassemble `c cᵀ + s sᵀ`.
    pub fn gamma(&self) -> DMatrix<f64> {
        let m = self.cos.len();
        DMatrix::from_fn(m, m, |a, b| self.cos[a] * self.cos[b] + self.sin[a] * self.sin[b])
    }

    /// Channels with non-negligible weight.
    pub fn channels(&self) -> Vec<&[f64]> {
        [self.cos.as_slice(), self.sin.as_slice()]
            .into_iter()
            .filter(|w| w.iter().any(|v| v.abs() > 1e-15))
            .collect()
    }
}

pub fn jump_operator_weights(model: &WaveguideModel, layout: &EnsembleLayout) -> JumpWeights {
    let amp = model.gamma1d.sqrt();
    let (cos, sin) = layout
        .subensembles
        .iter()
        .map(|s| {
            let p = model.phase(s.position);
            (amp * flush(p.cos()), amp * flush(p.sin()))
        })
        .unzip();
    JumpWeights { cos, sin }
}
