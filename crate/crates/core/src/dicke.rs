//! Dicke-state analysis of two collective spins.
//!
//! A product of two coherent spin states is expanded in the total angular
//! momentum basis `|J, M⟩`. Under pure collective decay `J` is conserved and
//! `M` decreases until `M = −J`, so the expansion alone predicts how many
//! excitations are lost before the system becomes dark.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clebsch::{clebsch_gordan, ln_binomial};
use crate::coupling::{EnsembleLayout, SubEnsemble};
use crate::error::{Error, Result};
use crate::half::Half;

/// Entries smaller than this are dropped from a distribution.
pub const PRUNE_BELOW: f64 = 1e-14;

/// Amplitudes of the coherent spin state of `n` atoms, indexed by the number
/// of excitations `k = j + m`.
///
/// Each atom is in `cos(θ/2)|g⟩ + e^{iφ} sin(θ/2)|e⟩`.
pub fn coherent_amplitudes(n: u64, theta: f64, phi: f64) -> Vec<Complex64> {
    let c = (0.5 * theta).cos().abs();
    let s = (0.5 * theta).sin().abs();
    (0..=n)
        .map(|k| {
            let mut ln_mag = 0.5 * ln_binomial(n, k);
            if k < n {
                ln_mag += (n - k) as f64 * c.ln();
            }
            if k > 0 {
                ln_mag += k as f64 * s.ln();
            }
            Complex64::from_polar(ln_mag.exp(), k as f64 * phi)
        })
        .collect()
}

/// Amplitudes of one sub-ensemble's initial collective state.
pub fn subensemble_amplitudes(s: &SubEnsemble) -> Vec<Complex64> {
    coherent_amplitudes(s.count, s.effective_pulse_area(), s.pulse_phase)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeEntry {
    pub j: Half,
    pub m: Half,
    pub population: f64,
}

/// Populations `P(J, M)` of total-spin states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeDistribution {
    pub spins: (Half, Half),
    pub entries: Vec<DickeEntry>,
}

/// One row of the columnar `(J, M, P)` export.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DickeRow {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "P")]
    pub p: f64,
}

impl DickeDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.population).sum()
    }

    pub fn get(&self, j: Half, m: Half) -> f64 {
        self.entries
            .iter()
            .find(|e| e.j == j && e.m == m)
            .map_or(0.0, |e| e.population)
    }

    /// Marginal distribution over `M`.
    pub fn m_marginal(&self) -> Vec<(Half, f64)> {
        let mut out: Vec<(Half, f64)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(m, _)| *m == e.m) {
                Some((_, p)) => *p += e.population,
                None => out.push((e.m, e.population)),
            }
        }
        out.sort_by_key(|(m, _)| *m);
        out
    }

    pub fn rows(&self) -> Vec<DickeRow> {
        self.entries
            .iter()
            .map(|e| DickeRow { j: e.j.value(), m: e.m.value(), p: e.population })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Expand the initial product state of a two-ensemble layout in `|J, M⟩`.
pub fn decompose_initial_state(layout: &EnsembleLayout) -> Result<DickeDistribution> {
    layout.validate()?;
    if layout.len() != 2 {
        return Err(Error::InvalidLayout(format!(
            "Dicke decomposition needs exactly 2 sub-ensembles, got {}",
            layout.len()
        )));
    }
    let (s1, s2) = (&layout.subensembles[0], &layout.subensembles[1]);
    let j1 = Half::spin_of(s1.count);
    let j2 = Half::spin_of(s2.count);
    let a1 = sparse_amplitudes(&subensemble_amplitudes(s1));
    let a2 = sparse_amplitudes(&subensemble_amplitudes(s2));

    let j_min = (j1 - j2).abs();
    let j_max = j1 + j2;
    let mut entries = Vec::new();
    let mut big_j = j_min;
    while big_j <= j_max {
        let mut m = -big_j;
        while m <= big_j {
            let mut amp = Complex64::new(0.0, 0.0);
            for &(k1, c1) in &a1 {
                let m1 = Half::from_int(k1 as i64) - j1;
                let m2 = m - m1;
                if m2.abs() > j2 {
                    continue;
                }
                let k2 = (m2 + j2).to_int() as usize;
                let Some(c2) = a2.iter().find(|(k, _)| *k == k2).map(|(_, c)| *c) else {
                    continue;
                };
                amp += c1 * c2 * clebsch_gordan(j1, m1, j2, m2, big_j, m)?;
            }
            let p = amp.norm_sqr();
            if p >= PRUNE_BELOW {
                entries.push(DickeEntry { j: big_j, m, population: p });
            }
            m = m + Half::from_int(1);
        }
        big_j = big_j + Half::from_int(1);
    }
    Ok(DickeDistribution { spins: (j1, j2), entries })
}

fn sparse_amplitudes(amps: &[Complex64]) -> Vec<(usize, Complex64)> {
    amps.iter()
        .copied()
        .enumerate()
        .filter(|(_, c)| c.norm_sqr() >= PRUNE_BELOW * PRUNE_BELOW)
        .collect()
}

/// Excitations lost before the state becomes dark, `Σ P(J,M)·(M + J)`.
///
/// Valid for pure collective decay: all sub-ensembles at multiples of
/// `λ_eff` with no coherent exchange.
pub fn predicted_lost_excitation(dist: &DickeDistribution) -> f64 {
    dist.entries.iter().map(|e| e.population * (e.m + e.j).value()).sum()
}

/// Large-`N` number of excitations lost after fully inverting `n_p` of the
/// atoms, `N_p / (N_np − N_p)`.
pub fn saturation_limit(n_p: u64, n_np: u64) -> Result<f64> {
    if n_p == 0 {
        return Ok(0.0);
    }
    if n_np <= n_p {
        return Err(Error::InvalidLayout(format!(
            "saturation limit needs N_np > N_p, got N_p = {n_p}, N_np = {n_np}"
        )));
    }
    Ok(n_p as f64 / (n_np - n_p) as f64)
}
