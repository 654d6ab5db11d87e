//! Named scan configurations, one per figure panel.
//!
//! Every preset has a `-small` twin sized for a desktop. Full presets reach
//! `N = 10⁶` where the figure does; they run, but take a while.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coupling::EnsembleLayout;
use crate::dicke::{decompose_initial_state, DickeDistribution};
use crate::error::{Error, Result};
use crate::experiments::{
    Axes, IntegratorSettings, LayoutTemplate, Metric, PulseAxis, PumpAxis, Scenario, Solver,
};

/// `(J, M, P)` table for a two-ensemble preparation on a `λ_eff` lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeTable {
    pub name: String,
    pub n: u64,
    pub n_p: u64,
    pub theta: f64,
}

impl DickeTable {
    pub fn distribution(&self) -> Result<DickeDistribution> {
        decompose_initial_state(&EnsembleLayout::two_ensembles(self.n, self.n_p, self.theta, 1.0)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub figure: String,
    pub summary: String,
    /// What the output should show.
    pub expectation: String,
    pub scenarios: Vec<Scenario>,
    pub dicke: Vec<DickeTable>,
}

impl Preset {
    /// Grid axes of every scan plus the expected outcome.
    pub fn describe(&self) -> String {
        let mut out = format!("{} ({}): {}\n", self.name, self.figure, self.summary);
        for s in &self.scenarios {
            let pump = match &s.axes.pump {
                PumpAxis::Fraction(v) => format!("N_p/N = {v:?}"),
                PumpAxis::Excitation(v) => format!("E = {v:?}"),
            };
            let pulse = match &s.axes.pulse {
                PulseAxis::Theta(v) => format!("θ = {:?}", v.iter().map(|t| round4(t / PI)).collect::<Vec<_>>()) + "·π",
                PulseAxis::Population(v) => format!("⟨σ^ee_p⟩(0) = {v:?}"),
            };
            out += &format!(
                "  scan {}: solver {}, N = {:?}, {pump}, {pulse}, spacing λ_eff/{}{}{}, horizon {}/(NΓ)\n",
                s.name,
                s.solver,
                s.axes.n,
                s.layout.sites,
                if s.layout.opposite_phases { ", opposite pulse phases" } else { "" },
                if s.layout.zero_omega { ", Ω = 0" } else { "" },
                s.integrator.horizon,
            );
        }
        for d in &self.dicke {
            out += &format!("  Dicke table {}: N = {}, N_p = {}, θ = {}·π\n", d.name, d.n, d.n_p, round4(d.theta / PI));
        }
        out += &format!("  expected: {}\n", self.expectation);
        out
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| round4(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

fn scenario(name: &str, solver: Solver, sites: usize, n: Vec<u64>, pump: PumpAxis, pulse: PulseAxis) -> Scenario {
    Scenario::new(name, solver, LayoutTemplate::spacing(sites), Axes { n, pump, pulse })
}

fn with_metrics(mut s: Scenario, metrics: &[Metric]) -> Scenario {
    s.metrics = metrics.to_vec();
    s
}

fn evolution(mut s: Scenario, horizon: f64) -> Scenario {
    s.trajectory_samples = 400;
    s.integrator = IntegratorSettings { horizon, ..IntegratorSettings::default() };
    s
}

const TWO_THIRDS_PI: f64 = 2.0 * PI / 3.0;

struct Sizes {
    scan_n: Vec<u64>,
    fractions: Vec<f64>,
    big_n: u64,
    map_points: usize,
    tsa_n: Vec<u64>,
    evolution_n: u64,
}

fn sizes(small: bool) -> Sizes {
    if small {
        Sizes {
            scan_n: vec![40, 100, 400, 1000],
            fractions: vec![0.1, 0.25, 0.4],
            big_n: 10_000,
            map_points: 8,
            tsa_n: vec![100, 1000, 10_000],
            evolution_n: 1000,
        }
    } else {
        Sizes {
            scan_n: vec![20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000, 100_000, 1_000_000],
            fractions: vec![0.1, 0.2, 0.3, 0.4, 0.45],
            big_n: 1_000_000,
            map_points: 20,
            tsa_n: vec![100, 1000, 10_000, 100_000, 1_000_000],
            evolution_n: 10_000,
        }
    }
}

fn build(base: &str, small: bool) -> Option<Preset> {
    let z = sizes(small);
    let name = if small { format!("{base}-small") } else { base.to_string() };
    let tag = |s: &str| format!("{name}{s}");
    let theta = |v: f64| PulseAxis::Theta(vec![v]);
    let frac = |v: Vec<f64>| PumpAxis::Fraction(v);
    let lost = [Metric::Lost, Metric::Steady];
    let mut dicke = Vec::new();

    let (figure, summary, expectation, scenarios) = match base {
        "fig2a" => (
            "Fig. 2a",
            "percentage of lost excitation after fully inverting N_p atoms, spacing λ_eff",
            "lost_frac falls with N for every N_p/N < 1/2",
            vec![with_metrics(scenario(&name, Solver::Cumulant, 1, z.scan_n.clone(), frac(z.fractions.clone()), theta(PI)), &lost)],
        ),
        "fig2b" => {
            let mut v = vec![with_metrics(
                scenario(&name, Solver::Cumulant, 1, z.scan_n.clone(), frac(z.fractions.clone()), theta(PI)),
                &lost,
            )];
            v.push(with_metrics(
                scenario(&tag("-dicke"), Solver::DickeAnalytic, 1, vec![40, 100], frac(z.fractions.clone()), theta(PI)),
                &[Metric::Lost],
            ));
            v.push(with_metrics(
                scenario(&tag("-exact"), Solver::Exact, 1, vec![20, 40], frac(z.fractions.clone()), theta(PI)),
                &lost,
            ));
            (
                "Fig. 2b",
                "absolute number of lost excitations after fully inverting N_p atoms, spacing λ_eff",
                "lost_abs approaches N_p/(N_np − N_p) from below; Dicke and exact points agree with each other",
                v,
            )
        }
        "fig2c" | "fig2f" => {
            let th = if base == "fig2c" { PI } else { TWO_THIRDS_PI };
            dicke.push(DickeTable { name: tag("-jmp"), n: 20, n_p: 8, theta: th });
            (
                if base == "fig2c" { "Fig. 2c" } else { "Fig. 2f" },
                "Dicke-state populations for N = 20, N_p = 8",
                "predicted loss Σ P(J,M)(M+J) equals the exact steady loss",
                vec![
                    with_metrics(scenario(&name, Solver::Exact, 1, vec![20], frac(vec![0.4]), theta(th)), &lost),
                    with_metrics(scenario(&tag("-dicke"), Solver::DickeAnalytic, 1, vec![20], frac(vec![0.4]), theta(th)), &[Metric::Lost]),
                ],
            )
        }
        "fig2c-dicke" | "fig2f-dicke" => {
            let th = if base == "fig2c-dicke" { PI } else { TWO_THIRDS_PI };
            dicke.push(DickeTable { name: name.clone(), n: 20, n_p: 8, theta: th });
            (
                if base == "fig2c-dicke" { "Fig. 2c" } else { "Fig. 2f" },
                "(J, M, P) table for the Dicke triangle, N = 20, N_p = 8",
                "populations sum to one",
                vec![],
            )
        }
        "fig2d" => {
            let pops = if small { vec![0.25, 0.5, 0.6, 0.75, 0.9, 1.0] } else { linspace(0.05, 1.0, 20) };
            let fr = if small { vec![0.2, 0.4] } else { vec![0.1, 0.2, 0.3, 0.4, 0.5] };
            (
                "Fig. 2d",
                "lost fraction after coherent pulses of varying strength, N = 10⁴, spacing λ_eff",
                "weaker pulses can lose more than a π pulse",
                vec![with_metrics(
                    scenario(&name, Solver::Cumulant, 1, vec![10_000], frac(fr), PulseAxis::Population(pops)),
                    &lost,
                )],
            )
        }
        "fig2e" => {
            let n = if small { vec![100, 1000, 10_000] } else { z.scan_n.clone() };
            (
                "Fig. 2e",
                "lost excitation after a 2π/3 pulse, spacing λ_eff",
                "lost_abs keeps growing with N instead of saturating",
                vec![with_metrics(scenario(&name, Solver::Cumulant, 1, n, frac(z.fractions.clone()), theta(TWO_THIRDS_PI)), &lost)],
            )
        }
        "fig3" => {
            let axis = linspace(0.05, 0.95, z.map_points);
            let pops = linspace(1.0 / z.map_points as f64, 1.0, z.map_points);
            let map = |suffix: &str, sites: usize| {
                with_metrics(
                    scenario(&tag(suffix), Solver::Cumulant, sites, vec![z.big_n], frac(axis.clone()), PulseAxis::Population(pops.clone())),
                    &lost,
                )
            };
            (
                "Fig. 3",
                "steady populations and lost fraction over N_p/N and pulse strength, spacings λ_eff and λ_eff/2",
                "for λ_eff/2 a sharp threshold along ⟨σ^ee_p⟩(0)·N_p/N = 1/2; for λ_eff the threshold only holds for π pulses",
                vec![map("-lambda", 1), map("-half-lambda", 2)],
            )
        }
        "fig4a" => (
            "Fig. 4a",
            "transfer time T_sa against N, π pulse on 80 % of the atoms, spacing λ_eff/2",
            "log-log slope close to −1",
            vec![scenario(&name, Solver::Cumulant, 2, z.tsa_n.clone(), frac(vec![0.8]), theta(PI))],
        ),
        "fig4b" => {
            let e = if small { vec![0.55, 0.7, 0.9] } else { linspace(0.55, 0.95, 9) };
            let pops = if small { vec![1.0, 0.9, 0.75] } else { vec![1.0, 0.9, 0.8, 0.75, 0.6] };
            (
                "Fig. 4b",
                "transfer time against initial excitation E for several pulse strengths, N = 10⁴, spacing λ_eff/2",
                "far above threshold T_sa depends on E only; near threshold full inversion of fewer atoms is faster",
                vec![scenario(&name, Solver::Cumulant, 2, vec![10_000], PumpAxis::Excitation(e), PulseAxis::Population(pops))],
            )
        }
        "fig5a" | "fig5b" | "fig5c" => {
            let (th, split, figure, summary, expectation) = match base {
                "fig5a" => (PI, false, "Fig. 5a", "time evolution with coherent exchange, π pulse, four positions",
                    "only slightly slower than without Ω; transfer above threshold stays near complete"),
                "fig5b" => (TWO_THIRDS_PI, false, "Fig. 5b", "time evolution with coherent exchange, 2π/3 pulse, four positions",
                    "degraded subradiance and transfer, similar to spacing λ_eff"),
                _ => (TWO_THIRDS_PI, true, "Fig. 5c", "time evolution with coherent exchange, 2π/3 pulse split into opposite phases",
                    "near-optimal subradiance below and transfer above threshold"),
            };
            let mut s = evolution(scenario(&name, Solver::Cumulant, 4, vec![z.evolution_n], frac(vec![0.2, 0.8]), theta(th)), 1000.0);
            s.layout.opposite_phases = split;
            (figure, summary, expectation, vec![s])
        }
        "fig6" => {
            let run = |suffix: &str, sites: usize, th: f64, zero_omega: bool| {
                let mut s = evolution(scenario(&tag(suffix), Solver::Cumulant, sites, vec![z.evolution_n], frac(vec![0.2, 0.8]), theta(th)), 1000.0);
                s.layout.zero_omega = zero_omega;
                s
            };
            (
                "Fig. 6",
                "four against six positions per ensemble, and four positions without Ω",
                "steady populations of four and six positions within 0.1; dropping Ω changes little for π pulses",
                vec![
                    run("-4pos-pi", 4, PI, false),
                    run("-6pos-pi", 6, PI, false),
                    run("-4pos-2pi3", 4, TWO_THIRDS_PI, false),
                    run("-6pos-2pi3", 6, TWO_THIRDS_PI, false),
                    run("-4pos-pi-no-omega", 4, PI, true),
                ],
            )
        }
        _ => return None,
    };
    Some(Preset {
        name,
        figure: figure.into(),
        summary: summary.into(),
        expectation: expectation.into(),
        scenarios,
        dicke,
    })
}

/// Base names in catalog order.
pub const BASE_NAMES: [&str; 15] = [
    "fig2a", "fig2b", "fig2c", "fig2c-dicke", "fig2d", "fig2e", "fig2f", "fig2f-dicke", "fig3", "fig4a", "fig4b",
    "fig5a", "fig5b", "fig5c", "fig6",
];

/// Every preset, each followed by its `-small` twin.
pub fn catalog() -> Vec<Preset> {
    BASE_NAMES
        .iter()
        .flat_map(|b| [build(b, false), build(b, true)])
        .flatten()
        .collect()
}

pub fn find(name: &str) -> Result<Preset> {
    let (base, small) = match name.strip_suffix("-small") {
        Some(b) => (b, true),
        None => (name, false),
    };
    build(base, small).ok_or_else(|| Error::UnknownPreset(name.into()))
}
