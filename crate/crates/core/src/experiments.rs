//! Scenarios, parameter scans and the metrics behind each figure.
//!
//! A [`Scenario`] fixes the waveguide, a layout template, a solver and a
//! grid over atom number, pumped fraction and pulse. [`run_scan`] runs every
//! grid point on a worker pool and returns one [`MetricRecord`] per point in
//! canonical grid order.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{EnsembleLayout, SubEnsemble, WaveguideModel};
use crate::cumulant::{self, CumulantOptions, MomentSystem};
use crate::dicke::{decompose_initial_state, predicted_lost_excitation};
use crate::error::{Error, Result};
use crate::exact::{self, CollectiveBasis, ExactOptions, DEFAULT_DIM_CAP};
use crate::ode::{detect_event, detect_steady_state, Direction, EventSpec, IntegratorConfig, SteadySpec, Trajectory};

/// Fraction of the final non-pumped population that defines `T_sa`.
pub const TRANSFER_FRACTION: f64 = 0.95;

/// Initial excitation fraction separating sub- from superradiance.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Exact,
    Cumulant,
    DickeAnalytic,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Exact => "exact",
            Solver::Cumulant => "cumulant",
            Solver::DickeAnalytic => "dicke-analytic",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Solver::Exact),
            "cumulant" => Ok(Solver::Cumulant),
            "dicke-analytic" | "dicke" => Ok(Solver::DickeAnalytic),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

/// Placement of both ensembles along the waveguide.
///
/// Each ensemble is spread evenly over `sites` lattice phases at
/// `k·λ_eff/sites`, which is how a spacing of `λ_eff/sites` between
/// neighbouring emitters is represented with collective spins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutTemplate {
    pub sites: usize,
    /// Split every pumped site into halves excited with phases `φ` and `φ + π`.
    pub opposite_phases: bool,
    pub pulse_phase: f64,
    /// Keep the collective decay but drop the coherent exchange.
    pub zero_omega: bool,
}

impl Default for LayoutTemplate {
    fn default() -> Self {
        Self { sites: 1, opposite_phases: false, pulse_phase: 0.0, zero_omega: false }
    }
}

impl LayoutTemplate {
    pub fn spacing(sites: usize) -> Self {
        Self { sites, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::Config("layout needs at least one site".into()));
        }
        if !(0.0..TAU).contains(&self.pulse_phase) {
            return Err(Error::Config(format!("pulse phase {} outside [0, 2π)", self.pulse_phase)));
        }
        Ok(())
    }

    /// Sub-ensembles for `n_p` pumped and `n − n_p` ground atoms.
    ///
    /// Counts are split as evenly as possible with the remainder on the
    /// lowest sites; empty groups are dropped.
    pub fn build(&self, model: &WaveguideModel, n: u64, n_p: u64, theta: f64) -> Result<EnsembleLayout> {
        self.validate()?;
        let lambda = model.wavelength();
        let k = self.sites as u64;
        let x = |site: u64| site as f64 * lambda / k as f64;
        let mut subs = Vec::new();
        for site in 0..k {
            let c = share(n_p, k, site);
            if self.opposite_phases {
                let flipped = (self.pulse_phase + PI).rem_euclid(TAU);
                for (half, phi) in [(0, self.pulse_phase), (1, flipped)] {
                    let h = share(c, 2, half);
                    if h > 0 {
                        subs.push(SubEnsemble::pumped(h, x(site), theta, phi));
                    }
                }
            } else if c > 0 {
                subs.push(SubEnsemble::pumped(c, x(site), theta, self.pulse_phase));
            }
        }
        for site in 0..k {
            let c = share(n - n_p, k, site);
            if c > 0 {
                subs.push(SubEnsemble::ground(c, x(site)));
            }
        }
        EnsembleLayout::new(subs)
    }
}

/// Part `i` of `total` split into `parts` near-equal pieces.
fn share(total: u64, parts: u64, i: u64) -> u64 {
    total / parts + u64::from(i < total % parts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpAxis {
    /// Pumped fractions `N_p/N`.
    Fraction(Vec<f64>),
    /// Initial excitation fractions `E = ⟨σ^ee_p⟩(0)·N_p/N`; `N_p` follows from the pulse.
    Excitation(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseAxis {
    /// Pulse areas θ.
    Theta(Vec<f64>),
    /// Initial pumped populations `sin²(θ/2)`.
    Population(Vec<f64>),
}

impl PulseAxis {
    fn thetas(&self) -> Vec<f64> {
        match self {
            PulseAxis::Theta(v) => v.clone(),
            PulseAxis::Population(v) => v.iter().map(|&p| 2.0 * p.clamp(0.0, 1.0).sqrt().asin()).collect(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            PulseAxis::Theta(v) | PulseAxis::Population(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub n: Vec<u64>,
    pub pump: PumpAxis,
    pub pulse: PulseAxis,
}

/// One `(N, N_p, θ)` combination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: u64,
    pub n_p: u64,
    pub theta: f64,
}

impl GridPoint {
    pub fn np_frac(&self) -> f64 {
        self.n_p as f64 / self.n as f64
    }

    /// Excited population of a pumped atom after the pulse.
    pub fn population(&self) -> f64 {
        (0.5 * self.theta).sin().powi(2)
    }

    /// Initial excitation fraction `E`.
    pub fn excitation(&self) -> f64 {
        self.population() * self.np_frac()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Lost,
    Steady,
    Tsa,
}

/// Integrator settings in units of the collective rate `N·Γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `t_end · NΓ`.
    pub horizon: f64,
    /// Quiet window `· NΓ`.
    pub steady_window: f64,
    /// Slope threshold `/ NΓ`.
    pub steady_slope: f64,
    pub stop_at_steady: bool,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            horizon: 100.0,
            steady_window: 5.0,
            steady_slope: 1e-6,
            stop_at_steady: true,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorSettings {
    pub fn config(&self, n: u64, gamma1d: f64) -> IntegratorConfig {
        let rate = n as f64 * gamma1d;
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            t_end: self.horizon / rate,
            steady_window: self.steady_window / rate,
            steady_slope: self.steady_slope * rate,
            stop_at_steady: self.stop_at_steady,
            max_steps: self.max_steps,
            ..IntegratorConfig::default()
        }
    }

    /// Both tolerances halved.
    pub fn refined(&self) -> Self {
        Self { rel_tol: 0.5 * self.rel_tol, abs_tol: 0.5 * self.abs_tol, ..self.clone() }
    }
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Lost, Metric::Steady, Metric::Tsa]
}

fn default_dim_cap() -> usize {
    DEFAULT_DIM_CAP
}

/// A scan over one layout family with one solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub model: WaveguideModel,
    #[serde(default)]
    pub layout: LayoutTemplate,
    pub solver: Solver,
    pub axes: Axes,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    /// Samples of the time series kept per point; zero keeps none.
    #[serde(default)]
    pub trajectory_samples: usize,
    #[serde(default = "default_dim_cap")]
    pub dim_cap: usize,
}

impl Scenario {
    pub fn new(name: &str, solver: Solver, layout: LayoutTemplate, axes: Axes) -> Self {
        Self {
            name: name.into(),
            model: WaveguideModel::default(),
            layout,
            solver,
            axes,
            metrics: default_metrics(),
            integrator: IntegratorSettings::default(),
            trajectory_samples: 0,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }

    /// Grid points in canonical order: `N` outermost, then pump, then pulse.
    ///
    /// Excitation targets that would need more pumped atoms than exist, or
    /// none at all, are skipped.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let thetas = self.axes.pulse.thetas();
        let mut points = Vec::new();
        for &n in &self.axes.n {
            match &self.axes.pump {
                PumpAxis::Fraction(fracs) => {
                    for &f in fracs {
                        let n_p = ((f * n as f64).round() as u64).clamp(1, n);
                        points.extend(thetas.iter().map(|&theta| GridPoint { n, n_p, theta }));
                    }
                }
                PumpAxis::Excitation(targets) => {
                    for &e in targets {
                        for &theta in &thetas {
                            let pop = (0.5 * theta).sin().powi(2);
                            if pop <= 0.0 {
                                continue;
                            }
                            let n_p = (e * n as f64 / pop).round();
                            if n_p >= 1.0 && n_p <= n as f64 {
                                points.push(GridPoint { n, n_p: n_p as u64, theta });
                            }
                        }
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(Error::Config(format!("scenario `{}` has an empty grid", self.name)));
        }
        Ok(points)
    }

    pub fn layout_for(&self, point: &GridPoint) -> Result<EnsembleLayout> {
        self.layout.build(&self.model, point.n, point.n_p, point.theta)
    }

    /// Checks everything that can be checked without integrating.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.layout.validate()?;
        if self.axes.n.is_empty() || self.axes.pulse.values().is_empty() {
            return Err(Error::Config(format!("scenario `{}` has an empty axis", self.name)));
        }
        if let Some(&n) = self.axes.n.iter().find(|&&n| n < 1) {
            return Err(Error::Config(format!("atom number {n} must be positive")));
        }
        let pump = match &self.axes.pump {
            PumpAxis::Fraction(v) | PumpAxis::Excitation(v) => v,
        };
        if pump.is_empty() || pump.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("scenario `{}` needs pump values in [0, 1]", self.name)));
        }
        match &self.axes.pulse {
            PulseAxis::Theta(v) if v.iter().any(|t| !(0.0..=PI).contains(t)) => {
                return Err(Error::Config("pulse areas must lie in [0, π]".into()))
            }
            PulseAxis::Population(v) if v.iter().any(|p| !(0.0..=1.0).contains(p)) => {
                return Err(Error::Config("pulse populations must lie in [0, 1]".into()))
            }
            _ => {}
        }
        let s = &self.integrator;
        if !(s.rel_tol > 0.0 && s.abs_tol > 0.0 && s.horizon > 0.0 && s.steady_window > 0.0 && s.steady_slope > 0.0) {
            return Err(Error::Config("integrator settings must be positive".into()));
        }
        for point in self.grid()? {
            let layout = self.layout_for(&point)?;
            match self.solver {
                Solver::Exact => {
                    let reduced = exact::reduce_layout(&self.model, &layout)?;
                    CollectiveBasis::new(&reduced.layout.counts(), self.dim_cap)?;
                }
                Solver::DickeAnalytic => {
                    dicke_layout(&self.model, &layout)?;
                }
                Solver::Cumulant => {}
            }
        }
        Ok(())
    }
}

/// Two-spin layout equivalent to `layout` under pure collective decay.
fn dicke_layout(model: &WaveguideModel, layout: &EnsembleLayout) -> Result<EnsembleLayout> {
    let reduced = exact::reduce_layout(model, layout)?;
    let subs = &reduced.layout.subensembles;
    if subs.len() != 2 || !subs[0].pumped || subs[1].pumped {
        return Err(Error::Config(
            "the Dicke prediction needs sites at multiples of λ_eff/2 that reduce to one pumped and one ground spin"
                .into(),
        ));
    }
    Ok(reduced.layout)
}

/// Population-weighted aggregates of one run.
#[derive(Clone, Debug)]
pub struct AggregateRun {
    /// Observables `[⟨σ^ee_p⟩, ⟨σ^ee_np⟩, E_tot]`.
    pub aggregate: Trajectory,
    /// `⟨σ^ee_a⟩` per sub-ensemble of the layout.
    pub subensembles: Trajectory,
    pub layout: EnsembleLayout,
    pub steady_time: Option<f64>,
    pub accepted_steps: usize,
}

impl AggregateRun {
    pub const EE_P: usize = 0;
    pub const EE_NP: usize = 1;
    pub const TOTAL: usize = 2;

    fn new(per_group: &Trajectory, expand: &[usize], layout: EnsembleLayout, steady_time: Option<f64>, steps: usize) -> Self {
        let m = per_group.n_observables();
        let counts = layout.counts();
        let n_p = layout.pumped_atoms() as f64;
        let n_np = (layout.total_atoms() - layout.pumped_atoms()) as f64;
        let mut rows = vec![vec![0.0; m]; 3];
        for (a, s) in layout.subensembles.iter().enumerate() {
            let g = expand[a];
            let w = counts[a] as f64;
            if s.pumped {
                rows[0][g] += w / n_p;
            } else {
                rows[1][g] += w / n_np;
            }
            rows[2][g] += w;
        }
        // An empty side reads as NaN rather than zero.
        if n_np == 0.0 {
            rows[1] = vec![f64::NAN; m];
        }
        let select: Vec<Vec<f64>> = expand
            .iter()
            .map(|&g| (0..m).map(|i| if i == g { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            aggregate: per_group.combine(&rows),
            subensembles: per_group.combine(&select),
            layout,
            steady_time,
            accepted_steps: steps,
        }
    }

    /// Steady time if reached, else the end of the run.
    pub fn measurement_time(&self) -> f64 {
        self.steady_time.unwrap_or_else(|| self.aggregate.t_end())
    }

    pub fn value(&self, observable: usize, t: f64) -> f64 {
        self.aggregate.value(observable, t)
    }

    /// Steady `(⟨σ^ee_p⟩, ⟨σ^ee_np⟩)`.
    pub fn steady_populations(&self) -> (f64, f64) {
        let t = self.measurement_time();
        (self.value(Self::EE_P, t), self.value(Self::EE_NP, t))
    }

    /// First time the non-pumped population reaches 95 % of its steady value.
    pub fn transfer_time(&self) -> Result<f64> {
        let target = TRANSFER_FRACTION * self.value(Self::EE_NP, self.measurement_time());
        if !(target > self.aggregate.initial()[Self::EE_NP]) {
            return Err(Error::NoCrossing);
        }
        detect_event(&self.aggregate, &EventSpec::new(Self::EE_NP, target, Direction::Rising)?)
    }

    /// Uniform resampling up to the measurement time; columns are `t`,
    /// the three aggregates, then every sub-ensemble.
    pub fn time_series(&self, samples: usize) -> TimeSeries {
        let mut columns: Vec<String> = ["t", "ee_p", "ee_np", "total"].map(String::from).to_vec();
        for (a, s) in self.layout.subensembles.iter().enumerate() {
            let tag = if s.pumped { "p" } else { "np" };
            columns.push(format!("ee_{a}_{tag}_x{:.4}_phi{:.4}", s.position, s.pulse_phase));
        }
        let t_end = self.measurement_time();
        let t0 = self.aggregate.t_start();
        let rows = (0..samples.max(2))
            .map(|i| {
                let t = t0 + (t_end - t0) * i as f64 / (samples.max(2) - 1) as f64;
                let mut row = vec![t];
                row.extend(self.aggregate.values_at(t));
                row.extend(self.subensembles.values_at(t));
                row
            })
            .collect();
        TimeSeries { columns, rows }
    }
}

/// `(fraction, absolute)` excitation lost by the measurement time.
///
/// `E_tot(t) = Σ_a N_a ⟨σ^ee_a⟩`; absolute loss is `E_tot(0) − E_tot(t_ss)`.
pub fn lost_excitation_metrics(run: &AggregateRun) -> (f64, f64) {
    let e0 = run.aggregate.initial()[AggregateRun::TOTAL];
    let absolute = e0 - run.value(AggregateRun::TOTAL, run.measurement_time());
    let fraction = if e0 > 0.0 { absolute / e0 } else { 0.0 };
    (fraction, absolute)
}

/// Sampled observables of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrate one layout with a dynamical solver.
pub fn simulate(
    model: &WaveguideModel,
    layout: &EnsembleLayout,
    solver: Solver,
    template: &LayoutTemplate,
    settings: &IntegratorSettings,
    dim_cap: usize,
) -> Result<AggregateRun> {
    let config = settings.config(layout.total_atoms(), model.gamma1d);
    match solver {
        Solver::Cumulant => {
            let options = CumulantOptions { zero_omega: template.zero_omega };
            let system = MomentSystem::with_options(model, layout, &options)?;
            let run = cumulant::evolve(&system, &system.initial_state(layout)?, &config)?;
            let identity: Vec<usize> = (0..layout.len()).collect();
            let steady = steady_time(&run.trajectory, layout.len(), &config, run.steady_time);
            Ok(AggregateRun::new(&run.trajectory, &identity, layout.clone(), steady, run.accepted_steps))
        }
        Solver::Exact => {
            let reduced = exact::reduce_layout(model, layout)?;
            let options = ExactOptions { dim_cap, zero_omega: template.zero_omega, ..ExactOptions::default() };
            let generator = exact::build_liouvillian_with(model, &reduced.layout, &options)?;
            let state = exact::initial_product_state(&reduced.layout)?;
            let run = exact::evolve_populations(&state, &generator, &config, false)?;
            let steady = steady_time(&run.trajectory, reduced.layout.len(), &config, run.steady_time);
            Ok(AggregateRun::new(&run.trajectory, &reduced.group, layout.clone(), steady, run.accepted_steps))
        }
        Solver::DickeAnalytic => Err(Error::Config("the Dicke prediction has no time evolution".into())),
    }
}

fn steady_time(trajectory: &Trajectory, m: usize, config: &IntegratorConfig, early: Option<f64>) -> Option<f64> {
    early.or_else(|| {
        let spec = SteadySpec {
            window: config.steady_window,
            slope_threshold: config.steady_slope,
            observables: Some((0..m).collect()),
        };
        detect_steady_state(trajectory, &spec).ok()
    })
}

/// Metrics of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub n: u64,
    pub n_p: u64,
    pub np_frac: f64,
    pub theta: f64,
    pub population: f64,
    pub excitation: f64,
    pub lost_abs: f64,
    pub lost_frac: f64,
    pub ss_ee_p: f64,
    pub ss_ee_np: f64,
    pub tsa: f64,
    pub solver: Solver,
    /// `Σ_a N_a sin²(θ_a/2)` from the preparation alone.
    pub initial_excitation: f64,
    pub final_excitation: f64,
    pub t_end: f64,
    pub steady_time: Option<f64>,
    pub steady_reached: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl MetricRecord {
    fn empty(point: &GridPoint, solver: Solver, settings: &IntegratorSettings) -> Self {
        Self {
            n: point.n,
            n_p: point.n_p,
            np_frac: point.np_frac(),
            theta: point.theta,
            population: point.population(),
            excitation: point.excitation(),
            lost_abs: f64::NAN,
            lost_frac: f64::NAN,
            ss_ee_p: f64::NAN,
            ss_ee_np: f64::NAN,
            tsa: f64::NAN,
            solver,
            initial_excitation: point.population() * point.n_p as f64,
            final_excitation: f64::NAN,
            t_end: f64::NAN,
            steady_time: None,
            steady_reached: false,
            rel_tol: settings.rel_tol,
            abs_tol: settings.abs_tol,
            wall_time_s: 0.0,
            error: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// `|E_tot(0) − lost − E_tot(end)| / E_tot(0)`, with `E_tot(0)` taken
    /// from the preparation rather than the run.
    pub fn bookkeeping_error(&self) -> f64 {
        let e0 = self.initial_excitation;
        (e0 - self.lost_abs - self.final_excitation).abs() / e0.max(f64::MIN_POSITIVE)
    }
}

/// A record together with its optional time series.
#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub point: GridPoint,
    pub record: MetricRecord,
    pub series: Option<TimeSeries>,
}

/// Run a single grid point. Failures are folded into the record.
pub fn run_point(scenario: &Scenario, point: &GridPoint) -> PointOutcome {
    let start = Instant::now();
    let mut record = MetricRecord::empty(point, scenario.solver, &scenario.integrator);
    let mut series = None;
    if let Err(e) = fill_record(scenario, point, &mut record, &mut series) {
        record.error = Some(e.to_string());
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    PointOutcome { point: *point, record, series }
}

fn fill_record(
    scenario: &Scenario,
    point: &GridPoint,
    record: &mut MetricRecord,
    series: &mut Option<TimeSeries>,
) -> Result<()> {
    let layout = scenario.layout_for(point)?;
    if scenario.solver == Solver::DickeAnalytic {
        let pair = dicke_layout(&scenario.model, &layout)?;
        let lost = predicted_lost_excitation(&decompose_initial_state(&pair)?);
        record.lost_abs = lost;
        record.lost_frac = lost / record.initial_excitation;
        record.final_excitation = record.initial_excitation - lost;
        return Ok(());
    }
    let run = simulate(&scenario.model, &layout, scenario.solver, &scenario.layout, &scenario.integrator, scenario.dim_cap)?;
    let (fraction, absolute) = lost_excitation_metrics(&run);
    let t = run.measurement_time();
    record.t_end = run.aggregate.t_end();
    record.steady_time = run.steady_time;
    record.steady_reached = run.steady_time.is_some();
    record.final_excitation = run.value(AggregateRun::TOTAL, t);
    if scenario.wants(Metric::Lost) {
        record.lost_abs = absolute;
        record.lost_frac = fraction;
    }
    if scenario.wants(Metric::Steady) {
        (record.ss_ee_p, record.ss_ee_np) = run.steady_populations();
    }
    if scenario.wants(Metric::Tsa) {
        record.tsa = run.transfer_time().unwrap_or(f64::NAN);
    }
    if scenario.trajectory_samples > 0 {
        *series = Some(run.time_series(scenario.trajectory_samples));
    }
    Ok(())
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Every grid point with its time series, in canonical order.
pub fn run_scan_detailed(scenario: &Scenario, workers: Option<usize>) -> Result<Vec<PointOutcome>> {
    scenario.validate()?;
    let grid = scenario.grid()?;
    Ok(pool(workers)?.install(|| grid.par_iter().map(|p| run_point(scenario, p)).collect()))
}

/// One record per grid point, in canonical order.
pub fn run_scan(scenario: &Scenario, workers: Option<usize>) -> Result<Vec<MetricRecord>> {
    Ok(run_scan_detailed(scenario, workers)?.into_iter().map(|o| o.record).collect())
}

/// Power-law fit `T_sa ≈ A·N^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsaScaling {
    pub exponent: f64,
    pub prefactor: f64,
    /// `(N, T_sa)` per grid point used.
    pub points: Vec<(u64, f64)>,
}

/// Least-squares slope of `ln T_sa` against `ln N`.
///
/// Every record must be above threshold and carry a finite `T_sa`.
pub fn fit_tsa(records: &[MetricRecord]) -> Result<TsaScaling> {
    let mut points = Vec::with_capacity(records.len());
    for r in records {
        if r.excitation <= THRESHOLD {
            return Err(Error::Config(format!(
                "N = {} with E = {:.3} is not above the threshold at E = 1/2",
                r.n, r.excitation
            )));
        }
        if !(r.tsa.is_finite() && r.tsa > 0.0) {
            return Err(Error::Config(format!("N = {} has no transfer time", r.n)));
        }
        points.push((r.n, r.tsa));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, t)| t.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Config("a scaling fit needs at least two atom numbers".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(TsaScaling { exponent, prefactor: (my - exponent * mx).exp(), points })
}

/// Run a scan over `N` and fit the transfer-time exponent.
pub fn tsa_scaling(scenario: &Scenario, workers: Option<usize>) -> Result<TsaScaling> {
    let mut s = scenario.clone();
    if !s.wants(Metric::Tsa) {
        s.metrics.push(Metric::Tsa);
    }
    let records = run_scan(&s, workers)?;
    if let Some(r) = records.iter().find(|r| !r.is_ok()) {
        return Err(Error::Config(format!("N = {}: {}", r.n, r.error.as_deref().unwrap_or(""))));
    }
    fit_tsa(&records)
}

/// Equidistant position sampling of both ensembles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionSampling {
    pub n: u64,
    pub n_p: u64,
    pub theta: f64,
    /// Positions per ensemble, at multiples of `λ_eff/positions`.
    pub positions: usize,
    pub opposite_phases: bool,
    pub zero_omega: bool,
}

/// Cumulant run over `positions` sites per ensemble with coherent exchange.
pub fn position_sampled_run(
    model: &WaveguideModel,
    sampling: &PositionSampling,
    settings: &IntegratorSettings,
) -> Result<AggregateRun> {
    let template = LayoutTemplate {
        sites: sampling.positions,
        opposite_phases: sampling.opposite_phases,
        pulse_phase: 0.0,
        zero_omega: sampling.zero_omega,
    };
    let layout = template.build(model, sampling.n, sampling.n_p, sampling.theta)?;
    simulate(model, &layout, Solver::Cumulant, &template, settings, DEFAULT_DIM_CAP)
}
