//! Adaptive Dormand–Prince 5(4) integrator.
//!
//! The solver records a dense trajectory of a small set of *linear*
//! observables rather than the full state: because the continuous extension
//! of the method is linear in the stage derivatives, the interpolant of a
//! linear functional of the state is the functional applied to the stages.
//! This keeps exact density-matrix runs cheap to record while still
//! allowing event location and steady-state detection after the fact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)` with linear observables.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    fn n_observables(&self) -> usize;

    /// Writes observables of `y`. Must be linear in `y`.
    fn observe(&self, y: &[f64], out: &mut [f64]);

    /// Observables whose slopes decide steadiness; all of them by default.
    fn steady_observables(&self) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    /// Length of the quiet window that defines a steady state.
    pub steady_window: f64,
    /// Largest observable slope allowed inside the quiet window.
    pub steady_slope: f64,
    /// Stop as soon as a steady state is detected.
    pub stop_at_steady: bool,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            t_end: 100.0,
            steady_window: 5.0,
            steady_slope: 1e-6,
            stop_at_steady: false,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    /// Defaults scaled to collective timescales of `n` atoms: horizon
    /// `100/(NΓ)`, window `5/(NΓ)`, slope threshold `1e-6·NΓ`.
    pub fn for_atoms(n: u64, gamma1d: f64) -> Self {
        let rate = n as f64 * gamma1d;
        Self {
            t_end: 100.0 / rate,
            steady_window: 5.0 / rate,
            steady_slope: 1e-6 * rate,
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        if !(self.steady_window > 0.0 && self.steady_slope > 0.0) {
            return Err(Error::Config("steady-state window and slope must be positive".into()));
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Dense record of the observables along a solution.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Trajectory {
    n_obs: usize,
    /// Accepted step endpoints, starting with `t0`.
    times: Vec<f64>,
    /// Observables at each endpoint.
    values: Vec<f64>,
    /// Observable slopes at each endpoint.
    slopes: Vec<f64>,
    /// Five interpolation coefficients per observable per step.
    dense: Vec<f64>,
}

impl Trajectory {
    fn new(n_obs: usize, t0: f64, values: &[f64], slopes: &[f64]) -> Self {
        Self {
            n_obs,
            times: vec![t0],
            values: values.to_vec(),
            slopes: slopes.to_vec(),
            dense: Vec::new(),
        }
    }

    pub fn n_observables(&self) -> usize {
        self.n_obs
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Observables at the `k`-th step endpoint.
    pub fn values_at_step(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_obs..(k + 1) * self.n_obs]
    }

    pub fn initial(&self) -> &[f64] {
        self.values_at_step(0)
    }

    pub fn last(&self) -> &[f64] {
        self.values_at_step(self.times.len() - 1)
    }

    /// `(t, value)` pairs of one observable at the step endpoints.
    pub fn series(&self, obs: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().enumerate().map(move |(k, &t)| (t, self.values[k * self.n_obs + obs]))
    }

    fn segment_of(&self, t: f64) -> usize {
        let n = self.n_steps();
        if n == 0 {
            return 0;
        }
        match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(n - 1),
            Err(k) => k.saturating_sub(1).min(n - 1),
        }
    }

    fn coeffs(&self, seg: usize, obs: usize) -> [f64; 5] {
        let base = (seg * self.n_obs + obs) * 5;
        let mut c = [0.0; 5];
        c.copy_from_slice(&self.dense[base..base + 5]);
        c
    }

    fn theta(&self, seg: usize, t: f64) -> (f64, f64) {
        let h = self.times[seg + 1] - self.times[seg];
        (((t - self.times[seg]) / h).clamp(0.0, 1.0), h)
    }

    /// Interpolated value of observable `obs` at time `t`.
    pub fn value(&self, obs: usize, t: f64) -> f64 {
        if self.n_steps() == 0 {
            return self.values[obs];
        }
        let seg = self.segment_of(t);
        let (u, _) = self.theta(seg, t);
        let [r1, r2, r3, r4, r5] = self.coeffs(seg, obs);
        r1 + u * (r2 + (1.0 - u) * (r3 + u * (r4 + (1.0 - u) * r5)))
    }

    /// Interpolated time derivative of observable `obs`.
    pub fn slope(&self, obs: usize, t: f64) -> f64 {
        if self.n_steps() == 0 {
            return self.slopes[obs];
        }
        let seg = self.segment_of(t);
        let (u, h) = self.theta(seg, t);
        let [_, r2, r3, r4, r5] = self.coeffs(seg, obs);
        let q = r4 + (1.0 - u) * r5;
        let p = r3 + u * q;
        let s = r2 + (1.0 - u) * p;
        let dq = -r5;
        let dp = q + u * dq;
        let ds = -p + (1.0 - u) * dp;
        (s + u * ds) / h
    }

    /// All observables at `t`.
    pub fn values_at(&self, t: f64) -> Vec<f64> {
        (0..self.n_obs).map(|i| self.value(i, t)).collect()
    }

    /// Observables on a uniform grid of `n` points over the whole run.
    pub fn resample(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.t_start(), self.t_end());
        (0..n)
            .map(|i| {
                let t = if n == 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 };
                (t, self.values_at(t))
            })
            .collect()
    }

    /// Trajectory of the linear combinations `Σ_i rows[r][i]·obs_i`.
    ///
    /// Exact, dense output included, since the interpolant is linear in the
    /// observables.
    pub fn combine(&self, rows: &[Vec<f64>]) -> Trajectory {
        assert!(rows.iter().all(|r| r.len() == self.n_obs), "row length must match observable count");
        let map = |src: &[f64], stride: usize| -> Vec<f64> {
            src.chunks_exact(self.n_obs * stride)
                .flat_map(|block| {
                    rows.iter().flat_map(move |r| {
                        (0..stride).map(move |c| r.iter().enumerate().map(|(i, w)| w * block[i * stride + c]).sum())
                    })
                })
                .collect()
        };
        Trajectory {
            n_obs: rows.len(),
            times: self.times.clone(),
            values: map(&self.values, 1),
            slopes: map(&self.slopes, 1),
            dense: map(&self.dense, 5),
        }
    }

    fn push_step(&mut self, t1: f64, values: &[f64], slopes: &[f64], dense: &[f64]) {
        self.times.push(t1);
        self.values.extend_from_slice(values);
        self.slopes.extend_from_slice(slopes);
        self.dense.extend_from_slice(dense);
    }
}

/// Result of an integration.
#[derive(Clone, Debug)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub final_state: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Steady-state time when `stop_at_steady` was requested and reached.
    pub steady_time: Option<f64>,
}

impl Solution {
    pub fn final_time(&self) -> f64 {
        self.trajectory.t_end()
    }
}

/// Integrate from `t0` to `config.t_end`.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    y0: &[f64],
    t0: f64,
    config: &IntegratorConfig,
) -> Result<Solution> {
    integrate_with_hook(system, y0, t0, config, |_, _| {})
}

/// As [`integrate`], calling `hook(t, y)` after every accepted step.
pub fn integrate_with_hook<S, H>(
    system: &S,
    y0: &[f64],
    t0: f64,
    config: &IntegratorConfig,
    mut hook: H,
) -> Result<Solution>
where
    S: OdeSystem + ?Sized,
    H: FnMut(f64, &[f64]),
{
    config.validate()?;
    let n = system.dim();
    assert_eq!(y0.len(), n, "initial state has wrong dimension");
    let n_obs = system.n_observables();
    let t_end = config.t_end;
    if t_end <= t0 {
        return Err(Error::Config(format!("t_end {t_end} must exceed t0 {t0}")));
    }

    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut evals = 0usize;

    system.rhs(t0, &y, &mut k[0]);
    evals += 1;
    if !k[0].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }

    let mut obs_y = vec![0.0; n_obs];
    let mut obs_k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n_obs]);
    let mut obs_y1 = vec![0.0; n_obs];
    let mut dense = vec![0.0; 5 * n_obs];
    system.observe(&y, &mut obs_y);
    system.observe(&k[0], &mut obs_k[0]);
    let mut trajectory = Trajectory::new(n_obs, t0, &obs_y, &obs_k[0]);
    let mut tracker = SteadyTracker::new(t0, config.steady_window, config.steady_slope, system.steady_observables());

    let (k0, rest) = k.split_at_mut(1);
    let mut h = initial_step(system, t0, &y, &k0[0], config, &mut ytmp, &mut rest[0]);
    evals += 1;
    let mut t = t0;
    let mut fac_old = 1e-4_f64;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;
    let mut steady_time = None;

    let expo = 0.2 - BETA * 0.75;
    let h_floor = 1e-14 * t_end.abs().max(t0.abs()).max(1e-300);

    while t < t_end {
        if accepted + rejected >= config.max_steps {
            return Err(Error::MaxSteps(config.max_steps));
        }
        h = h.min(config.max_step);
        if t + 1.01 * h >= t_end {
            h = t_end - t;
        }
        if h < h_floor {
            return Err(Error::StepSizeUnderflow { t, step: h });
        }

        stage(&y, h, &[(A21, &k[0])], &mut ytmp);
        system.rhs(t + C2 * h, &ytmp, &mut k[1]);
        stage(&y, h, &[(A31, &k[0]), (A32, &k[1])], &mut ytmp);
        system.rhs(t + C3 * h, &ytmp, &mut k[2]);
        stage(&y, h, &[(A41, &k[0]), (A42, &k[1]), (A43, &k[2])], &mut ytmp);
        system.rhs(t + C4 * h, &ytmp, &mut k[3]);
        stage(&y, h, &[(A51, &k[0]), (A52, &k[1]), (A53, &k[2]), (A54, &k[3])], &mut ytmp);
        system.rhs(t + C5 * h, &ytmp, &mut k[4]);
        stage(
            &y,
            h,
            &[(A61, &k[0]), (A62, &k[1]), (A63, &k[2]), (A64, &k[3]), (A65, &k[4])],
            &mut ytmp,
        );
        system.rhs(t + h, &ytmp, &mut k[5]);
        stage(
            &y,
            h,
            &[(A71, &k[0]), (A73, &k[2]), (A74, &k[3]), (A75, &k[4]), (A76, &k[5])],
            &mut y1,
        );
        system.rhs(t + h, &y1, &mut k[6]);
        evals += 6;

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = config.abs_tol + config.rel_tol * y[i].abs().max(y1[i].abs());
            err_sq += (e / sc) * (e / sc);
            finite &= k[6][i].is_finite();
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if !finite || !err.is_finite() {
            // Retry with a much smaller step before giving up.
            h *= 0.1;
            rejected += 1;
            if h < h_floor {
                return Err(Error::NonFinite { t });
            }
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(expo);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = err.max(1e-4);

            for (ok, kk) in obs_k.iter_mut().zip(k.iter()) {
                system.observe(kk, ok);
            }
            system.observe(&y1, &mut obs_y1);
            for o in 0..n_obs {
                let r2 = obs_y1[o] - obs_y[o];
                let r3 = h * obs_k[0][o] - r2;
                let r4 = r2 - h * obs_k[6][o] - r3;
                let r5 = h
                    * (D1 * obs_k[0][o] + D3 * obs_k[2][o] + D4 * obs_k[3][o] + D5 * obs_k[4][o]
                        + D6 * obs_k[5][o]
                        + D7 * obs_k[6][o]);
                dense[o * 5..o * 5 + 5].copy_from_slice(&[obs_y[o], r2, r3, r4, r5]);
            }
            let t_new = if t_end - (t + h) <= 1e-15 * t_end.abs() { t_end } else { t + h };
            trajectory.push_step(t_new, &obs_y1, &obs_k[6], &dense);
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            k.swap(0, 6);
            std::mem::swap(&mut obs_y, &mut obs_y1);
            accepted += 1;
            hook(t, &y);

            if let Some(ts) = tracker.update(&trajectory) {
                if config.stop_at_steady {
                    steady_time = Some(ts);
                    break;
                }
            }
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected += 1;
            last_rejected = true;
        }
    }

    Ok(Solution {
        trajectory,
        final_state: y,
        accepted_steps: accepted,
        rejected_steps: rejected,
        rhs_evaluations: evals,
        steady_time,
    })
}

fn stage(y: &[f64], h: f64, terms: &[(f64, &Vec<f64>)], out: &mut [f64]) {
    out.copy_from_slice(y);
    for &(a, k) in terms {
        let ha = h * a;
        for (o, kv) in out.iter_mut().zip(k.iter()) {
            *o += ha * kv;
        }
    }
}

/// Starting step size from the size of the solution and its derivatives.
fn initial_step<S: OdeSystem + ?Sized>(
    system: &S,
    t0: f64,
    y: &[f64],
    f0: &[f64],
    config: &IntegratorConfig,
    ytmp: &mut [f64],
    f1: &mut [f64],
) -> f64 {
    let n = y.len().max(1) as f64;
    let sc = |v: f64| config.abs_tol + config.rel_tol * v.abs();
    let dnf = (f0.iter().zip(y).map(|(f, yv)| (f / sc(*yv)).powi(2)).sum::<f64>() / n).sqrt();
    let dny = (y.iter().map(|yv| (yv / sc(*yv)).powi(2)).sum::<f64>() / n).sqrt();
    let span = config.t_end - t0;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 * span } else { 0.01 * dny / dnf };
    h = h.min(config.max_step).min(span);
    for i in 0..y.len() {
        ytmp[i] = y[i] + h * f0[i];
    }
    system.rhs(t0 + h, ytmp, f1);
    let der2 = (f1
        .iter()
        .zip(f0)
        .zip(y)
        .map(|((a, b), yv)| ((a - b) / sc(*yv)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    let der = dnf.max(der2);
    let h1 = if der <= 1e-15 { (1e-6_f64).max(h * 1e-3) } else { (0.01 / der).powf(0.2) };
    (100.0 * h).min(h1).min(config.max_step).min(span)
}

/// Direction of a threshold crossing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub observable: usize,
    pub threshold: f64,
    pub direction: Direction,
}

impl EventSpec {
    pub fn new(observable: usize, threshold: f64, direction: Direction) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::Config("event threshold must be finite".into()));
        }
        Ok(Self { observable, threshold, direction })
    }

    /// Crossing of `fraction` times the final value of `observable`,
    /// approached from the side where the run started.
    pub fn fraction_of_final(trajectory: &Trajectory, observable: usize, fraction: f64) -> Result<Self> {
        let start = trajectory.initial()[observable];
        let threshold = fraction * trajectory.last()[observable];
        let direction = if threshold >= start { Direction::Rising } else { Direction::Falling };
        Self::new(observable, threshold, direction)
    }
}

/// First time at which the event's observable crosses its threshold.
pub fn detect_event(trajectory: &Trajectory, event: &EventSpec) -> Result<f64> {
    let g = |t: f64| {
        let v = trajectory.value(event.observable, t) - event.threshold;
        match event.direction {
            Direction::Rising => v,
            Direction::Falling => -v,
        }
    };
    const SUBDIV: usize = 4;
    let times = trajectory.times();
    if g(times[0]) >= 0.0 && trajectory.n_steps() == 0 {
        return Err(Error::NoCrossing);
    }
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut lo = a;
        let mut g_lo = g(a);
        for s in 1..=SUBDIV {
            let hi = a + (b - a) * s as f64 / SUBDIV as f64;
            let g_hi = g(hi);
            if g_lo < 0.0 && g_hi >= 0.0 {
                return Ok(bisect(g, lo, hi));
            }
            lo = hi;
            g_lo = g_hi;
        }
    }
    Err(Error::NoCrossing)
}

/// Root of `g` in `[lo, hi]` with `g(lo) < 0 <= g(hi)`.
fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64) -> f64 {
    let tol = 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// What counts as steady.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadySpec {
    pub window: f64,
    pub slope_threshold: f64,
    /// Observables to watch; all when `None`.
    pub observables: Option<Vec<usize>>,
}

impl SteadySpec {
    pub fn from_config(config: &IntegratorConfig) -> Self {
        Self { window: config.steady_window, slope_threshold: config.steady_slope, observables: None }
    }
}

/// Earliest time after which every watched slope stays below threshold for
/// at least one window.
pub fn detect_steady_state(trajectory: &Trajectory, spec: &SteadySpec) -> Result<f64> {
    let mut tracker = SteadyTracker::new(
        trajectory.t_start(),
        spec.window,
        spec.slope_threshold,
        spec.observables.clone(),
    );
    tracker.scan_all(trajectory);
    let ts = tracker.quiet_since + spec.window;
    if ts <= trajectory.t_end() * (1.0 + 1e-12) {
        Ok(ts)
    } else {
        Err(Error::SteadyStateNotReached(trajectory.t_end()))
    }
}

struct SteadyTracker {
    window: f64,
    threshold: f64,
    observables: Option<Vec<usize>>,
    /// Start of the current quiet stretch.
    quiet_since: f64,
    scanned_steps: usize,
}

impl SteadyTracker {
    fn new(t0: f64, window: f64, threshold: f64, observables: Option<Vec<usize>>) -> Self {
        Self { window, threshold, observables, quiet_since: t0, scanned_steps: 0 }
    }

    fn max_slope(&self, tr: &Trajectory, t: f64) -> f64 {
        let mut m = 0.0_f64;
        let mut check = |i: usize| m = m.max(tr.slope(i, t).abs());
        match &self.observables {
            Some(list) => list.iter().copied().for_each(&mut check),
            None => (0..tr.n_observables()).for_each(&mut check),
        }
        m
    }

    fn scan_step(&mut self, tr: &Trajectory, seg: usize) {
        let (a, b) = (tr.times[seg], tr.times[seg + 1]);
        if seg == 0 && self.max_slope(tr, a) >= self.threshold {
            self.quiet_since = a;
        }
        let probes = [a + 0.25 * (b - a), a + 0.5 * (b - a), a + 0.75 * (b - a), b];
        let mut prev = a;
        let mut prev_noisy = self.max_slope(tr, a) >= self.threshold;
        for &t in &probes {
            let noisy = self.max_slope(tr, t) >= self.threshold;
            if noisy {
                self.quiet_since = t;
            } else if prev_noisy {
                self.quiet_since = bisect(|s| if self.max_slope(tr, s) >= self.threshold { -1.0 } else { 1.0 }, prev, t);
            }
            prev = t;
            prev_noisy = noisy;
        }
    }

    fn scan_all(&mut self, tr: &Trajectory) {
        while self.scanned_steps < tr.n_steps() {
            self.scan_step(tr, self.scanned_steps);
            self.scanned_steps += 1;
        }
        if tr.n_steps() == 0 && self.max_slope(tr, tr.t_start()) >= self.threshold {
            self.quiet_since = tr.t_start();
        }
    }

    /// Steady-state time once the quiet stretch is a full window long.
    fn update(&mut self, tr: &Trajectory) -> Option<f64> {
        self.scan_all(tr);
        let ts = self.quiet_since + self.window;
        (tr.t_end() >= ts).then_some(ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -y[0];
        }
        fn n_observables(&self) -> usize {
            1
        }
        fn observe(&self, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
        fn n_observables(&self) -> usize {
            2
        }
        fn observe(&self, y: &[f64], out: &mut [f64]) {
            out.copy_from_slice(y);
        }
    }

    struct Constant;
    impl OdeSystem for Constant {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, _y: &[f64], dy: &mut [f64]) {
            dy[0] = 0.0;
        }
        fn n_observables(&self) -> usize {
            1
        }
        fn observe(&self, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
        }
    }

    struct Blowup;
    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[0] * y[0];
        }
        fn n_observables(&self) -> usize {
            1
        }
        fn observe(&self, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
        }
    }

    fn cfg(t_end: f64) -> IntegratorConfig {
        IntegratorConfig { t_end, ..IntegratorConfig::default() }
    }

    #[test]
    fn exponential_decay() {
        let sol = integrate(&Decay, &[1.0], 0.0, &cfg(1.0)).unwrap();
        assert_abs_diff_eq!(sol.final_state[0], (-1.0f64).exp(), epsilon = 1e-7);
        assert_eq!(sol.final_time(), 1.0);
    }

    #[test]
    fn oscillator_energy() {
        let sol = integrate(&Oscillator, &[1.0, 0.0], 0.0, &cfg(100.0)).unwrap();
        let e = sol.final_state[0].powi(2) + sol.final_state[1].powi(2);
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn dense_output_matches_endpoints_and_analytic() {
        let sol = integrate(&Decay, &[1.0], 0.0, &cfg(3.0)).unwrap();
        let tr = &sol.trajectory;
        for k in 0..tr.n_steps() {
            let t = tr.times()[k];
            assert_eq!(tr.value(0, t), tr.values_at_step(k)[0]);
        }
        for i in 0..=60 {
            let t = 0.05 * i as f64;
            assert_abs_diff_eq!(tr.value(0, t), (-t).exp(), epsilon = 1e-7);
            assert_abs_diff_eq!(tr.slope(0, t), -(-t).exp(), epsilon = 1e-5);
        }
    }

    #[test]
    fn falling_event_at_ln2() {
        let sol = integrate(&Decay, &[1.0], 0.0, &cfg(2.0)).unwrap();
        let ev = EventSpec::new(0, 0.5, Direction::Falling).unwrap();
        let t = detect_event(&sol.trajectory, &ev).unwrap();
        assert_abs_diff_eq!(t, std::f64::consts::LN_2, epsilon = 1e-6);
    }

    #[test]
    fn rising_event_to_plateau_is_unique() {
        struct Rise;
        impl OdeSystem for Rise {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
                dy[0] = 1.0 - y[0];
            }
            fn n_observables(&self) -> usize {
                1
            }
            fn observe(&self, y: &[f64], out: &mut [f64]) {
                out[0] = y[0];
            }
        }
        let sol = integrate(&Rise, &[0.0], 0.0, &cfg(30.0)).unwrap();
        let ev = EventSpec::fraction_of_final(&sol.trajectory, 0, 0.95).unwrap();
        assert_eq!(ev.direction, Direction::Rising);
        let t = detect_event(&sol.trajectory, &ev).unwrap();
        assert_abs_diff_eq!(t, -(0.05f64 + 0.95 * (-30.0f64).exp()).ln(), epsilon = 1e-6);
    }

    #[test]
    fn missing_event_is_reported() {
        let sol = integrate(&Decay, &[1.0], 0.0, &cfg(1.0)).unwrap();
        let ev = EventSpec::new(0, 0.01, Direction::Falling).unwrap();
        assert!(matches!(detect_event(&sol.trajectory, &ev), Err(Error::NoCrossing)));
        assert!(EventSpec::new(0, f64::NAN, Direction::Rising).is_err());
    }

    #[test]
    fn constant_is_steady_after_one_window() {
        let sol = integrate(&Constant, &[0.3], 0.0, &cfg(20.0)).unwrap();
        let spec = SteadySpec { window: 5.0, slope_threshold: 1e-6, observables: None };
        assert_abs_diff_eq!(detect_steady_state(&sol.trajectory, &spec).unwrap(), 5.0);
    }

    #[test]
    fn decay_steady_time() {
        let sol = integrate(&Decay, &[1.0], 0.0, &cfg(40.0)).unwrap();
        let spec = SteadySpec::from_config(&IntegratorConfig::for_atoms(1, 1.0));
        let t = detect_steady_state(&sol.trajectory, &spec).unwrap();
        // slope e^{-t} drops below 1e-6 at t = 6 ln 10
        assert_abs_diff_eq!(t, 6.0 * 10f64.ln() + 5.0, epsilon = 1e-3);

        let short = integrate(&Decay, &[1.0], 0.0, &cfg(10.0)).unwrap();
        assert!(matches!(
            detect_steady_state(&short.trajectory, &spec),
            Err(Error::SteadyStateNotReached(_))
        ));
    }

    #[test]
    fn early_stop_at_steady() {
        let config = IntegratorConfig { t_end: 1000.0, stop_at_steady: true, ..IntegratorConfig::default() };
        let sol = integrate(&Decay, &[1.0], 0.0, &config).unwrap();
        let ts = sol.steady_time.unwrap();
        assert!(sol.final_time() < 30.0);
        assert_abs_diff_eq!(ts, 6.0 * 10f64.ln() + 5.0, epsilon = 1e-3);
    }

    #[test]
    fn blowup_reports_failure() {
        let r = integrate(&Blowup, &[1.0], 0.0, &cfg(2.0));
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. }) | Err(Error::NonFinite { .. })));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(integrate(&Decay, &[1.0], 0.0, &IntegratorConfig { rel_tol: 0.0, ..cfg(1.0) }).is_err());
        assert!(integrate(&Decay, &[1.0], 0.0, &cfg(-1.0)).is_err());
    }
}
