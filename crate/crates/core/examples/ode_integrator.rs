//! The adaptive integrator on a system of your own: a damped two-level
//! Bloch vector with threshold and steady-state detection.
//!
//! ```text
//! cargo run --example ode_integrator
//! ```

use wgdicke::ode::{detect_event, detect_steady_state, integrate, EventSpec, IntegratorConfig, OdeSystem, SteadySpec};

/// Resonantly driven, radiatively damped two-level atom.
struct Bloch {
    rabi: f64,
    gamma: f64,
}

impl OdeSystem for Bloch {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let (u, v, w) = (y[0], y[1], y[2]);
        dy[0] = -0.5 * self.gamma * u;
        dy[1] = -0.5 * self.gamma * v - self.rabi * w;
        dy[2] = -self.gamma * (w + 1.0) + self.rabi * v;
    }

    fn n_observables(&self) -> usize {
        1
    }

    fn observe(&self, y: &[f64], out: &mut [f64]) {
        out[0] = 0.5 * (1.0 + y[2]);
    }
}

fn main() -> wgdicke::Result<()> {
    let atom = Bloch { rabi: 2.0, gamma: 1.0 };
    let config = IntegratorConfig { t_end: 40.0, steady_window: 2.0, steady_slope: 1e-6, ..IntegratorConfig::default() };
    let sol = integrate(&atom, &[0.0, 0.0, -1.0], 0.0, &config)?;
    let traj = &sol.trajectory;
    println!("{} accepted, {} rejected, {} rhs calls", sol.accepted_steps, sol.rejected_steps, sol.rhs_evaluations);

    let s = atom.rabi * atom.rabi / (atom.gamma * atom.gamma);
    let expected = 0.5 * 2.0 * s / (1.0 + 2.0 * s);
    println!("excited population at t = {}: {:.8} (steady value {expected:.8})", traj.t_end(), traj.last()[0]);

    let half = EventSpec::fraction_of_final(traj, 0, 0.5)?;
    println!("reaches half its final value at t = {:.6}", detect_event(traj, &half)?);
    println!("steady from t = {:.3}", detect_steady_state(traj, &SteadySpec::from_config(&config))?);
    for (t, v) in traj.resample(9) {
        println!("  t = {t:6.2}  P_e = {:.5}", v[0]);
    }
    Ok(())
}
