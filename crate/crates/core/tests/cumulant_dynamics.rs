use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use wgdicke::coupling::{EnsembleLayout, SubEnsemble, WaveguideModel};
use wgdicke::coupling::build_matrices;
use wgdicke::cumulant::{adjoint_derivative, derive_system, evolve, Atom, Kind, Moment, MomentSystem, Param};
use wgdicke::exact;
use wgdicke::ode::{integrate, IntegratorConfig};

mod common;
use common::{product_state, CMat, FullSpace, FullSystem};

fn both(layout: &EnsembleLayout, cfg: &IntegratorConfig) -> (wgdicke::exact::ExactRun, wgdicke::cumulant::CumulantRun) {
    let model = WaveguideModel::default();
    let l = exact::build_liouvillian(&model, layout).unwrap();
    let ex = exact::evolve_populations(&exact::initial_product_state(layout).unwrap(), &l, cfg, false).unwrap();
    let sys = MomentSystem::new(&model, layout).unwrap();
    let cu = evolve(&sys, &sys.initial_state(layout).unwrap(), cfg).unwrap();
    (ex, cu)
}

fn max_deviation(ex: &wgdicke::exact::ExactRun, cu: &wgdicke::cumulant::CumulantRun, obs: &[usize], samples: usize) -> f64 {
    let t_end = ex.trajectory.t_end().min(cu.trajectory.t_end());
    let mut worst = 0.0_f64;
    for k in 0..=samples {
        let t = t_end * k as f64 / samples as f64;
        for &o in obs {
            worst = worst.max((ex.trajectory.value(o, t) - cu.trajectory.value(o, t)).abs());
        }
    }
    worst
}

#[test]
fn one_atom_per_ensemble_is_exact() {
    let cfg = IntegratorConfig { t_end: 8.0, ..IntegratorConfig::default() }.with_tolerances(1e-10, 1e-12);
    for (spacing, theta, phi) in [(1.0, PI, 0.0), (0.5, 2.0 * PI / 3.0, 0.3), (0.25, 1.0, 1.0), (0.37, PI / 2.0, 2.0)] {
        let layout =
            EnsembleLayout::new(vec![SubEnsemble::pumped(1, 0.0, theta, phi), SubEnsemble::ground(1, spacing)]).unwrap();
        let (ex, cu) = both(&layout, &cfg);
        let dev = max_deviation(&ex, &cu, &[0, 1, 2, 3], 200);
        assert!(dev < 1e-8, "spacing {spacing}: {dev}");
    }
}

#[test]
fn small_ensembles_follow_exact_solver() {
    for (n, n_p) in [(4u64, 2u64), (8, 3)] {
        for theta in [PI, 2.0 * PI / 3.0] {
            for spacing in [1.0, 0.5] {
                let layout = EnsembleLayout::two_ensembles(n, n_p, theta, spacing).unwrap();
                let (ex, cu) = both(&layout, &IntegratorConfig::for_atoms(n, 1.0));
                let dev = max_deviation(&ex, &cu, &[0, 1], 400);
                assert!(dev < 0.02, "N = {n}, θ = {theta}, d = {spacing}: {dev}");
            }
        }
    }
}

#[test]
fn partial_inversion_follows_exact_solver_at_twenty_atoms() {
    let layout = EnsembleLayout::two_ensembles(20, 8, 2.0 * PI / 3.0, 1.0).unwrap();
    let (ex, cu) = both(&layout, &IntegratorConfig::for_atoms(20, 1.0));
    let dev = max_deviation(&ex, &cu, &[0, 1], 400);
    assert!(dev < 0.02, "{dev}");
}

#[test]
fn full_inversion_at_twenty_atoms_stays_within_three_percent() {
    // Third-order closure error for a fully inverted pumped ensemble
    // saturates near 2.5 % in the pumped population.
    let layout = EnsembleLayout::two_ensembles(20, 8, PI, 1.0).unwrap();
    let (ex, cu) = both(&layout, &IntegratorConfig::for_atoms(20, 1.0));
    let dev = max_deviation(&ex, &cu, &[0, 1], 400);
    assert!(dev < 0.03, "{dev}");
}

#[test]
fn real_moments_stay_real_and_conjugates_consistent() {
    let model = WaveguideModel::default();
    let layout = EnsembleLayout::new(vec![
        SubEnsemble::pumped(30, 0.0, 2.0 * PI / 3.0, 0.0),
        SubEnsemble::pumped(30, 0.25, 2.0 * PI / 3.0, PI),
        SubEnsemble::ground(60, 0.5),
    ])
    .unwrap();
    let sys = MomentSystem::new(&model, &layout).unwrap();
    let y0 = sys.initial_state(&layout).unwrap();
    let run = evolve(&sys, &y0, &IntegratorConfig::for_atoms(120, 1.0)).unwrap();
    let mut d = vec![Complex64::new(0.0, 0.0); sys.n_moments()];
    for state in [&y0, &run.final_state] {
        sys.derivative(state, &mut d);
        for (m, (v, dv)) in sys.moments().iter().zip(state.iter().zip(&d)) {
            if m.is_real() {
                assert!(v.im.abs() < 1e-10 && dv.im.abs() < 1e-10, "{m}");
            }
        }
    }
    for a in 0..3 {
        let ee = run.final_state[sys.index_of(&Moment::single(a, Kind::Ee)).unwrap()].re;
        assert!((-1e-6..=1.0 + 1e-6).contains(&ee));
    }
    let eg = sys.value(&run.final_state, &Moment::pair((0, Kind::Eg), (1, Kind::Ge))).unwrap();
    let ge = sys.value(&run.final_state, &Moment::pair((0, Kind::Ge), (1, Kind::Eg))).unwrap();
    assert!((eg - ge.conj()).norm() < 1e-14);
}

#[test]
fn opposite_phase_split_has_no_net_coherence() {
    let model = WaveguideModel::default();
    let layout = EnsembleLayout::new(vec![
        SubEnsemble::pumped(50, 0.0, 2.0 * PI / 3.0, 0.0),
        SubEnsemble::pumped(50, 0.0, 2.0 * PI / 3.0, PI),
        SubEnsemble::ground(100, 0.5),
    ])
    .unwrap();
    let sys = MomentSystem::new(&model, &layout).unwrap();
    let y = sys.initial_state(&layout).unwrap();
    let sum = sys.value(&y, &Moment::single(0, Kind::Eg)).unwrap() + sys.value(&y, &Moment::single(1, Kind::Eg)).unwrap();
    assert!(sum.norm() < 1e-15);
}

/// Atom-resolved expectation `tr(ρ Π σ^k_atom)` on the full `2^N` space.
fn expectation(full: &FullSpace, rho: &CMat, ops: &[(usize, Kind)]) -> Complex64 {
    let d = rho.nrows();
    let mut op = CMat::identity(d, d);
    for &(atom, kind) in ops {
        let l = &full.lowering[atom];
        op *= match kind {
            Kind::Ge => l.clone(),
            Kind::Eg => l.adjoint(),
            Kind::Ee => full.ee[atom].clone(),
        };
    }
    (rho * op).trace()
}

#[test]
fn unclosed_derivatives_match_atom_resolved_dynamics() {
    let model = WaveguideModel::default();
    let subs = vec![
        SubEnsemble::pumped(2, 0.0, 2.0, 0.7),
        SubEnsemble::pumped(2, 0.13, 1.1, 2.1),
        SubEnsemble::ground(1, 0.41),
    ];
    let layout = EnsembleLayout::new(subs.clone()).unwrap();
    let coupling = build_matrices(&model, &layout).unwrap();
    let counts = layout.counts();
    let offsets: Vec<usize> = counts.iter().scan(0, |acc, &n| { let o = *acc; *acc += n as usize; Some(o) }).collect();
    let positions: Vec<f64> = subs.iter().flat_map(|s| std::iter::repeat_n(s.position, s.count as usize)).collect();
    let atoms: Vec<(f64, f64)> = subs.iter().flat_map(|s| std::iter::repeat_n((s.pulse_area, s.pulse_phase), s.count as usize)).collect();
    let psi = product_state(&atoms);
    let d = psi.len();
    let full = FullSpace::new(&model, &positions);
    let y0: Vec<f64> = psi.iter().flat_map(|a| psi.iter().map(move |b| a * b.conj())).flat_map(|z| [z.re, z.im]).collect();
    let cfg = IntegratorConfig { t_end: 1.5, ..IntegratorConfig::default() };
    let sol = integrate(&FullSystem(FullSpace::new(&model, &positions), d), &y0, 0.0, &cfg).unwrap();
    let rho = CMat::from_fn(d, d, |r, k| Complex64::new(sol.final_state[2 * (r * d + k)], sol.final_state[2 * (r * d + k) + 1]));
    let rho_dot = full.apply(&rho);

    let value = |p: Param| match p {
        Param::Gamma(a, b) => coupling.gamma[(a, b)],
        Param::Omega(a, b) => coupling.omega[(a, b)],
        Param::Count(c, k) => counts[c] as f64 - k as f64,
    };
    let system = derive_system(3).unwrap();
    let mut checked = 0;
    for target in system.moments() {
        if (0..3).any(|c| target.atoms_in(c) as u64 > counts[c]) {
            continue;
        }
        let place = |a: &Atom, target: &Moment| -> Option<usize> {
            let slot = if a.slot == Atom::FRESH { target.atoms_in(a.ensemble) } else { a.slot as usize };
            (slot < counts[a.ensemble] as usize).then(|| offsets[a.ensemble] + slot)
        };
        let mut slots = vec![0usize; 3];
        let target_atoms: Vec<(usize, Kind)> = target
            .factors()
            .iter()
            .map(|&(c, k)| { let a = offsets[c] + slots[c]; slots[c] += 1; (a, k) })
            .collect();
        let want = expectation(&full, &rho_dot, &target_atoms);
        let mut got = Complex64::new(0.0, 0.0);
        for raw in adjoint_derivative(target, 3).unwrap() {
            let coeff = raw.coeff.eval(value);
            let placed: Option<Vec<(usize, Kind)>> = raw.operators.iter().map(|(a, k)| place(a, target).map(|i| (i, *k))).collect();
            match placed {
                Some(ops) => got += coeff * expectation(&full, &rho, &ops),
                None => assert!(coeff.norm() < 1e-14, "{target}: weight of a missing atom"),
            }
        }
        assert!((got - want).norm() < 1e-10, "{target}: {got} vs {want}");
        checked += 1;
    }
    assert_eq!(checked, 29);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn excitation_derivative_matches_emission(
        n in 1u64..200, x in 0.0..2.0f64, theta in 0.0..PI, phi in 0.0..6.28f64
    ) {
        // With a single channel of loss, the total excitation decays at the
        // emission rate, for any state the closure produces.
        let model = WaveguideModel::default();
        let layout = EnsembleLayout::new(vec![SubEnsemble::pumped(n, 0.0, theta, phi), SubEnsemble::ground(n + 1, x)]).unwrap();
        let sys = MomentSystem::new(&model, &layout).unwrap();
        let y = sys.initial_state(&layout).unwrap();
        let mut d = vec![Complex64::new(0.0, 0.0); sys.n_moments()];
        sys.derivative(&y, &mut d);
        let de: f64 = (0..2).map(|a| sys.counts()[a] as f64 * d[sys.index_of(&Moment::single(a, Kind::Ee)).unwrap()].re).sum();
        let flat: Vec<f64> = y.iter().flat_map(|z| [z.re, z.im]).collect();
        let mut obs = vec![0.0; 4];
        wgdicke::ode::OdeSystem::observe(&sys, &flat, &mut obs);
        prop_assert!((de + obs[3]).abs() <= 1e-9 * (1.0 + obs[3].abs()), "{} vs {}", de, obs[3]);
    }
}
