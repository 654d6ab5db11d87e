//! Exact master-equation solver in the symmetric sector of each sub-ensemble.
//!
//! All atoms of a sub-ensemble share a position and an initial state, so the
//! dynamics never leave the fully symmetric sector of spin `j_a = N_a/2`. The
//! state lives on the product basis `|j_1 m_1⟩ ⊗ … ⊗ |j_M m_M⟩` with each
//! factor ordered from `m = +j` down to `m = −j`.
//!
//! The generator
//!
//! ```text
//! ρ̇ = −i[H, ρ] + Σ_k (C_k ρ C_k† − ½{C_k† C_k, ρ}),   H = Σ_{a≠b} Ω_ab S⁺_a S⁻_b
//! ```
//!
//! uses the two jump operators `C = Σ_a c_a S⁻_a` built from the rank-2
//! factorization of `Γ`. Every operator involved is real, so the action on a
//! dense complex `ρ` reduces to real sparse-times-dense products.

use bytemuck::{cast_slice, cast_slice_mut};
use nalgebra::DMatrix;
use num_complex::Complex64;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::coupling::{build_matrices, jump_operator_weights, EnsembleLayout, SubEnsemble, WaveguideModel};
use crate::dicke::subensemble_amplitudes;
use crate::error::{Error, Result};
use crate::half::Half;
use crate::ode::{integrate_with_hook, IntegratorConfig, OdeSystem, Solution, Trajectory};
use crate::sparse::SparseMatrix;

pub const DEFAULT_DIM_CAP: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Product basis of collective spins.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveBasis {
    spins: Vec<Half>,
    counts: Vec<u64>,
    dim: usize,
}

impl CollectiveBasis {
    pub fn new(counts: &[u64], dim_cap: usize) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::InvalidLayout("every sub-ensemble needs at least one atom".into()));
        }
        let mut dim = 1usize;
        for &n in counts {
            dim = dim.saturating_mul(n as usize + 1);
        }
        if dim > dim_cap {
            return Err(Error::DimensionCap { dim, cap: dim_cap });
        }
        Ok(Self { spins: counts.iter().map(|&n| Half::spin_of(n)).collect(), counts: counts.to_vec(), dim })
    }

    pub fn from_layout(layout: &EnsembleLayout, dim_cap: usize) -> Result<Self> {
        Self::new(&layout.counts(), dim_cap)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spins(&self) -> &[Half] {
        &self.spins
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_factors(&self) -> usize {
        self.spins.len()
    }

    /// Number of basis states of the factors after `a`.
    fn stride(&self, a: usize) -> usize {
        self.counts[a + 1..].iter().map(|&n| n as usize + 1).product()
    }

    /// Excitation number `j_a + m_a` of factor `a` in basis state `idx`.
    pub fn excitations(&self, idx: usize, a: usize) -> u64 {
        let local = (idx / self.stride(a)) % (self.counts[a] as usize + 1);
        self.counts[a] - local as u64
    }
}

/// Collective lowering, raising and excitation-number operators of one factor.
#[derive(Clone, Debug)]
pub struct CollectiveOperators {
    pub lowering: SparseMatrix,
    pub raising: SparseMatrix,
    pub number: SparseMatrix,
}

/// `S⁻_a`, `S⁺_a` and `n_a = S^z_a + j_a` embedded in the product space.
pub fn collective_operators(basis: &CollectiveBasis) -> Vec<CollectiveOperators> {
    let d = basis.dim();
    (0..basis.n_factors())
        .map(|a| {
            let stride = basis.stride(a);
            let j = basis.spins[a].value();
            let mut lower = Vec::new();
            let mut number = Vec::new();
            for idx in 0..d {
                let k = basis.excitations(idx, a);
                number.push((idx, idx, k as f64));
                if k > 0 {
                    // ⟨j, m−1|S⁻|j, m⟩ = √(j(j+1) − m(m−1)); one fewer excitation
                    // is one step further along the factor.
                    let m = k as f64 - j;
                    let target = idx + stride;
                    debug_assert!(basis.excitations(target, a) == k - 1);
                    lower.push((target, idx, (j * (j + 1.0) - m * (m - 1.0)).sqrt()));
                }
            }
            let lowering = SparseMatrix::from_triplets(d, lower);
            CollectiveOperators {
                raising: lowering.transpose(),
                lowering,
                number: SparseMatrix::from_triplets(d, number),
            }
        })
        .collect()
}

/// How the collective dissipator is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DissipatorForm {
    /// Two jump operators from the rank-2 factorization of `Γ`.
    #[default]
    TwoChannel,
    /// Direct double sum over `Γ_ab`.
    FullGamma,
}

/// Options for building and running the exact solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactOptions {
    pub dim_cap: usize,
    pub dissipator: DissipatorForm,
    /// Drop the coherent exchange `Ω`.
    pub zero_omega: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { dim_cap: DEFAULT_DIM_CAP, dissipator: DissipatorForm::TwoChannel, zero_omega: false }
    }
}

/// The master-equation generator as a matrix-free linear map on `ρ`.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    basis: CollectiveBasis,
    hamiltonian: SparseMatrix,
    /// `Σ_k C_k† C_k`, which is also the emission-rate operator.
    decay: SparseMatrix,
    /// `(weight, L, R)` sandwich terms `weight · L ρ Rᵀ`.
    jumps: Vec<(f64, SparseMatrix, SparseMatrix)>,
    numbers: Vec<SparseMatrix>,
}

pub fn build_liouvillian(model: &WaveguideModel, layout: &EnsembleLayout) -> Result<Liouvillian> {
    build_liouvillian_with(model, layout, &ExactOptions::default())
}

pub fn build_liouvillian_with(
    model: &WaveguideModel,
    layout: &EnsembleLayout,
    options: &ExactOptions,
) -> Result<Liouvillian> {
    let basis = CollectiveBasis::from_layout(layout, options.dim_cap)?;
    let coupling = build_matrices(model, layout)?;
    let ops = collective_operators(&basis);
    let d = basis.dim();
    let m = layout.len();

    let mut hamiltonian = SparseMatrix::zeros(d);
    if !options.zero_omega {
        for a in 0..m {
            for b in 0..m {
                let w = coupling.omega[(a, b)];
                if a != b && w != 0.0 {
                    hamiltonian = hamiltonian.add(&ops[a].raising.matmul(&ops[b].lowering).scale(w));
                }
            }
        }
    }

    let mut jumps = Vec::new();
    let mut decay = SparseMatrix::zeros(d);
    match options.dissipator {
        DissipatorForm::TwoChannel => {
            let weights = jump_operator_weights(model, layout);
            for channel in weights.channels() {
                let mut c = SparseMatrix::zeros(d);
                for (a, &w) in channel.iter().enumerate() {
                    if w != 0.0 {
                        c = c.add(&ops[a].lowering.scale(w));
                    }
                }
                decay = decay.add(&c.transpose().matmul(&c));
                jumps.push((1.0, c.clone(), c));
            }
        }
        DissipatorForm::FullGamma => {
            for a in 0..m {
                for b in 0..m {
                    let g = coupling.gamma[(a, b)];
                    if g != 0.0 {
                        decay = decay.add(&ops[a].raising.matmul(&ops[b].lowering).scale(g));
                        jumps.push((g, ops[a].lowering.clone(), ops[b].lowering.clone()));
                    }
                }
            }
        }
    }

    Ok(Liouvillian {
        basis,
        hamiltonian,
        decay,
        jumps,
        numbers: ops.into_iter().map(|o| o.number).collect(),
    })
}

impl Liouvillian {
    pub fn basis(&self) -> &CollectiveBasis {
        &self.basis
    }

    pub fn hamiltonian(&self) -> &SparseMatrix {
        &self.hamiltonian
    }

    /// `dρ/dt` for row-major `ρ`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.basis.dim();
        debug_assert_eq!(rho.len(), d * d);
        out.iter_mut().for_each(|v| *v = ZERO);
        // −i(Hρ − ρH) − ½(Aρ + ρA); H and A are real symmetric.
        self.hamiltonian.left_mul_acc(rho, -I, out);
        self.hamiltonian.right_mul_transpose_acc(rho, I, out);
        self.decay.left_mul_acc(rho, Complex64::new(-0.5, 0.0), out);
        self.decay.right_mul_transpose_acc(rho, Complex64::new(-0.5, 0.0), out);
        let mut tmp = vec![ZERO; d * d];
        for (w, l, r) in &self.jumps {
            tmp.iter_mut().for_each(|v| *v = ZERO);
            l.left_mul_acc(rho, ONE, &mut tmp);
            r.right_mul_transpose_acc(&tmp, Complex64::new(*w, 0.0), out);
        }
    }

    /// Dense `D² × D²` matrix of the generator acting on row-major `vec(ρ)`.
    ///
    /// Only for small bases; rejects `D > 32`.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        let d = self.basis.dim();
        if d > 32 {
            return Err(Error::DimensionCap { dim: d, cap: 32 });
        }
        let n = d * d;
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for k in 0..n {
            e[k] = ONE;
            self.apply(&e, &mut col);
            for (r, v) in col.iter().enumerate() {
                m[(r, k)] = *v;
            }
            e[k] = ZERO;
        }
        Ok(m)
    }

    fn trace_with(&self, op: &SparseMatrix, rho: &[Complex64]) -> f64 {
        let d = self.basis.dim();
        // tr(Oρ) = Σ_ij O_ij ρ_ji
        op.triplets().map(|(i, j, v)| v * rho[j * d + i].re).sum()
    }

    pub fn observable_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.basis.n_factors()).map(|a| format!("ee_{a}")).collect();
        names.extend(["total_excitation", "emission_rate", "trace"].map(String::from));
        names
    }

    /// `[⟨σ^ee_a⟩…, total excitation, emission rate, trace]`.
    pub fn observables(&self, rho: &[Complex64], out: &mut [f64]) {
        let d = self.basis.dim();
        let m = self.basis.n_factors();
        let mut total = 0.0;
        for a in 0..m {
            let n_a = self.trace_with(&self.numbers[a], rho);
            total += n_a;
            out[a] = n_a / self.basis.counts[a] as f64;
        }
        out[m] = total;
        out[m + 1] = self.trace_with(&self.decay, rho);
        out[m + 2] = (0..d).map(|i| rho[i * d + i].re).sum();
    }
}

impl OdeSystem for Liouvillian {
    fn dim(&self) -> usize {
        2 * self.basis.dim() * self.basis.dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.apply(cast_slice(y), cast_slice_mut(dy));
    }

    fn n_observables(&self) -> usize {
        self.basis.n_factors() + 3
    }

    fn observe(&self, y: &[f64], out: &mut [f64]) {
        self.observables(cast_slice(y), out);
    }

    fn steady_observables(&self) -> Option<Vec<usize>> {
        Some((0..self.basis.n_factors()).collect())
    }
}

/// Density matrix on a collective product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveState {
    dim: usize,
    rho: Vec<Complex64>,
}

/// Deviations of a state from a physical density matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateDefects {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl StateDefects {
    pub fn is_physical(&self) -> bool {
        self.trace_error <= 1e-9 && self.hermiticity_error <= 1e-12 && self.min_eigenvalue >= -1e-9
    }

    fn worst(self, other: Self) -> Self {
        Self {
            trace_error: self.trace_error.max(other.trace_error),
            hermiticity_error: self.hermiticity_error.max(other.hermiticity_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }
}

impl CollectiveState {
    pub fn from_pure(psi: &[Complex64]) -> Self {
        let d = psi.len();
        let mut rho = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                rho[i * d + j] = psi[i] * psi[j].conj();
            }
        }
        Self { dim: d, rho }
    }

    pub fn from_raw(dim: usize, rho: Vec<Complex64>) -> Self {
        assert_eq!(rho.len(), dim * dim);
        Self { dim, rho }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rho[i * self.dim + j]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn defects(&self) -> StateDefects {
        let d = self.dim;
        let mut herm = 0.0_f64;
        for i in 0..d {
            for j in i..d {
                herm = herm.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()));
        let min_eigenvalue = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        StateDefects { trace_error: (self.trace() - ONE).norm(), hermiticity_error: herm, min_eigenvalue }
    }
}

/// Product of the per-sub-ensemble coherent spin states.
pub fn initial_product_state(layout: &EnsembleLayout) -> Result<CollectiveState> {
    layout.validate()?;
    let mut psi = vec![ONE];
    for s in &layout.subensembles {
        // Basis order runs from k = N_a excitations down to zero.
        let amps: Vec<Complex64> = subensemble_amplitudes(s).into_iter().rev().collect();
        psi = psi.iter().flat_map(|&p| amps.iter().map(move |&a| p * a)).collect();
    }
    Ok(CollectiveState::from_pure(&psi))
}

/// A layout with equivalent sub-ensembles merged.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedLayout {
    pub layout: EnsembleLayout,
    /// Reduced index of every original sub-ensemble.
    pub group: Vec<usize>,
}

impl ReducedLayout {
    /// Per-original-sub-ensemble values from per-group values.
    pub fn expand(&self, values: &[f64]) -> Vec<f64> {
        self.group.iter().map(|&g| values[g]).collect()
    }
}

/// Merges sub-ensembles that are physically indistinguishable.
///
/// Sub-ensembles at the same phase `k_eff·x` whose atoms start in the same
/// single-atom state share one collective spin. When every pairwise phase
/// difference is a multiple of `π`, `Ω` vanishes and flipping the sign of
/// `σ⁻` on the sub-ensembles at the opposite phase moves them onto the first
/// one at the cost of shifting their pulse phase by `π`; populations and the
/// emission rate are unchanged.
pub fn reduce_layout(model: &WaveguideModel, layout: &EnsembleLayout) -> Result<ReducedLayout> {
    model.validate()?;
    layout.validate()?;
    const TOL: f64 = 1e-12;
    let subs = &layout.subensembles;
    let phases: Vec<f64> = subs.iter().map(|s| model.phase(s.position)).collect();
    let aligned = phases.iter().all(|p| (p - phases[0]).sin().abs() < TOL);

    let mut moved: Vec<SubEnsemble> = subs.clone();
    if aligned {
        for (s, p) in moved.iter_mut().zip(&phases) {
            if (p - phases[0]).cos() < 0.0 {
                s.pulse_phase = (s.pulse_phase + PI).rem_euclid(2.0 * PI);
            }
            s.position = subs[0].position;
        }
    }
    let key = |s: &SubEnsemble| {
        let theta = s.effective_pulse_area();
        let phi = if theta.sin().abs() < TOL { 0.0 } else { s.pulse_phase };
        (s.pumped, model.phase(s.position), theta, phi)
    };
    let same = |a: &SubEnsemble, b: &SubEnsemble| {
        let (pa, xa, ta, fa) = key(a);
        let (pb, xb, tb, fb) = key(b);
        pa == pb
            && (xa - xb).sin().abs() < TOL
            && (xa - xb).cos() > 0.0
            && (ta - tb).abs() < TOL
            && (fa - fb).sin().abs() < TOL
            && (fa - fb).cos() > 0.0
    };

    let mut merged: Vec<SubEnsemble> = Vec::new();
    let mut group = Vec::with_capacity(subs.len());
    for s in &moved {
        match merged.iter().position(|m| same(m, s)) {
            Some(g) => {
                merged[g].count += s.count;
                group.push(g);
            }
            None => {
                group.push(merged.len());
                merged.push(s.clone());
            }
        }
    }
    Ok(ReducedLayout { layout: EnsembleLayout::new(merged)?, group })
}

/// Output of an exact run.
#[derive(Clone, Debug)]
pub struct ExactRun {
    pub trajectory: Trajectory,
    pub final_state: CollectiveState,
    pub names: Vec<String>,
    pub n_subensembles: usize,
    pub accepted_steps: usize,
    pub steady_time: Option<f64>,
    /// Worst invariant violation seen, when checking was requested.
    pub defects: Option<StateDefects>,
}

impl ExactRun {
    pub fn ee_index(&self, a: usize) -> usize {
        a
    }

    pub fn total_index(&self) -> usize {
        self.n_subensembles
    }

    pub fn emission_index(&self) -> usize {
        self.n_subensembles + 1
    }

    pub fn trace_index(&self) -> usize {
        self.n_subensembles + 2
    }
}

/// Integrate the master equation from `state`.
pub fn evolve(
    state: &CollectiveState,
    generator: &Liouvillian,
    config: &IntegratorConfig,
) -> Result<ExactRun> {
    run(state, generator, config, false)
}

/// As [`evolve`], checking trace, Hermiticity and positivity after every
/// accepted step.
pub fn evolve_checked(
    state: &CollectiveState,
    generator: &Liouvillian,
    config: &IntegratorConfig,
) -> Result<ExactRun> {
    run(state, generator, config, true)
}

fn run(state: &CollectiveState, generator: &Liouvillian, config: &IntegratorConfig, check: bool) -> Result<ExactRun> {
    let d = generator.basis().dim();
    if state.dim != d {
        return Err(Error::InvalidLayout(format!(
            "state dimension {} does not match generator dimension {d}",
            state.dim
        )));
    }
    let y0: Vec<f64> = cast_slice(&state.rho).to_vec();
    let mut worst = check.then(|| state.defects());
    let sol: Solution = integrate_with_hook(generator, &y0, 0.0, config, |_, y| {
        if let Some(w) = worst.as_mut() {
            let s = CollectiveState::from_raw(d, cast_slice(y).to_vec());
            *w = w.worst(s.defects());
        }
    })?;
    Ok(ExactRun {
        trajectory: sol.trajectory,
        final_state: CollectiveState::from_raw(d, cast_slice(&sol.final_state).to_vec()),
        names: generator.observable_names(),
        n_subensembles: generator.basis().n_factors(),
        accepted_steps: sol.accepted_steps,
        steady_time: sol.steady_time,
        defects: worst,
    })
}

/// The generator restricted to the blocks of `ρ` with equal total excitation
/// number on both sides.
///
/// Every term of the master equation conserves or lowers the excitation
/// number on both sides at once, so these blocks evolve on their own and
/// carry all populations, the emission rate and the trace. Coherences between
/// different excitation numbers are dropped; the block-diagonal part of a
/// density matrix is itself a density matrix.
#[derive(Clone, Debug)]
pub struct PopulationDynamics {
    n_factors: usize,
    counts: Vec<u64>,
    dim: usize,
    blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
struct Block {
    states: Vec<usize>,
    offset: usize,
    /// `−iH − ½A`
    k: BlockOp,
    decay: BlockOp,
    /// `(weight, L, R)` from the block above.
    jumps: Vec<(f64, BlockOp, BlockOp)>,
    numbers: Vec<Vec<f64>>,
}

/// Rectangular complex CSR operator between two excitation blocks.
#[derive(Clone, Debug, Default)]
struct BlockOp {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<Complex64>,
}

impl BlockOp {
    fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.ptr[r]..self.ptr[r + 1];
        self.idx[span.clone()].iter().copied().zip(self.val[span].iter().copied())
    }

    fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    /// `out += s · (self · x)` with `x` row-major of width `w`.
    fn left_acc(&self, x: &[Complex64], w: usize, s: Complex64, out: &mut [Complex64]) {
        for r in 0..self.rows() {
            let dst = &mut out[r * w..(r + 1) * w];
            for (k, v) in self.row(r) {
                let f = s * v;
                for (d, x) in dst.iter_mut().zip(&x[k * w..(k + 1) * w]) {
                    *d += f * x;
                }
            }
        }
    }

    /// `out += s · (x · opᵀ)` where `op` is `self` or its conjugate.
    fn right_transpose_acc(&self, x: &[Complex64], w: usize, conj: bool, s: Complex64, out: &mut [Complex64]) {
        let n = self.rows();
        for (src, dst) in x.chunks_exact(w).zip(out.chunks_exact_mut(n)) {
            for (j, d) in dst.iter_mut().enumerate() {
                let mut acc = ZERO;
                for (k, v) in self.row(j) {
                    acc += src[k] * if conj { v.conj() } else { v };
                }
                *d += s * acc;
            }
        }
    }
}

impl PopulationDynamics {
    pub fn new(generator: &Liouvillian) -> Self {
        let basis = &generator.basis;
        let d = basis.dim();
        let m = basis.n_factors();
        let total = |i: usize| (0..m).map(|a| basis.excitations(i, a)).sum::<u64>() as usize;
        let n_max = basis.counts.iter().sum::<u64>() as usize;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_max + 1];
        for i in 0..d {
            members[total(i)].push(i);
        }
        let mut local = vec![0usize; d];
        for states in &members {
            for (k, &i) in states.iter().enumerate() {
                local[i] = k;
            }
        }
        // Block of `ops` mapping excitation level `to` onto level `from`.
        let restrict = |ops: &[(Complex64, &SparseMatrix)], from: usize, to: usize| {
            let mut out = BlockOp { ptr: vec![0], ..BlockOp::default() };
            let mut row: BTreeMap<usize, Complex64> = BTreeMap::new();
            for &i in &members[from] {
                row.clear();
                for (s, op) in ops {
                    for (j, v) in op.row(i) {
                        if total(j) == to {
                            *row.entry(local[j]).or_insert(ZERO) += s * v;
                        }
                    }
                }
                for (&j, &v) in &row {
                    if v != ZERO {
                        out.idx.push(j);
                        out.val.push(v);
                    }
                }
                out.ptr.push(out.idx.len());
            }
            out
        };

        let mut offset = 0;
        let mut blocks = Vec::with_capacity(members.len());
        for (n, states) in members.iter().enumerate() {
            let k = restrict(&[(-I, &generator.hamiltonian), (Complex64::new(-0.5, 0.0), &generator.decay)], n, n);
            let decay = restrict(&[(ONE, &generator.decay)], n, n);
            let jumps = if n < n_max {
                generator
                    .jumps
                    .iter()
                    .map(|(w, l, r)| (*w, restrict(&[(ONE, l)], n, n + 1), restrict(&[(ONE, r)], n, n + 1)))
                    .collect()
            } else {
                Vec::new()
            };
            let numbers = generator
                .numbers
                .iter()
                .map(|op| states.iter().map(|&i| op.get(i, i)).collect())
                .collect();
            blocks.push(Block { states: states.clone(), offset, k, decay, jumps, numbers });
            offset += states.len() * states.len();
        }
        Self { n_factors: m, counts: basis.counts.clone(), dim: d, blocks }
    }

    /// Number of complex entries kept.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.states.len() * b.states.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block-diagonal part of `state`, row-major within each block.
    pub fn project(&self, state: &CollectiveState) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.len()];
        for b in &self.blocks {
            let d = b.states.len();
            for (r, &i) in b.states.iter().enumerate() {
                for (c, &j) in b.states.iter().enumerate() {
                    out[b.offset + r * d + c] = state.get(i, j);
                }
            }
        }
        out
    }

    pub fn assemble(&self, y: &[Complex64]) -> CollectiveState {
        let mut rho = vec![ZERO; self.dim * self.dim];
        for b in &self.blocks {
            let d = b.states.len();
            for (r, &i) in b.states.iter().enumerate() {
                for (c, &j) in b.states.iter().enumerate() {
                    rho[i * self.dim + j] = y[b.offset + r * d + c];
                }
            }
        }
        CollectiveState::from_raw(self.dim, rho)
    }

    fn block<'a>(&self, y: &'a [Complex64], n: usize) -> &'a [Complex64] {
        let b = &self.blocks[n];
        &y[b.offset..b.offset + b.states.len() * b.states.len()]
    }

    pub fn apply(&self, y: &[Complex64], out: &mut [Complex64]) {
        let mut tmp = Vec::new();
        for (n, b) in self.blocks.iter().enumerate() {
            let d = b.states.len();
            let rho = self.block(y, n);
            let dst = &mut out[b.offset..b.offset + d * d];
            dst.iter_mut().for_each(|v| *v = ZERO);
            // Kρ + ρK†
            b.k.left_acc(rho, d, ONE, dst);
            b.k.right_transpose_acc(rho, d, true, ONE, dst);
            if !b.jumps.is_empty() {
                let above = self.block(y, n + 1);
                let da = self.blocks[n + 1].states.len();
                for (w, l, r) in &b.jumps {
                    tmp.clear();
                    tmp.resize(d * da, ZERO);
                    l.left_acc(above, da, ONE, &mut tmp);
                    r.right_transpose_acc(&tmp, da, false, Complex64::new(*w, 0.0), dst);
                }
            }
        }
    }

    /// `[⟨σ^ee_a⟩…, total excitation, emission rate, trace]`.
    pub fn observables(&self, y: &[Complex64], out: &mut [f64]) {
        let m = self.n_factors;
        out[..m + 3].iter_mut().for_each(|v| *v = 0.0);
        for (n, b) in self.blocks.iter().enumerate() {
            let d = b.states.len();
            let rho = self.block(y, n);
            for i in 0..d {
                let p = rho[i * d + i].re;
                for a in 0..m {
                    out[a] += b.numbers[a][i] * p;
                }
                out[m + 2] += p;
                // tr(Aρ) = Σ A_ic ρ_ci
                for (c, v) in b.decay.row(i) {
                    out[m + 1] += (v * rho[c * d + i]).re;
                }
            }
        }
        let mut total = 0.0;
        for a in 0..m {
            total += out[a];
            out[a] /= self.counts[a] as f64;
        }
        out[m] = total;
    }

    pub fn defects(&self, y: &[Complex64]) -> StateDefects {
        let mut worst = StateDefects { trace_error: 0.0, hermiticity_error: 0.0, min_eigenvalue: f64::INFINITY };
        let mut trace = ZERO;
        for n in 0..self.blocks.len() {
            let d = self.blocks[n].states.len();
            if d == 0 {
                continue;
            }
            let rho = DMatrix::from_row_slice(d, d, self.block(y, n));
            for i in 0..d {
                trace += rho[(i, i)];
                for j in i..d {
                    worst.hermiticity_error = worst.hermiticity_error.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
                }
            }
            let h = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
            let min = h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            worst.min_eigenvalue = worst.min_eigenvalue.min(min);
        }
        worst.trace_error = (trace - ONE).norm();
        worst
    }
}

impl OdeSystem for PopulationDynamics {
    fn dim(&self) -> usize {
        2 * self.len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.apply(cast_slice(y), cast_slice_mut(dy));
    }

    fn n_observables(&self) -> usize {
        self.n_factors + 3
    }

    fn observe(&self, y: &[f64], out: &mut [f64]) {
        self.observables(cast_slice(y), out);
    }

    fn steady_observables(&self) -> Option<Vec<usize>> {
        Some((0..self.n_factors).collect())
    }
}

/// As [`evolve`], keeping only the excitation-number blocks of `ρ`.
///
/// Observables are identical to a full run; the final state is the
/// block-diagonal part of the full one.
pub fn evolve_populations(
    state: &CollectiveState,
    generator: &Liouvillian,
    config: &IntegratorConfig,
    check: bool,
) -> Result<ExactRun> {
    if state.dim != generator.basis().dim() {
        return Err(Error::InvalidLayout(format!(
            "state dimension {} does not match generator dimension {}",
            state.dim,
            generator.basis().dim()
        )));
    }
    let dynamics = PopulationDynamics::new(generator);
    let y0: Vec<f64> = cast_slice(&dynamics.project(state)).to_vec();
    let mut worst = check.then(|| dynamics.defects(cast_slice(&y0)));
    let sol = integrate_with_hook(&dynamics, &y0, 0.0, config, |_, y| {
        if let Some(w) = worst.as_mut() {
            *w = w.worst(dynamics.defects(cast_slice(y)));
        }
    })?;
    Ok(ExactRun {
        trajectory: sol.trajectory,
        final_state: dynamics.assemble(cast_slice(&sol.final_state)),
        names: generator.observable_names(),
        n_subensembles: generator.basis().n_factors(),
        accepted_steps: sol.accepted_steps,
        steady_time: sol.steady_time,
        defects: worst,
    })
}
