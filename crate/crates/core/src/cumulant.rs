//! Second-order cumulant equations for homogeneous sub-ensembles.
//!
//! Atoms inside a sub-ensemble are interchangeable, so every expectation value
//! depends only on which sub-ensembles its atoms belong to. Moments are
//! therefore labeled by a multiset of `(ensemble, transition)` pairs over
//! distinct atoms, and sums over atoms turn into the symbolic weights `N_c` or
//! `N_c − k`. One derivation serves every atom number and every geometry with
//! the same number of sub-ensembles; couplings and counts are bound when the
//! system is compiled.
//!
//! Heisenberg picture:
//!
//! ```text
//! d⟨O⟩/dt = i⟨[H, O]⟩ + Σ_ij (Γ_ij/2) ⟨2σ⁺_i O σ⁻_j − σ⁺_i σ⁻_j O − O σ⁺_i σ⁻_j⟩
//! ```
//!
//! Third-order moments are closed with
//! `⟨ABC⟩ → ⟨AB⟩⟨C⟩ + ⟨AC⟩⟨B⟩ + ⟨BC⟩⟨A⟩ − 2⟨A⟩⟨B⟩⟨C⟩`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::{Arc, Mutex, OnceLock};

use bytemuck::{cast_slice, cast_slice_mut};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{build_matrices, EnsembleLayout, WaveguideModel};
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegratorConfig, OdeSystem, Trajectory};

/// Atomic transition operator `σ^{ab} = |a⟩⟨b|` kept in moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    /// `σ⁺ = |e⟩⟨g|`
    Eg,
    /// `σ⁻ = |g⟩⟨e|`
    Ge,
    /// `|e⟩⟨e|`
    Ee,
}

impl Kind {
    pub fn conj(self) -> Self {
        match self {
            Kind::Eg => Kind::Ge,
            Kind::Ge => Kind::Eg,
            Kind::Ee => Kind::Ee,
        }
    }

    fn site(self) -> Site {
        match self {
            Kind::Eg => Site { ket: E, bra: G },
            Kind::Ge => Site { ket: G, bra: E },
            Kind::Ee => Site { ket: E, bra: E },
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Kind::Eg => "eg",
            Kind::Ge => "ge",
            Kind::Ee => "ee",
        }
    }
}

const G: u8 = 0;
const E: u8 = 1;

/// Single-site transition including `|g⟩⟨g|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Site {
    ket: u8,
    bra: u8,
}

impl Site {
    fn mul(self, rhs: Site) -> Option<Site> {
        (self.bra == rhs.ket).then_some(Site { ket: self.ket, bra: rhs.bra })
    }

    /// Expansion into kept kinds, using `|g⟩⟨g| = 1 − |e⟩⟨e|`.
    fn expand(self) -> &'static [(f64, Option<Kind>)] {
        match (self.ket, self.bra) {
            (E, G) => &[(1.0, Some(Kind::Eg))],
            (G, E) => &[(1.0, Some(Kind::Ge))],
            (E, E) => &[(1.0, Some(Kind::Ee))],
            _ => &[(1.0, None), (-1.0, Some(Kind::Ee))],
        }
    }
}

/// A representative atom: `slot` distinguishes atoms of one ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub ensemble: usize,
    pub slot: u8,
}

impl Atom {
    /// Slot of the summed-over atom not present in the differentiated moment.
    pub const FRESH: u8 = u8::MAX;
}

/// Expectation value of a product of transitions on distinct atoms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Moment(Vec<(usize, Kind)>);

impl Moment {
    pub fn new(mut factors: Vec<(usize, Kind)>) -> Self {
        factors.sort();
        Self(factors)
    }

    pub fn single(ensemble: usize, kind: Kind) -> Self {
        Self(vec![(ensemble, kind)])
    }

    pub fn pair(a: (usize, Kind), b: (usize, Kind)) -> Self {
        Self::new(vec![a, b])
    }

    pub fn factors(&self) -> &[(usize, Kind)] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.0.iter().map(|&(c, k)| (c, k.conj())).collect())
    }

    /// Stored representative and whether `self` is its conjugate.
    pub fn canonical(&self) -> (Moment, bool) {
        let c = self.conj();
        if c < *self {
            (c, true)
        } else {
            (self.clone(), false)
        }
    }

    pub fn is_real(&self) -> bool {
        self.conj() == *self
    }

    /// Atoms this moment needs from `ensemble`.
    pub fn atoms_in(&self, ensemble: usize) -> usize {
        self.0.iter().filter(|(c, _)| *c == ensemble).count()
    }

    fn atoms(&self) -> Vec<(Atom, Kind)> {
        let mut out = Vec::with_capacity(self.0.len());
        for (i, &(c, k)) in self.0.iter().enumerate() {
            let slot = self.0[..i].iter().filter(|(cc, _)| *cc == c).count() as u8;
            out.push((Atom { ensemble: c, slot }, k));
        }
        out
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("⟨")?;
        for (i, (c, k)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "σ{}_{}", k.symbol(), c)?;
        }
        f.write_str("⟩")
    }
}

/// Symbolic parameter of a coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    /// `Γ_ab`, symmetric.
    Gamma(usize, usize),
    /// `Ω_ab`, symmetric.
    Omega(usize, usize),
    /// `N_c − offset`.
    Count(usize, usize),
}

impl Param {
    fn gamma(a: usize, b: usize) -> Self {
        Param::Gamma(a.min(b), a.max(b))
    }

    fn omega(a: usize, b: usize) -> Self {
        Param::Omega(a.min(b), a.max(b))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Param::Gamma(a, b) => write!(f, "Γ{a}{b}"),
            Param::Omega(a, b) => write!(f, "Ω{a}{b}"),
            Param::Count(c, 0) => write!(f, "N{c}"),
            Param::Count(c, k) => write!(f, "(N{c}-{k})"),
        }
    }
}

/// Polynomial in [`Param`] with complex coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly(BTreeMap<Vec<Param>, Complex64>);

impl Poly {
    pub fn monomial(c: Complex64, mut params: Vec<Param>) -> Self {
        params.sort();
        let mut p = Poly::default();
        p.add_monomial(params, c);
        p
    }

    fn add_monomial(&mut self, params: Vec<Param>, c: Complex64) {
        let entry = self.0.entry(params).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
    }

    pub fn add(&mut self, other: &Poly) {
        for (k, &c) in &other.0 {
            self.add_monomial(k.clone(), c);
        }
    }

    pub fn scaled(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|(k, &c)| (k.clone(), c * s)).collect())
    }

    /// Drops monomials that cancelled exactly.
    pub fn simplify(&mut self) {
        self.0.retain(|_, c| c.norm() > 1e-14);
    }

    pub fn is_zero(&self) -> bool {
        self.0.values().all(|c| c.norm() <= 1e-14)
    }

    pub fn monomials(&self) -> impl Iterator<Item = (&[Param], Complex64)> {
        self.0.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    pub fn eval(&self, value: impl Fn(Param) -> f64) -> Complex64 {
        self.0.iter().map(|(k, &c)| c * k.iter().map(|&p| value(p)).product::<f64>()).sum()
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (params, c) in &self.0 {
            let (text, negative) = format_constant(*c);
            if first {
                if negative {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if negative { " - " } else { " + " })?;
            }
            first = false;
            let mut parts: Vec<String> = Vec::new();
            if text != "1" || params.is_empty() {
                parts.push(text);
            }
            parts.extend(params.iter().map(|p| p.to_string()));
            f.write_str(&parts.join("·"))?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

fn format_constant(c: Complex64) -> (String, bool) {
    if c.im == 0.0 {
        (format!("{}", c.re.abs()), c.re < 0.0)
    } else if c.re == 0.0 {
        (format!("{}i", c.im.abs()), c.im < 0.0)
    } else {
        (format!("({}{:+}i)", c.re, c.im), false)
    }
}

/// One factor of a closed term: a stored moment, possibly conjugated.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub moment: Moment,
    pub conj: bool,
}

impl Factor {
    fn of(factors: Vec<(usize, Kind)>) -> Self {
        let (moment, conj) = Moment::new(factors).canonical();
        Self { moment, conj }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conj {
            write!(f, "conj{}", self.moment)
        } else {
            write!(f, "{}", self.moment)
        }
    }
}

/// Unclosed contribution to a derivative: coefficient times the expectation
/// of a product of transitions on distinct atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTerm {
    pub coeff: Poly,
    pub operators: Vec<(Atom, Kind)>,
}

/// Exact derivative of a first- or second-order moment as a sum of moments
/// of order at most three.
pub fn adjoint_derivative(target: &Moment, n_ensembles: usize) -> Result<Vec<RawTerm>> {
    if target.order() == 0 || target.order() > 2 {
        return Err(Error::OrderTooHigh(target.order()));
    }
    if let Some(&(c, _)) = target.factors().iter().find(|(c, _)| *c >= n_ensembles) {
        return Err(Error::InvalidLayout(format!("moment refers to ensemble {c} of {n_ensembles}")));
    }
    let o: Vec<(Atom, Site)> = target.atoms().into_iter().map(|(a, k)| (a, k.site())).collect();
    let mut index: Vec<(Atom, Option<Param>)> = o.iter().map(|&(a, _)| (a, None)).collect();
    for c in 0..n_ensembles {
        index.push((Atom { ensemble: c, slot: Atom::FRESH }, Some(Param::Count(c, target.atoms_in(c)))));
    }

    let raise = Site { ket: E, bra: G };
    let lower = Site { ket: G, bra: E };
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let mut raw: Vec<(Complex64, Vec<Param>, Vec<(Atom, Site)>)> = Vec::new();
    for &(ai, wi) in &index {
        for &(aj, wj) in &index {
            if wi.is_some() && wj.is_some() {
                continue;
            }
            let weight: Vec<Param> = wi.into_iter().chain(wj).collect();
            let jump = [(ai, raise), (aj, lower)];
            let with = |p: Param| {
                let mut w = weight.clone();
                w.push(p);
                w
            };
            if ai != aj && ai.ensemble != aj.ensemble {
                let w = with(Param::omega(ai.ensemble, aj.ensemble));
                raw.push((i, w.clone(), [&jump[..], &o].concat()));
                raw.push((-i, w, [&o[..], &jump].concat()));
            }
            let w = with(Param::gamma(ai.ensemble, aj.ensemble));
            raw.push((one, w.clone(), [&[(ai, raise)][..], &o, &[(aj, lower)]].concat()));
            raw.push((-0.5 * one, w.clone(), [&jump[..], &o].concat()));
            raw.push((-0.5 * one, w, [&o[..], &jump].concat()));
        }
    }

    let mut out: BTreeMap<Vec<(Atom, Kind)>, Poly> = BTreeMap::new();
    for (c, params, product) in raw {
        let Some(sites) = reduce(&product) else { continue };
        for (sign, ops) in expand(&sites) {
            out.entry(ops).or_default().add(&Poly::monomial(c * sign, params.clone()));
        }
    }
    Ok(out
        .into_iter()
        .filter_map(|(operators, mut coeff)| {
            coeff.simplify();
            (!coeff.is_zero()).then_some(RawTerm { coeff, operators })
        })
        .collect())
}

/// Multiplies per atom, keeping the order of factors on each atom.
fn reduce(product: &[(Atom, Site)]) -> Option<BTreeMap<Atom, Site>> {
    let mut out: BTreeMap<Atom, Site> = BTreeMap::new();
    for &(a, s) in product {
        match out.get_mut(&a) {
            Some(prev) => *prev = prev.mul(s)?,
            None => {
                out.insert(a, s);
            }
        }
    }
    Some(out)
}

fn expand(sites: &BTreeMap<Atom, Site>) -> Vec<(f64, Vec<(Atom, Kind)>)> {
    let mut acc: Vec<(f64, Vec<(Atom, Kind)>)> = vec![(1.0, Vec::new())];
    for (&atom, site) in sites {
        let mut next = Vec::with_capacity(acc.len() * 2);
        for (sign, ops) in &acc {
            for &(s, kind) in site.expand() {
                let mut ops = ops.clone();
                if let Some(k) = kind {
                    ops.push((atom, k));
                }
                next.push((sign * s, ops));
            }
        }
        acc = next;
    }
    acc
}

/// Expectation of a product on distinct atoms in terms of first- and
/// second-order moments; third order is closed by dropping the cumulant.
pub fn cumulant_close(operators: &[(Atom, Kind)]) -> Vec<(f64, Vec<Factor>)> {
    let f = |ops: &[&(Atom, Kind)]| Factor::of(ops.iter().map(|(a, k)| (a.ensemble, *k)).collect());
    match operators {
        [] => vec![(1.0, Vec::new())],
        [a] => vec![(1.0, vec![f(&[a])])],
        [a, b] => vec![(1.0, vec![f(&[a, b])])],
        [a, b, c] => vec![
            (1.0, vec![f(&[a, b]), f(&[c])]),
            (1.0, vec![f(&[a, c]), f(&[b])]),
            (1.0, vec![f(&[b, c]), f(&[a])]),
            (-2.0, vec![f(&[a]), f(&[b]), f(&[c])]),
        ],
        _ => panic!("closure of order {} is not supported", operators.len()),
    }
}

/// One term of a closed equation.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: Poly,
    pub factors: Vec<Factor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equation {
    pub target: Moment,
    pub terms: Vec<Term>,
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}/dt =", self.target)?;
        if self.terms.is_empty() {
            return f.write_str(" 0");
        }
        for (n, t) in self.terms.iter().enumerate() {
            let prod: Vec<String> = t.factors.iter().map(|x| x.to_string()).collect();
            let tail = if prod.is_empty() { String::new() } else { format!("·{}", prod.join("·")) };
            let sep = if n == 0 { " " } else { " + " };
            write!(f, "{sep}[{}]{tail}", t.coeff)?;
        }
        Ok(())
    }
}

/// Closed derivative of `target`.
pub fn derive_equation(target: &Moment, n_ensembles: usize) -> Result<Equation> {
    let mut acc: BTreeMap<Vec<Factor>, Poly> = BTreeMap::new();
    for raw in adjoint_derivative(target, n_ensembles)? {
        for (s, mut factors) in cumulant_close(&raw.operators) {
            factors.sort();
            acc.entry(factors).or_default().add(&raw.coeff.scaled(s));
        }
    }
    let terms = acc
        .into_iter()
        .filter_map(|(factors, mut coeff)| {
            coeff.simplify();
            (!coeff.is_zero()).then_some(Term { coeff, factors })
        })
        .collect();
    Ok(Equation { target: target.clone(), terms })
}

/// Closed moment equations for a given number of sub-ensembles, independent
/// of atom numbers and positions.
#[derive(Clone, Debug)]
pub struct SymbolicSystem {
    n_ensembles: usize,
    equations: Vec<Equation>,
}

impl SymbolicSystem {
    pub fn n_ensembles(&self) -> usize {
        self.n_ensembles
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn moments(&self) -> impl Iterator<Item = &Moment> {
        self.equations.iter().map(|e| &e.target)
    }

    /// Number of moments when each conjugate is counted on its own.
    pub fn count_with_conjugates(&self) -> usize {
        self.moments().map(|m| if m.is_real() { 1 } else { 2 }).sum()
    }

    /// Human-readable listing, one equation per line after a count header.
    pub fn listing(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {} sub-ensembles: {} equations with conjugate pairs stored once, {} counting conjugates separately",
            self.n_ensembles,
            self.len(),
            self.count_with_conjugates()
        );
        for e in &self.equations {
            let _ = writeln!(s, "{e}");
        }
        s
    }
}

/// Derives the closed system for `n_ensembles`, memoized per count.
pub fn derive_system(n_ensembles: usize) -> Result<Arc<SymbolicSystem>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SymbolicSystem>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache.lock().unwrap().get(&n_ensembles) {
        return Ok(s.clone());
    }
    let system = Arc::new(derive_uncached(n_ensembles)?);
    cache.lock().unwrap().insert(n_ensembles, system.clone());
    Ok(system)
}

fn derive_uncached(n_ensembles: usize) -> Result<SymbolicSystem> {
    if n_ensembles == 0 {
        return Err(Error::InvalidLayout("no sub-ensembles".into()));
    }
    let mut pending: Vec<Moment> = Vec::new();
    for c in 0..n_ensembles {
        pending.push(Moment::single(c, Kind::Eg));
        pending.push(Moment::single(c, Kind::Ee));
    }
    let mut seen: BTreeSet<Moment> = pending.iter().cloned().collect();
    let mut equations = Vec::new();
    while let Some(m) = pending.pop() {
        let eq = derive_equation(&m, n_ensembles)?;
        for t in &eq.terms {
            for f in &t.factors {
                if seen.insert(f.moment.clone()) {
                    pending.push(f.moment.clone());
                }
            }
        }
        equations.push(eq);
    }
    equations.sort_by(|a, b| (a.target.order(), &a.target).cmp(&(b.target.order(), &b.target)));
    Ok(SymbolicSystem { n_ensembles, equations })
}

/// Options for binding a symbolic system to a layout.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CumulantOptions {
    /// Drop the coherent exchange `Ω`.
    pub zero_omega: bool,
}

#[derive(Clone, Copy, Debug)]
struct CompiledTerm {
    target: u32,
    len: u8,
    factors: [u32; 3],
    conj: [bool; 3],
    coeff: Complex64,
}

/// Closed equations bound to atom numbers and couplings, ready to integrate.
#[derive(Clone, Debug)]
pub struct MomentSystem {
    symbolic: Arc<SymbolicSystem>,
    counts: Vec<u64>,
    gamma: Vec<Vec<f64>>,
    moments: Vec<Moment>,
    lookup: HashMap<Moment, usize>,
    terms: Vec<CompiledTerm>,
    ee: Vec<usize>,
    emission: Vec<(usize, f64)>,
}

impl MomentSystem {
    pub fn new(model: &WaveguideModel, layout: &EnsembleLayout) -> Result<Self> {
        Self::with_options(model, layout, &CumulantOptions::default())
    }

    pub fn with_options(model: &WaveguideModel, layout: &EnsembleLayout, options: &CumulantOptions) -> Result<Self> {
        let coupling = build_matrices(model, layout)?;
        let m = layout.len();
        let symbolic = derive_system(m)?;
        let counts = layout.counts();
        let feasible = |mo: &Moment| (0..m).all(|c| mo.atoms_in(c) as u64 <= counts[c]);

        let moments: Vec<Moment> = symbolic.moments().filter(|mo| feasible(mo)).cloned().collect();
        let lookup: HashMap<Moment, usize> = moments.iter().cloned().enumerate().map(|(i, mo)| (mo, i)).collect();

        let value = |p: Param| match p {
            Param::Gamma(a, b) => coupling.gamma[(a, b)],
            Param::Omega(a, b) if !options.zero_omega => coupling.omega[(a, b)],
            Param::Omega(..) => 0.0,
            Param::Count(c, k) => (counts[c] as f64 - k as f64).max(0.0),
        };

        let mut terms = Vec::new();
        for eq in symbolic.equations() {
            let Some(&target) = lookup.get(&eq.target) else { continue };
            for t in &eq.terms {
                let coeff = t.coeff.eval(value);
                if coeff.norm() == 0.0 {
                    continue;
                }
                let mut ct = CompiledTerm {
                    target: target as u32,
                    len: t.factors.len() as u8,
                    factors: [0; 3],
                    conj: [false; 3],
                    coeff,
                };
                let mut ok = true;
                for (k, f) in t.factors.iter().enumerate() {
                    match lookup.get(&f.moment) {
                        Some(&idx) => {
                            ct.factors[k] = idx as u32;
                            ct.conj[k] = f.conj;
                        }
                        None => ok = false,
                    }
                }
                if !ok {
                    return Err(Error::InvalidLayout(format!(
                        "{} couples to a moment that needs more atoms than the layout provides",
                        eq.target
                    )));
                }
                terms.push(ct);
            }
        }

        let ee = (0..m).map(|c| lookup[&Moment::single(c, Kind::Ee)]).collect();
        let mut emission = Vec::new();
        for a in 0..m {
            let na = counts[a] as f64;
            emission.push((lookup[&Moment::single(a, Kind::Ee)], na * coupling.gamma[(a, a)]));
            for b in 0..m {
                let pairs = if a == b { na * (na - 1.0) } else { na * counts[b] as f64 };
                if pairs > 0.0 && coupling.gamma[(a, b)] != 0.0 {
                    let (mo, _) = Moment::pair((a, Kind::Eg), (b, Kind::Ge)).canonical();
                    emission.push((lookup[&mo], pairs * coupling.gamma[(a, b)]));
                }
            }
        }

        Ok(Self {
            gamma: (0..m).map(|a| (0..m).map(|b| coupling.gamma[(a, b)]).collect()).collect(),
            symbolic,
            counts,
            moments,
            lookup,
            terms,
            ee,
            emission,
        })
    }

    pub fn symbolic(&self) -> &SymbolicSystem {
        &self.symbolic
    }

    pub fn n_ensembles(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn coupling_gamma(&self, a: usize, b: usize) -> f64 {
        self.gamma[a][b]
    }

    /// Stored moments, in state-vector order.
    pub fn moments(&self) -> &[Moment] {
        &self.moments
    }

    pub fn n_moments(&self) -> usize {
        self.moments.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn index_of(&self, m: &Moment) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    /// Value of any moment, resolving conjugates.
    pub fn value(&self, state: &[Complex64], m: &Moment) -> Option<Complex64> {
        let (canon, conj) = m.canonical();
        let v = state[self.index_of(&canon)?];
        Some(if conj { v.conj() } else { v })
    }

    /// Complex derivative of every stored moment.
    pub fn derivative(&self, state: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for t in &self.terms {
            let mut v = t.coeff;
            for k in 0..t.len as usize {
                let x = state[t.factors[k] as usize];
                v *= if t.conj[k] { x.conj() } else { x };
            }
            out[t.target as usize] += v;
        }
    }

    /// Product-state moments of the prepared coherent spin states.
    pub fn initial_state(&self, layout: &EnsembleLayout) -> Result<Vec<Complex64>> {
        layout.validate()?;
        if layout.counts() != self.counts {
            return Err(Error::InvalidLayout("layout does not match the compiled system".into()));
        }
        let single: Vec<[Complex64; 3]> = layout
            .subensembles
            .iter()
            .map(|s| {
                let th = s.effective_pulse_area();
                let (sn, cs) = (0.5 * th).sin_cos();
                let eg = Complex64::from_polar(sn * cs, -s.pulse_phase);
                [eg, eg.conj(), Complex64::new(sn * sn, 0.0)]
            })
            .collect();
        Ok(self
            .moments
            .iter()
            .map(|m| m.factors().iter().map(|&(c, k)| single[c][k as usize]).product())
            .collect())
    }

    pub fn observable_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_ensembles()).map(|a| format!("ee_{a}")).collect();
        names.extend(["total_excitation", "emission_rate"].map(String::from));
        names
    }
}

impl OdeSystem for MomentSystem {
    fn dim(&self) -> usize {
        2 * self.moments.len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.derivative(cast_slice(y), cast_slice_mut(dy));
    }

    fn n_observables(&self) -> usize {
        self.n_ensembles() + 2
    }

    fn observe(&self, y: &[f64], out: &mut [f64]) {
        let state: &[Complex64] = cast_slice(y);
        let m = self.n_ensembles();
        let mut total = 0.0;
        for a in 0..m {
            let ee = state[self.ee[a]].re;
            out[a] = ee;
            total += self.counts[a] as f64 * ee;
        }
        out[m] = total;
        out[m + 1] = self.emission.iter().map(|&(i, w)| w * state[i].re).sum();
    }

    fn steady_observables(&self) -> Option<Vec<usize>> {
        Some((0..self.n_ensembles()).collect())
    }
}

/// Output of a cumulant run.
#[derive(Clone, Debug)]
pub struct CumulantRun {
    pub trajectory: Trajectory,
    pub final_state: Vec<Complex64>,
    pub names: Vec<String>,
    pub n_subensembles: usize,
    pub accepted_steps: usize,
    pub steady_time: Option<f64>,
}

impl CumulantRun {
    pub fn total_index(&self) -> usize {
        self.n_subensembles
    }

    pub fn emission_index(&self) -> usize {
        self.n_subensembles + 1
    }
}

pub fn evolve(system: &MomentSystem, state: &[Complex64], config: &IntegratorConfig) -> Result<CumulantRun> {
    if state.len() != system.n_moments() {
        return Err(Error::InvalidLayout(format!(
            "state has {} moments, system has {}",
            state.len(),
            system.n_moments()
        )));
    }
    let sol = integrate(system, cast_slice(state), 0.0, config)?;
    Ok(CumulantRun {
        trajectory: sol.trajectory,
        final_state: cast_slice(&sol.final_state).to_vec(),
        names: system.observable_names(),
        n_subensembles: system.n_ensembles(),
        accepted_steps: sol.accepted_steps,
        steady_time: sol.steady_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::SubEnsemble;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn site_algebra() {
        let up = Kind::Eg.site();
        let down = Kind::Ge.site();
        assert_eq!(up.mul(down), Some(Kind::Ee.site()));
        assert_eq!(down.mul(up), Some(Site { ket: G, bra: G }));
        assert_eq!(up.mul(up), None);
    }

    #[test]
    fn commutator_of_ladder_operators() {
        // [σ⁺, σ⁻] = σ^{ee} − σ^{gg} = 2σ^{ee} − 1
        let a = Atom { ensemble: 0, slot: 0 };
        let up = Kind::Eg.site();
        let down = Kind::Ge.site();
        let mut acc: BTreeMap<Vec<(Atom, Kind)>, f64> = BTreeMap::new();
        for (sign, prod) in [(1.0, [(a, up), (a, down)]), (-1.0, [(a, down), (a, up)])] {
            for (s, ops) in expand(&reduce(&prod).unwrap()) {
                *acc.entry(ops).or_default() += sign * s;
            }
        }
        assert_eq!(acc[&vec![(a, Kind::Ee)]], 2.0);
        assert_eq!(acc[&vec![]], -1.0);
    }

    #[test]
    fn single_atom_decay() {
        let eq = derive_equation(&Moment::single(0, Kind::Ee), 1).unwrap();
        let model = WaveguideModel::default();
        let layout = EnsembleLayout::new(vec![SubEnsemble::pumped(1, 0.0, PI, 0.0)]).unwrap();
        let sys = MomentSystem::new(&model, &layout).unwrap();
        assert_eq!(sys.n_moments(), 2);
        let state = vec![Complex64::new(0.0, 0.0), Complex64::new(0.7, 0.0)];
        let mut out = vec![Complex64::new(0.0, 0.0); 2];
        sys.derivative(&state, &mut out);
        let ee = sys.index_of(&Moment::single(0, Kind::Ee)).unwrap();
        assert_abs_diff_eq!(out[ee].re, -0.7, epsilon = 1e-15);
        assert!(eq.to_string().contains("Γ00"));
    }

    #[test]
    fn cross_decay_term_weight() {
        let eq = derive_equation(&Moment::single(0, Kind::Ee), 2).unwrap();
        let cross = Factor::of(vec![(0, Kind::Eg), (1, Kind::Ge)]);
        let term = eq.terms.iter().find(|t| t.factors == vec![cross.clone()]).unwrap();
        let want = Poly::monomial(Complex64::new(-0.5, 0.0), vec![Param::Gamma(0, 1), Param::Count(1, 0)]);
        let got: Poly = Poly(term.coeff.0.iter().filter(|(k, _)| k.contains(&Param::Gamma(0, 1))).map(|(k, c)| (k.clone(), *c)).collect());
        assert_eq!(got, want);
    }

    #[test]
    fn rejects_high_order() {
        let m = Moment::new(vec![(0, Kind::Ee), (0, Kind::Ee), (0, Kind::Eg)]);
        assert!(matches!(adjoint_derivative(&m, 1), Err(Error::OrderTooHigh(3))));
    }

    #[test]
    fn closure_on_product_and_vanishing_states() {
        let ops = [
            (Atom { ensemble: 0, slot: 0 }, Kind::Eg),
            (Atom { ensemble: 1, slot: 0 }, Kind::Ee),
            (Atom { ensemble: 1, slot: 1 }, Kind::Ge),
        ];
        let closed = cumulant_close(&ops);
        let first = |f: &Factor| -> Complex64 {
            let v = match f.moment.factors()[0].1 {
                Kind::Eg => Complex64::new(0.3, -0.2),
                Kind::Ge => Complex64::new(0.3, 0.2),
                Kind::Ee => Complex64::new(0.6, 0.0),
            };
            if f.conj { v.conj() } else { v }
        };
        let product_value = |f: &Factor| -> Complex64 {
            if f.moment.order() == 1 {
                return first(f);
            }
            let v: Complex64 = f
                .moment
                .factors()
                .iter()
                .map(|&(c, k)| first(&Factor { moment: Moment::single(c, k), conj: false }))
                .product();
            if f.conj { v.conj() } else { v }
        };
        let total: Complex64 = closed
            .iter()
            .map(|(s, fs)| *s * fs.iter().map(product_value).product::<Complex64>())
            .sum();
        let want = Complex64::new(0.3, -0.2) * 0.6 * Complex64::new(0.3, 0.2);
        assert!((total - want).norm() < 1e-15);

        let zero: Complex64 = closed.iter().map(|(s, fs)| *s * fs.iter().map(|_| Complex64::new(0.0, 0.0)).product::<Complex64>()).sum();
        assert_eq!(zero, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn equation_counts() {
        for (m, stored, all) in [(1, 6, 9), (2, 17, 27), (8, 188, 324), (12, 402, 702)] {
            let s = derive_system(m).unwrap();
            assert_eq!(s.len(), stored, "M = {m}");
            assert_eq!(s.count_with_conjugates(), all, "M = {m}");
        }
    }

    #[test]
    fn single_atom_ensembles_drop_pair_moments() {
        let model = WaveguideModel::default();
        let layout = EnsembleLayout::two_ensembles(2, 1, PI, 1.0).unwrap();
        let sys = MomentSystem::new(&model, &layout).unwrap();
        assert!(sys.moments().iter().all(|m| (0..2).all(|c| m.atoms_in(c) <= 1)));
        assert_eq!(sys.n_moments(), 4 + 5);
    }

    #[test]
    fn initial_moments_follow_pulse() {
        let model = WaveguideModel::default();
        let layout = EnsembleLayout::new(vec![
            SubEnsemble::pumped(4, 0.0, 2.0 * PI / 3.0, 0.4),
            SubEnsemble::ground(3, 0.5),
        ])
        .unwrap();
        let sys = MomentSystem::new(&model, &layout).unwrap();
        let y = sys.initial_state(&layout).unwrap();
        assert_abs_diff_eq!(sys.value(&y, &Moment::single(0, Kind::Ee)).unwrap().re, 0.75, epsilon = 1e-15);
        let eg = sys.value(&y, &Moment::single(0, Kind::Eg)).unwrap();
        let want = Complex64::from_polar((PI / 3.0).sin() * (PI / 3.0).cos(), -0.4);
        assert!((eg - want).norm() < 1e-15);
        let ge = sys.value(&y, &Moment::single(0, Kind::Ge)).unwrap();
        assert!((ge - want.conj()).norm() < 1e-15);
        assert_eq!(sys.value(&y, &Moment::single(1, Kind::Ee)).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn listing_has_header_and_one_line_per_equation() {
        let s = derive_system(2).unwrap();
        let text = s.listing();
        assert!(text.starts_with("# 2 sub-ensembles: 17 equations"));
        assert_eq!(text.lines().count(), 18);
        let ee0 = text.lines().find(|l| l.starts_with("d⟨σee_0⟩/dt")).unwrap();
        assert!(ee0.contains("Γ01") && ee0.contains("⟨σeg_0 σge_1⟩"));
    }
}
