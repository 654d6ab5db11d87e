use nalgebra::DMatrix;
use num_complex::Complex64;
use wgdicke::coupling::WaveguideModel;
use wgdicke::ode::OdeSystem;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Atom-by-atom master equation on the full `2^N` space, built from
/// Kronecker products of single-atom matrices.
pub struct FullSpace {
    pub h: CMat,
    pub lowering: Vec<CMat>,
    pub gamma: DMatrix<f64>,
    pub ee: Vec<CMat>,
}

impl FullSpace {
    pub fn new(model: &WaveguideModel, positions: &[f64]) -> Self {
        let n = positions.len();
        let sm = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]); // basis {|g⟩, |e⟩}
        let id = CMat::identity(2, 2);
        let embed = |op: &CMat, k: usize| {
            (0..n).fold(CMat::identity(1, 1), |acc, i| acc.kronecker(if i == k { op } else { &id }))
        };
        let lowering: Vec<CMat> = (0..n).map(|k| embed(&sm, k)).collect();
        let ee: Vec<CMat> = lowering.iter().map(|l| l.adjoint() * l).collect();
        let d = 1 << n;
        let mut h = CMat::zeros(d, d);
        let mut gamma = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let dx = (positions[i] - positions[j]).abs();
                gamma[(i, j)] = model.gamma1d * (model.k_eff * dx).cos();
                if i != j {
                    h += lowering[i].adjoint() * &lowering[j] * c(0.5 * model.gamma1d * (model.k_eff * dx).sin());
                }
            }
        }
        Self { h, lowering, gamma, ee }
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let i = Complex64::i();
        let mut out = (&self.h * rho - rho * &self.h) * (-i);
        let n = self.lowering.len();
        for a in 0..n {
            for b in 0..n {
                let g = c(self.gamma[(a, b)]);
                let la = &self.lowering[a];
                let lb = &self.lowering[b];
                let ab = la.adjoint() * lb;
                out += (lb * rho * la.adjoint() * c(2.0) - &ab * rho - rho * &ab) * (g * 0.5);
            }
        }
        out
    }
}

pub struct FullSystem(pub FullSpace, pub usize);

impl OdeSystem for FullSystem {
    fn dim(&self) -> usize {
        2 * self.1 * self.1
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.1;
        let rho = CMat::from_fn(d, d, |r, k| Complex64::new(y[2 * (r * d + k)], y[2 * (r * d + k) + 1]));
        let out = self.0.apply(&rho);
        for r in 0..d {
            for k in 0..d {
                dy[2 * (r * d + k)] = out[(r, k)].re;
                dy[2 * (r * d + k) + 1] = out[(r, k)].im;
            }
        }
    }
    fn n_observables(&self) -> usize {
        self.0.ee.len()
    }
    fn observe(&self, y: &[f64], out: &mut [f64]) {
        let d = self.1;
        for (o, ee) in out.iter_mut().zip(&self.0.ee) {
            *o = (0..d).map(|r| ee[(r, r)].re * y[2 * (r * d + r)]).sum();
        }
    }
}


/// Single-atom state `cos(θ/2)|g⟩ + e^{iφ} sin(θ/2)|e⟩` in the basis `{|g⟩, |e⟩}`.
pub fn single_atom(theta: f64, phi: f64) -> [Complex64; 2] {
    [c((0.5 * theta).cos()), Complex64::from_polar((0.5 * theta).sin(), phi)]
}

/// Product of single-atom states as a `2^N` vector.
pub fn product_state(atoms: &[(f64, f64)]) -> Vec<Complex64> {
    let mut psi = vec![c(1.0)];
    for &(theta, phi) in atoms {
        let a = single_atom(theta, phi);
        psi = psi.iter().flat_map(|&p| a.iter().map(move |&q| p * q)).collect();
    }
    psi
}
