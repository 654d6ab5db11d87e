//! Real sparse matrices acting on dense complex matrices.

use num_complex::Complex64;

/// Compressed sparse row matrix with real entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)))
    }

    /// Builds from `(row, col, value)`; duplicates are summed, zeros dropped.
    pub fn from_triplets<I: IntoIterator<Item = (usize, usize, f64)>>(n: usize, triplets: I) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of bounds for n = {n}");
            rows[r].push((c, v));
        }
        let mut out = Self::zeros(n);
        for (r, mut entries) in rows.into_iter().enumerate() {
            entries.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in entries {
                if last == Some(c) {
                    *out.vals.last_mut().unwrap() += v;
                } else {
                    out.cols.push(c);
                    out.vals.push(v);
                    last = Some(c);
                }
            }
            out.row_ptr[r + 1] = out.cols.len();
        }
        out.prune()
    }

    fn prune(self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for (c, v) in self.row(r) {
                if v != 0.0 {
                    out.cols.push(c);
                    out.vals.push(v);
                }
            }
            out.row_ptr[r + 1] = out.cols.len();
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v)))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out.prune()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_triplets(self.n, self.triplets().chain(other.triplets()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut acc = vec![0.0; n];
        let mut touched = Vec::new();
        let mut out = Self::zeros(n);
        for r in 0..n {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &c in &touched {
                if acc[c] != 0.0 {
                    out.cols.push(c);
                    out.vals.push(acc[c]);
                }
                acc[c] = 0.0;
            }
            touched.clear();
            out.row_ptr[r + 1] = out.cols.len();
        }
        out
    }

    /// `out += s · (self · x)` for row-major `n × n` complex `x`.
    pub fn left_mul_acc(&self, x: &[Complex64], s: Complex64, out: &mut [Complex64]) {
        let n = self.n;
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for (k, v) in self.row(r) {
                let w = s * v;
                let src = &x[k * n..(k + 1) * n];
                for (d, x) in dst.iter_mut().zip(src) {
                    *d += w * x;
                }
            }
        }
    }

    /// `out += s · (x · selfᵀ)`.
    pub fn right_mul_transpose_acc(&self, x: &[Complex64], s: Complex64, out: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let src = &x[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (j, d) in dst.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, v) in self.row(j) {
                    acc += src[k] * v;
                }
                *d += s * acc;
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}
