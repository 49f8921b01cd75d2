//! Multi-indexed arrays of periodic scalar fields with a variance signature.
//!
//! All tensor calculus happens in the global coordinates of the torus, so a
//! tensor is just its component fields plus bookkeeping about which slots are
//! vector (upper) and covector (lower).

use num_complex::Complex64;

use crate::fields::{Grid, PeriodicField};

/// Variance of one tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Vector,
    Covector,
}

/// A tensor field on the torus: `d^rank` component fields, row-major in the
/// indices (first slot outermost).
#[derive(Debug, Clone)]
pub struct TensorField {
    pub grid: Grid,
    pub variance: Vec<Slot>,
    pub comps: Vec<PeriodicField>,
}

impl TensorField {
    pub fn zeros(grid: Grid, variance: Vec<Slot>) -> Self {
        let count = grid.dim.pow(variance.len() as u32);
        TensorField {
            grid,
            variance,
            comps: (0..count).map(|_| PeriodicField::zeros(grid)).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        let mut f = 0;
        for &i in idx {
            debug_assert!(i < self.dim());
            f = f * self.dim() + i;
        }
        f
    }

    pub fn comp(&self, idx: &[usize]) -> &PeriodicField {
        &self.comps[self.flat(idx)]
    }

    pub fn comp_mut(&mut self, idx: &[usize]) -> &mut PeriodicField {
        let f = self.flat(idx);
        &mut self.comps[f]
    }

    pub fn set(&mut self, idx: &[usize], field: PeriodicField) {
        let f = self.flat(idx);
        self.comps[f] = field;
    }

    /// Constant tensor from a rank-2 coordinate matrix `m[i][j]`.
    pub fn from_const_matrix(grid: Grid, variance: Vec<Slot>, m: &[&[f64]]) -> Self {
        assert_eq!(variance.len(), 2);
        let mut t = TensorField::zeros(grid, variance);
        for i in 0..grid.dim {
            for j in 0..grid.dim {
                t.set(&[i, j], PeriodicField::constant(grid, m[i][j]));
            }
        }
        t
    }

    pub fn identity_endo(grid: Grid) -> Self {
        let mut t = TensorField::zeros(grid, vec![Slot::Vector, Slot::Covector]);
        for i in 0..grid.dim {
            t.set(&[i, i], PeriodicField::constant(grid, 1.0));
        }
        t
    }

    pub fn add(&self, other: &Self) -> Self {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect();
        TensorField { grid: self.grid, variance: self.variance.clone(), comps }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect();
        TensorField { grid: self.grid, variance: self.variance.clone(), comps }
    }

    pub fn scale(&self, s: f64) -> Self {
        let comps = self.comps.iter().map(|a| a.scale(s)).collect();
        TensorField { grid: self.grid, variance: self.variance.clone(), comps }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.comps.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Componentwise coordinate partial derivative (no connection terms).
    pub fn partial(&self, axis: usize) -> Self {
        let comps = self.comps.iter().map(|c| c.derivative(axis)).collect();
        TensorField { grid: self.grid, variance: self.variance.clone(), comps }
    }

    // ---- rank-2 pointwise matrix algebra ----

    /// Endomorphism composition `(AB)^a_c = A^a_b B^b_c` (rank-2 only).
    pub fn mat_mul(&self, other: &Self) -> Self {
        assert_eq!(self.rank(), 2);
        assert_eq!(other.rank(), 2);
        let d = self.dim();
        let mut out = TensorField::zeros(self.grid, vec![self.variance[0], other.variance[1]]);
        for a in 0..d {
            for c in 0..d {
                let mut acc = PeriodicField::zeros(self.grid);
                for b in 0..d {
                    acc.accumulate_product(
                        Complex64::new(1.0, 0.0),
                        self.comp(&[a, b]),
                        other.comp(&[b, c]),
                    );
                }
                out.set(&[a, c], acc);
            }
        }
        out
    }

    pub fn transpose2(&self) -> Self {
        assert_eq!(self.rank(), 2);
        let d = self.dim();
        let mut out = TensorField::zeros(self.grid, vec![self.variance[1], self.variance[0]]);
        for a in 0..d {
            for b in 0..d {
                out.set(&[a, b], self.comp(&[b, a]).clone());
            }
        }
        out
    }

    /// Pointwise trace of a rank-2 tensor.
    pub fn trace2(&self) -> PeriodicField {
        assert_eq!(self.rank(), 2);
        let mut acc = PeriodicField::zeros(self.grid);
        for a in 0..self.dim() {
            acc = acc.add(self.comp(&[a, a]));
        }
        acc
    }

    /// Apply a pointwise matrix function to a rank-2 tensor.
    pub fn pointwise_matrix_map(&self, f: impl Fn(&[Complex64], usize) -> Vec<Complex64>) -> Self {
        assert_eq!(self.rank(), 2);
        let d = self.dim();
        let pts = self.grid.points();
        let mut out = self.clone();
        let mut m = vec![Complex64::new(0.0, 0.0); d * d];
        for p in 0..pts {
            for a in 0..d {
                for b in 0..d {
                    m[a * d + b] = self.comps[a * d + b].data[p];
                }
            }
            let r = f(&m, d);
            for a in 0..d {
                for b in 0..d {
                    out.comps[a * d + b].data[p] = r[a * d + b];
                }
            }
        }
        for c in &mut out.comps {
            c.is_real = c.data.iter().all(|z| z.im.abs() < 1e-13);
        }
        out
    }

    /// Pointwise matrix inverse of a rank-2 tensor (Gaussian elimination).
    pub fn pointwise_inverse(&self) -> Self {
        let mut out = self.pointwise_matrix_map(|m, d| invert_matrix(m, d));
        out.variance = vec![flip(self.variance[1]), flip(self.variance[0])];
        out
    }

    /// Pointwise matrix exponential (scaling and squaring + Taylor).
    pub fn pointwise_exp(&self) -> Self {
        self.pointwise_matrix_map(|m, d| exp_matrix(m, d))
    }
}

fn flip(s: Slot) -> Slot {
    match s {
        Slot::Vector => Slot::Covector,
        Slot::Covector => Slot::Vector,
    }
}

pub(crate) fn invert_matrix(m: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut a = m.to_vec();
    let mut inv: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        inv[i * d + i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..d {
        // partial pivot
        let mut piv = col;
        for r in col + 1..d {
            if a[r * d + col].norm() > a[piv * d + col].norm() {
                piv = r;
            }
        }
        if piv != col {
            for j in 0..d {
                a.swap(col * d + j, piv * d + j);
                inv.swap(col * d + j, piv * d + j);
            }
        }
        let diag = a[col * d + col];
        for j in 0..d {
            a[col * d + j] /= diag;
            inv[col * d + j] /= diag;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let factor = a[r * d + col];
            for j in 0..d {
                let ac = a[col * d + j];
                let ic = inv[col * d + j];
                a[r * d + j] -= factor * ac;
                inv[r * d + j] -= factor * ic;
            }
        }
    }
    inv
}

pub(crate) fn exp_matrix(m: &[Complex64], d: usize) -> Vec<Complex64> {
    let norm: f64 = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let s = 2f64.powi(squarings as i32);
    let scaled: Vec<Complex64> = m.iter().map(|c| c / s).collect();
    // Taylor to machine precision for spectral radius <= 0.25
    let mut result: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        result[i * d + i] = Complex64::new(1.0, 0.0);
    }
    let mut term = result.clone();
    for k in 1..=16 {
        term = mat_mul_small(&term, &scaled, d);
        for t in &mut term {
            *t /= k as f64;
        }
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = mat_mul_small(&result, &result, d);
    }
    result
}

pub(crate) fn mat_mul_small(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}
