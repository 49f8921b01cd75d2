//! Scalar fields on the torus `T^d = (R/2πZ)^d`, sampled on a uniform grid.
//!
//! Differentiation is discrete-Fourier based and therefore exact (to rounding)
//! for any field whose spectrum fits the grid. Integration is the mean of the
//! samples times `(2π)^d`, exact for resolvable trigonometric polynomials.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on `T^d` with `n` points per axis and period `2π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 2 || dim == 4) {
            return Err(Error::InvalidConfig(format!("dimension must be 2 or 4, got {dim}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidConfig(format!("n must be even and >= 8, got {n}")));
        }
        Ok(Grid { dim, n })
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Grid spacing per axis.
    pub fn h(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Row-major flat index of a multi-index.
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for &i in idx {
            f = f * self.n + i;
        }
        f
    }

    /// Multi-index of a row-major flat index.
    pub fn unflat(&self, mut f: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = f % self.n;
            f /= self.n;
        }
        idx
    }

    /// Coordinates of a grid node.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.unflat(flat).iter().map(|&i| i as f64 * self.h()).collect()
    }

    /// Signed integer frequency of spectral index `j` (Nyquist mapped to `n/2`).
    pub fn freq(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLANNER: Lazy<Mutex<HashMap<usize, Arc<Plans>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plans(n: usize) -> Arc<Plans> {
    let mut map = PLANNER.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// A complex-valued scalar field sampled on a [`Grid`].
///
/// Real fields are stored in the same representation; `is_real` records the
/// intent and is validated against the samples where it matters.
#[derive(Debug, Clone)]
pub struct PeriodicField {
    pub grid: Grid,
    pub data: Vec<Complex64>,
    pub is_real: bool,
}

impl PeriodicField {
    pub fn zeros(grid: Grid) -> Self {
        PeriodicField { grid, data: vec![Complex64::new(0.0, 0.0); grid.points()], is_real: true }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        PeriodicField { grid, data: vec![Complex64::new(c, 0.0); grid.points()], is_real: true }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let data: Vec<Complex64> = (0..grid.points()).map(|p| f(&grid.coords(p))).collect();
        let is_real = data.iter().all(|c| c.im == 0.0);
        PeriodicField { grid, data, is_real }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        PeriodicField {
            grid,
            data: (0..grid.points()).map(|p| Complex64::new(f(&grid.coords(p)), 0.0)).collect(),
            is_real: true,
        }
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid, other.grid));
        }
        Ok(())
    }

    // ---- pointwise arithmetic ----

    pub fn add(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        PeriodicField { grid: self.grid, data, is_real: self.is_real && other.is_real }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        PeriodicField { grid: self.grid, data, is_real: self.is_real && other.is_real }
    }

    pub fn neg(&self) -> Self {
        PeriodicField { grid: self.grid, data: self.data.iter().map(|a| -a).collect(), is_real: self.is_real }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        PeriodicField { grid: self.grid, data, is_real: self.is_real && other.is_real }
    }

    pub fn div(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a / b).collect();
        PeriodicField { grid: self.grid, data, is_real: self.is_real && other.is_real }
    }

    pub fn scale(&self, s: f64) -> Self {
        PeriodicField { grid: self.grid, data: self.data.iter().map(|a| a * s).collect(), is_real: self.is_real }
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        PeriodicField {
            grid: self.grid,
            data: self.data.iter().map(|a| a * s).collect(),
            is_real: self.is_real && s.im == 0.0,
        }
    }

    pub fn conj(&self) -> Self {
        PeriodicField { grid: self.grid, data: self.data.iter().map(|a| a.conj()).collect(), is_real: self.is_real }
    }

    pub fn re(&self) -> Self {
        PeriodicField {
            grid: self.grid,
            data: self.data.iter().map(|a| Complex64::new(a.re, 0.0)).collect(),
            is_real: true,
        }
    }

    pub fn add_scaled(&mut self, s: Complex64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        self.is_real = self.is_real && other.is_real && s.im == 0.0;
    }

    /// `self += s * a * b` pointwise; the inner loop of the Weyl product.
    pub fn accumulate_product(&mut self, s: Complex64, a: &Self, b: &Self) {
        for ((o, x), y) in self.data.iter_mut().zip(&a.data).zip(&b.data) {
            *o += s * x * y;
        }
        self.is_real = self.is_real && a.is_real && b.is_real && s.im == 0.0;
    }

    // ---- norms and reductions ----

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        let w = (2.0 * PI).powi(self.grid.dim as i32) / self.grid.points() as f64;
        (self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() * w).sqrt()
    }

    /// `∫ f ω^m/m!` — the mean of the samples times `(2π)^d`.
    pub fn integrate(&self) -> f64 {
        self.integrate_complex().re
    }

    pub fn integrate_complex(&self) -> Complex64 {
        let s: Complex64 = self.data.iter().sum();
        s / self.grid.points() as f64 * (2.0 * PI).powi(self.grid.dim as i32)
    }

    // ---- spectral operations ----

    /// Discrete-Fourier derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        assert!(axis < self.grid.dim, "axis {axis} out of range");
        let n = self.grid.n;
        let p = plans(n);
        let mut out = self.data.clone();
        let stride_after: usize = n.pow((self.grid.dim - 1 - axis) as u32);
        let lines = self.grid.points() / n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        // i*k multipliers, Nyquist zeroed for the odd symbol
        let mult: Vec<Complex64> = (0..n)
            .map(|j| {
                let k = if j == n / 2 { 0 } else { self.grid.freq(j) };
                Complex64::new(0.0, k as f64)
            })
            .collect();
        for line in 0..lines {
            let block = line / stride_after;
            let offset = line % stride_after;
            let base = block * stride_after * n + offset;
            for j in 0..n {
                scratch[j] = out[base + j * stride_after];
            }
            p.forward.process(&mut scratch);
            for j in 0..n {
                scratch[j] *= mult[j] / n as f64;
            }
            p.inverse.process(&mut scratch);
            for j in 0..n {
                out[base + j * stride_after] = scratch[j];
            }
        }
        PeriodicField { grid: self.grid, data: out, is_real: false }
            .with_real_flag(self.is_real)
    }

    fn with_real_flag(mut self, claim: bool) -> Self {
        // derivative of a real field stays real up to FFT rounding; clean it up
        if claim {
            for c in &mut self.data {
                c.im = 0.0;
            }
            self.is_real = true;
        }
        self
    }

    /// Full d-dimensional spectral coefficients (normalized by `1/points`).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let n = self.grid.n;
        let p = plans(n);
        let mut out = self.data.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.grid.dim {
            let stride_after: usize = n.pow((self.grid.dim - 1 - axis) as u32);
            let lines = self.grid.points() / n;
            for line in 0..lines {
                let block = line / stride_after;
                let offset = line % stride_after;
                let base = block * stride_after * n + offset;
                for j in 0..n {
                    scratch[j] = out[base + j * stride_after];
                }
                p.forward.process(&mut scratch);
                for j in 0..n {
                    out[base + j * stride_after] = scratch[j] / n as f64;
                }
            }
        }
        out
    }

    /// Largest spectral magnitude strictly outside the `|k|_∞ <= max_freq` box.
    pub fn energy_outside(&self, max_freq: usize) -> f64 {
        let spec = self.spectrum();
        let mut worst = 0.0f64;
        for (p, c) in spec.iter().enumerate() {
            let idx = self.grid.unflat(p);
            let out = idx.iter().any(|&j| self.grid.freq(j).unsigned_abs() as usize > max_freq);
            if out {
                worst = worst.max(c.norm());
            }
        }
        worst
    }
}

/// Reproducible real trigonometric polynomial with spectrum in `|k|_∞ <= max_freq`.
///
/// Coefficients are independent per mode; `zero_mean` removes the constant mode.
pub fn random_trig_field(grid: Grid, seed: u64, max_freq: usize, zero_mean: bool) -> Result<PeriodicField> {
    if max_freq > grid.n / 4 {
        return Err(Error::FrequencyTooLarge { max_freq, n: grid.n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = PeriodicField::zeros(grid);
    // canonical half-space: first nonzero component positive
    let side = 2 * max_freq + 1;
    let modes = side.pow(grid.dim as u32);
    for m in 0..modes {
        let mut k = vec![0i64; grid.dim];
        let mut rest = m;
        for a in (0..grid.dim).rev() {
            k[a] = (rest % side) as i64 - max_freq as i64;
            rest /= side;
        }
        let first_nonzero = k.iter().find(|&&x| x != 0);
        match first_nonzero {
            None => {
                // constant mode
                let c: f64 = rng.gen_range(-1.0..1.0);
                if !zero_mean {
                    for v in &mut f.data {
                        v.re += c;
                    }
                }
            }
            Some(&x) if x > 0 => {
                let norm: f64 = k.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
                let amp = 1.0 / (1.0 + norm * norm);
                let a: f64 = rng.gen_range(-1.0..1.0) * amp;
                let b: f64 = rng.gen_range(-1.0..1.0) * amp;
                for (p, v) in f.data.iter_mut().enumerate() {
                    let x = grid.coords(p);
                    let phase: f64 = k.iter().zip(&x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                    v.re += a * phase.cos() + b * phase.sin();
                }
            }
            _ => {
                // negative half-space: folded into the positive representative
                let mut rng_skip = || {
                    let _: f64 = rng.gen_range(-1.0..1.0);
                };
                rng_skip();
                rng_skip();
            }
        }
    }
    f.is_real = true;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g2() -> Grid {
        Grid::new(2, 32).unwrap()
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let f = PeriodicField::from_real_fn(g2(), |x| x[0].sin());
        let df = f.derivative(0);
        let expect = PeriodicField::from_real_fn(g2(), |x| x[0].cos());
        assert!(df.sub(&expect).max_abs() <= 1e-12);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let f = PeriodicField::constant(g2(), 3.5);
        assert!(f.derivative(1).max_abs() <= 1e-13);
    }

    #[test]
    fn product_rule_on_dealiased_grid() {
        let f = random_trig_field(g2(), 11, 2, false).unwrap();
        let g = random_trig_field(g2(), 12, 2, false).unwrap();
        let lhs = f.mul(&g).derivative(0);
        let rhs = f.derivative(0).mul(&g).add(&g.derivative(0).mul(&f));
        assert!(lhs.sub(&rhs).max_abs() <= 1e-10);
    }

    #[test]
    fn integrate_constant() {
        let f = PeriodicField::constant(g2(), 1.0);
        assert!((f.integrate() - (2.0 * PI).powi(2)).abs() <= 1e-12);
    }

    #[test]
    fn integrate_mean_zero_mode() {
        let f = PeriodicField::from_real_fn(g2(), |x| x[0].sin());
        assert!(f.integrate().abs() <= 1e-12);
    }

    #[test]
    fn integrate_sine_squared() {
        let f = PeriodicField::from_real_fn(g2(), |x| x[0].sin().powi(2));
        assert!((f.integrate() - (2.0 * PI).powi(2) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn random_field_deterministic() {
        let a = random_trig_field(g2(), 7, 2, true).unwrap();
        let b = random_trig_field(g2(), 7, 2, true).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn random_field_zero_mean() {
        let a = random_trig_field(g2(), 5, 2, true).unwrap();
        assert!(a.integrate().abs() <= 1e-12);
    }

    #[test]
    fn random_field_bandlimited() {
        let a = random_trig_field(g2(), 5, 2, true).unwrap();
        assert!(a.energy_outside(2) <= 1e-14);
    }

    #[test]
    fn random_field_rejects_large_freq() {
        assert!(random_trig_field(g2(), 5, 9, true).is_err());
    }

    #[test]
    fn integral_of_derivative_vanishes() {
        let f = random_trig_field(g2(), 3, 4, false).unwrap();
        assert!(f.derivative(0).integrate().abs() <= 1e-12);
        assert!(f.derivative(1).integrate().abs() <= 1e-12);
    }

    #[test]
    fn four_dimensional_grid() {
        let g = Grid::new(4, 8).unwrap();
        let f = PeriodicField::from_real_fn(g, |x| (x[2]).sin());
        let df = f.derivative(2);
        let expect = PeriodicField::from_real_fn(g, |x| (x[2]).cos());
        assert!(df.sub(&expect).max_abs() <= 1e-12);
        assert!((PeriodicField::constant(g, 1.0).integrate() - (2.0 * PI).powi(4)).abs() <= 1e-9);
    }
}
