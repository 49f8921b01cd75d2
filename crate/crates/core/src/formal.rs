//! Truncated formal Laurent series in the deformation parameter `ν`.
//!
//! The same series type carries plain numbers (trace values) and
//! [`PeriodicField`](crate::fields::PeriodicField) coefficients (trace
//! densities, star-product outputs). Everything is formal: arithmetic never
//! reads or writes powers above the truncation order.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::PeriodicField;

/// Coefficient spaces a [`FormalSeries`] can range over.
pub trait Coefficient: Clone {
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, s: f64) -> Self;
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    /// Multiplicative inverse (pointwise for fields).
    fn try_invert(&self) -> Result<Self>
    where
        Self: Sized;
    /// Max-abs magnitude, used for residuals and pruning.
    fn norm(&self) -> f64;
    fn compatible(&self, other: &Self) -> bool;
}

impl Coefficient for f64 {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn zero_like(&self) -> Self {
        0.0
    }
    fn one_like(&self) -> Self {
        1.0
    }
    fn try_invert(&self) -> Result<Self> {
        if self.abs() < 1e-300 {
            return Err(Error::NonInvertibleLeading);
        }
        Ok(1.0 / self)
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn compatible(&self, _: &Self) -> bool {
        true
    }
}

impl Coefficient for Complex64 {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one_like(&self) -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn try_invert(&self) -> Result<Self> {
        if self.norm() < 1e-300 {
            return Err(Error::NonInvertibleLeading);
        }
        Ok(1.0 / self)
    }
    fn norm(&self) -> f64 {
        num_complex::Complex::norm(*self)
    }
    fn compatible(&self, _: &Self) -> bool {
        true
    }
}

impl Coefficient for PeriodicField {
    fn add(&self, other: &Self) -> Self {
        PeriodicField::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        PeriodicField::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        PeriodicField::mul(self, other)
    }
    fn neg(&self) -> Self {
        PeriodicField::neg(self)
    }
    fn scale(&self, s: f64) -> Self {
        PeriodicField::scale(self, s)
    }
    fn zero_like(&self) -> Self {
        PeriodicField::zeros(self.grid)
    }
    fn one_like(&self) -> Self {
        PeriodicField::constant(self.grid, 1.0)
    }
    fn try_invert(&self) -> Result<Self> {
        let min = self.data.iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
        if min < 1e-12 {
            return Err(Error::NonInvertibleLeading);
        }
        let data = self.data.iter().map(|c| 1.0 / c).collect();
        Ok(PeriodicField { grid: self.grid, data, is_real: self.is_real })
    }
    fn norm(&self) -> f64 {
        self.max_abs()
    }
    fn compatible(&self, other: &Self) -> bool {
        self.grid == other.grid
    }
}

/// Truncated Laurent series `Σ_{k=lowest}^{trunc} c_k ν^k`.
#[derive(Debug, Clone)]
pub struct FormalSeries<C: Coefficient> {
    lowest: i64,
    coeffs: Vec<C>,
    trunc: i64,
}

impl<C: Coefficient> FormalSeries<C> {
    pub fn new(lowest: i64, coeffs: Vec<C>, trunc: i64) -> Self {
        assert_eq!(
            coeffs.len() as i64,
            trunc - lowest + 1,
            "coefficient count must equal trunc - lowest + 1"
        );
        FormalSeries { lowest, coeffs, trunc }
    }

    /// The zero series truncated at `trunc` (no stored coefficients).
    pub fn zero(trunc: i64) -> Self {
        FormalSeries { lowest: trunc + 1, coeffs: Vec::new(), trunc }
    }

    pub fn constant(c: C, trunc: i64) -> Self {
        FormalSeries { lowest: 0, coeffs: vec![c], trunc }.padded()
    }

    fn padded(self) -> Self {
        self
    }

    pub fn lowest_power(&self) -> i64 {
        self.lowest
    }

    pub fn truncation_order(&self) -> i64 {
        self.trunc
    }

    pub fn is_zero_len(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of `ν^k`, if stored.
    pub fn get(&self, k: i64) -> Option<&C> {
        if k < self.lowest || k > self.trunc {
            None
        } else {
            Some(&self.coeffs[(k - self.lowest) as usize])
        }
    }

    /// Coefficient of `ν^k`; zero-like when not stored (panics on empty zero series
    /// only if there is no template — callers hold at least one coefficient there).
    pub fn coeff_or_zero(&self, k: i64, template: &C) -> C {
        self.get(k).cloned().unwrap_or_else(|| template.zero_like())
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &C)> {
        self.coeffs.iter().enumerate().map(move |(i, c)| (self.lowest + i as i64, c))
    }

    fn any_coeff(&self) -> Option<&C> {
        self.coeffs.first()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if let (Some(a), Some(b)) = (self.any_coeff(), other.any_coeff()) {
            if !a.compatible(b) {
                return Err(Error::SeriesMismatch("coefficient spaces differ".into()));
            }
        }
        Ok(())
    }

    /// Coefficientwise sum; truncation order is the min of the two.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let trunc = self.trunc.min(other.trunc);
        let lowest = self.lowest.min(other.lowest).min(trunc + 1);
        let template = self.any_coeff().or_else(|| other.any_coeff());
        let mut coeffs = Vec::new();
        for k in lowest..=trunc {
            let c = match (self.get(k), other.get(k)) {
                (Some(a), Some(b)) => a.add(b),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => template.expect("series with no coefficients anywhere").zero_like(),
            };
            coeffs.push(c);
        }
        Ok(FormalSeries { lowest, coeffs, trunc })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        FormalSeries {
            lowest: self.lowest,
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
            trunc: self.trunc,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        FormalSeries {
            lowest: self.lowest,
            coeffs: self.coeffs.iter().map(|c| c.scale(s)).collect(),
            trunc: self.trunc,
        }
    }

    /// Multiply by `ν^k`.
    pub fn shift(&self, k: i64) -> Self {
        FormalSeries { lowest: self.lowest + k, coeffs: self.coeffs.clone(), trunc: self.trunc + k }
    }

    /// Cauchy convolution; truncated at the order both factors can certify.
    pub fn mul_series(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Ok(FormalSeries::zero(
                (self.trunc + other.lowest).min(other.trunc + self.lowest),
            ));
        }
        let lowest = self.lowest + other.lowest;
        let trunc = (self.trunc + other.lowest).min(other.trunc + self.lowest);
        let template = self.any_coeff().unwrap();
        let mut coeffs: Vec<C> = (lowest..=trunc).map(|_| template.zero_like()).collect();
        for (i, a) in self.iter() {
            for (j, b) in other.iter() {
                let k = i + j;
                if k <= trunc {
                    let slot = (k - lowest) as usize;
                    coeffs[slot] = coeffs[slot].add(&a.mul(b));
                }
            }
        }
        Ok(FormalSeries { lowest, coeffs, trunc })
    }

    /// Series inverse `b` with `a·b = 1` up to the truncation order.
    pub fn invert(&self) -> Result<Self> {
        let lead = self.coeffs.first().ok_or(Error::NonInvertibleLeading)?;
        let lead_inv = lead.try_invert()?;
        let rel_order = (self.trunc - self.lowest) as usize;
        let mut inv_coeffs: Vec<C> = Vec::with_capacity(rel_order + 1);
        inv_coeffs.push(lead_inv.clone());
        for k in 1..=rel_order {
            // b_k = -a_0^{-1} Σ_{j=1..k} a_j b_{k-j}
            let mut acc = lead.zero_like();
            for j in 1..=k {
                if let Some(aj) = self.get(self.lowest + j as i64) {
                    acc = acc.add(&aj.mul(&inv_coeffs[k - j]));
                }
            }
            inv_coeffs.push(lead_inv.mul(&acc).neg());
        }
        Ok(FormalSeries {
            lowest: -self.lowest,
            coeffs: inv_coeffs,
            trunc: -self.lowest + rel_order as i64,
        })
    }

    /// Restrict to truncation order `to` (dropping higher stored coefficients).
    pub fn truncate(&self, to: i64) -> Self {
        let trunc = self.trunc.min(to);
        let keep = ((trunc - self.lowest + 1).max(0)) as usize;
        FormalSeries {
            lowest: if keep == 0 { trunc + 1 } else { self.lowest },
            coeffs: self.coeffs[..keep].to_vec(),
            trunc,
        }
    }

    pub fn map<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> FormalSeries<D> {
        FormalSeries {
            lowest: self.lowest,
            coeffs: self.coeffs.iter().map(f).collect(),
            trunc: self.trunc,
        }
    }

    /// Max coefficient norm.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl FormalSeries<f64> {
    /// Convenience literal: coefficients from `lowest` upward.
    pub fn from_slice(lowest: i64, coeffs: &[f64], trunc: i64) -> Self {
        let mut v = coeffs.to_vec();
        v.resize((trunc - lowest + 1) as usize, 0.0);
        FormalSeries::new(lowest, v, trunc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_laurent() {
        // (1 + ν) + ν⁻¹ = ν⁻¹ + 1 + ν
        let a = FormalSeries::from_slice(0, &[1.0, 1.0], 3);
        let b = FormalSeries::from_slice(-1, &[1.0], 3);
        let s = a.add(&b).unwrap();
        assert_eq!(s.get(-1), Some(&1.0));
        assert_eq!(s.get(0), Some(&1.0));
        assert_eq!(s.get(1), Some(&1.0));
        assert_eq!(s.get(2), Some(&0.0));
    }

    #[test]
    fn add_identity() {
        let a = FormalSeries::from_slice(0, &[2.0, -1.0, 0.5], 2);
        let z = FormalSeries::zero(2);
        let s = a.add(&z).unwrap();
        for k in 0..=2 {
            assert_eq!(s.get(k), a.get(k));
        }
    }

    #[test]
    fn mul_polynomials() {
        // (1+ν)(1−ν) = 1 − ν²
        let a = FormalSeries::from_slice(0, &[1.0, 1.0], 3);
        let b = FormalSeries::from_slice(0, &[1.0, -1.0], 3);
        let p = a.mul_series(&b).unwrap();
        assert_eq!(p.get(0), Some(&1.0));
        assert_eq!(p.get(1), Some(&0.0));
        assert_eq!(p.get(2), Some(&-1.0));
    }

    #[test]
    fn mul_laurent_units() {
        let a = FormalSeries::from_slice(-1, &[1.0], 2);
        let b = FormalSeries::from_slice(1, &[1.0], 4);
        let p = a.mul_series(&b).unwrap();
        assert_eq!(p.lowest_power(), 0);
        assert_eq!(p.get(0), Some(&1.0));
    }

    #[test]
    fn mul_matches_convolution_oracle() {
        // brute-force double-loop convolution on random degree-3 series
        let a = FormalSeries::from_slice(0, &[0.3, -1.2, 0.7, 2.2], 3);
        let b = FormalSeries::from_slice(0, &[1.5, 0.1, -0.4, 0.9], 3);
        let p = a.mul_series(&b).unwrap();
        for k in 0..=3i64 {
            let mut expect = 0.0;
            for i in 0..=k {
                expect += a.get(i).unwrap() * b.get(k - i).unwrap();
            }
            assert!((p.get(k).unwrap() - expect).abs() <= 1e-14);
        }
    }

    #[test]
    fn invert_one() {
        let one = FormalSeries::from_slice(0, &[1.0], 3);
        let inv = one.invert().unwrap();
        assert_eq!(inv.get(0), Some(&1.0));
        for k in 1..=3 {
            assert_eq!(inv.get(k), Some(&0.0));
        }
    }

    #[test]
    fn invert_geometric() {
        let a = FormalSeries::from_slice(0, &[1.0, 1.0], 4);
        let inv = a.invert().unwrap();
        let expect = [1.0, -1.0, 1.0, -1.0, 1.0];
        for (k, e) in expect.iter().enumerate() {
            assert!((inv.get(k as i64).unwrap() - e).abs() <= 1e-14);
        }
    }

    #[test]
    fn invert_round_trip() {
        let a = FormalSeries::from_slice(0, &[0.8, -0.3, 1.1, 0.2, -2.0], 4);
        let inv = a.invert().unwrap();
        let p = a.mul_series(&inv).unwrap();
        assert!((p.get(0).unwrap() - 1.0).abs() <= 1e-12);
        for k in 1..=p.truncation_order() {
            assert!(p.get(k).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn invert_rejects_zero_leading() {
        let z = FormalSeries::<f64>::zero(3);
        assert!(z.invert().is_err());
    }

    #[test]
    fn truncation_coherence() {
        let a = FormalSeries::from_slice(0, &[0.8, -0.3, 1.1, 0.2, -2.0], 4);
        let b = FormalSeries::from_slice(0, &[1.5, 0.1, -0.4, 0.9, 0.3], 4);
        let full = a.mul_series(&b).unwrap().truncate(2);
        let short = a.truncate(2).mul_series(&b.truncate(2)).unwrap();
        assert_eq!(full.truncation_order(), short.truncation_order());
        for k in 0..=2 {
            assert!((full.get(k).unwrap() - short.get(k).unwrap()).abs() <= 1e-14);
        }
    }
}
