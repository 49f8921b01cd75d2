//! Fiberwise Weyl calculus: polynomial fiber variables `y^i`, a formal
//! parameter `ν` of degree two, antisymmetric `dx` factors, and coefficient
//! fields on the torus. Elements are sparse sums of terms keyed by
//! `(ν-power, y-multidegree, form bitmask)`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{Grid, PeriodicField};
use crate::geometry::SymplecticData;

pub const MAX_DIM: usize = 4;

/// Key of one monomial: `ν^nu · y^deg · dx^{form}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TermKey {
    /// Power of `ν` (degree two each).
    pub nu: i32,
    /// Multidegree in the fiber variables.
    pub y: [u8; MAX_DIM],
    /// Bitmask of antisymmetric `dx` factors.
    pub form: u8,
}

impl TermKey {
    pub fn scalar(nu: i32) -> Self {
        TermKey { nu, y: [0; MAX_DIM], form: 0 }
    }

    pub fn y_degree(&self) -> usize {
        self.y.iter().map(|&c| c as usize).sum()
    }

    pub fn form_degree(&self) -> usize {
        self.form.count_ones() as usize
    }

    /// Fedosov total degree: `2·(ν-power) + |y|`.
    pub fn total_degree(&self) -> i32 {
        2 * self.nu + self.y_degree() as i32
    }
}

/// Sign of prepending `dx^i` to the sorted wedge monomial `form`; `None` if
/// `dx^i` already occurs.
fn wedge_prepend(form: u8, i: usize) -> Option<(u8, f64)> {
    let bit = 1u8 << i;
    if form & bit != 0 {
        return None;
    }
    let below = (form & (bit - 1)).count_ones();
    Some((form | bit, if below % 2 == 0 { 1.0 } else { -1.0 }))
}

/// Sign from merging two sorted wedge monomials (`a` then `b`); `None` if they
/// overlap.
fn wedge_merge(a: u8, b: u8) -> Option<(u8, f64)> {
    if a & b != 0 {
        return None;
    }
    let mut inversions = 0u32;
    for i in 0..8 {
        if b & (1 << i) != 0 {
            inversions += (a >> (i + 1)).count_ones();
        }
    }
    Some((a | b, if inversions % 2 == 0 { 1.0 } else { -1.0 }))
}

/// A section of the Weyl-algebra bundle tensored with forms, truncated at a
/// total Fedosov degree cap.
#[derive(Debug, Clone)]
pub struct WeylForm {
    pub grid: Grid,
    pub cap: i32,
    pub terms: BTreeMap<TermKey, PeriodicField>,
}

impl WeylForm {
    pub fn zero(grid: Grid, cap: i32) -> Self {
        WeylForm { grid, cap, terms: BTreeMap::new() }
    }

    /// Embed a scalar field as the `ν^0 y^0` term.
    pub fn from_scalar(f: &PeriodicField, cap: i32) -> Self {
        let mut w = WeylForm::zero(f.grid, cap);
        w.add_term(TermKey::scalar(0), f.clone());
        w
    }

    /// Add `c · key` respecting the degree cap.
    pub fn add_term(&mut self, key: TermKey, c: PeriodicField) {
        if key.total_degree() > self.cap {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(existing) => *existing = existing.add(&c),
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn add_term_scaled(&mut self, key: TermKey, s: Complex64, c: &PeriodicField) {
        if key.total_degree() > self.cap {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(existing) => existing.add_scaled(s, c),
            None => {
                let mut f = PeriodicField::zeros(self.grid);
                f.is_real = false;
                f.add_scaled(s, c);
                self.terms.insert(key, f);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.cap = self.cap.min(other.cap);
        out.terms.retain(|k, _| k.total_degree() <= out.cap);
        for (k, c) in &other.terms {
            out.add_term(*k, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_c(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.scale_c(s);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.scale_c(Complex64::new(s, 0.0))
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Multiply by `ν^k` (shifts every key).
    pub fn mul_nu(&self, k: i32) -> Self {
        let mut out = WeylForm::zero(self.grid, self.cap);
        for (key, c) in &self.terms {
            let mut nk = *key;
            nk.nu += k;
            out.add_term(nk, c.clone());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// Drop numerically-zero terms (exact zeros produced by cancellations).
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.max_abs() > tol);
    }

    /// Keep only terms of the given Fedosov total degree.
    pub fn homogeneous_part(&self, degree: i32) -> Self {
        let mut out = WeylForm::zero(self.grid, self.cap);
        for (k, c) in &self.terms {
            if k.total_degree() == degree {
                out.add_term(*k, c.clone());
            }
        }
        out
    }

    /// Keep only terms of the given form degree.
    pub fn form_part(&self, degree: usize) -> Self {
        let mut out = WeylForm::zero(self.grid, self.cap);
        for (k, c) in &self.terms {
            if k.form_degree() == degree {
                out.add_term(*k, c.clone());
            }
        }
        out
    }

    pub fn max_form_degree(&self) -> usize {
        self.terms.keys().map(|k| k.form_degree()).max().unwrap_or(0)
    }

    /// The scalar (`y = 0`, form `0`) part as `ν`-power/coefficient pairs.
    pub fn scalar_part(&self) -> BTreeMap<i32, PeriodicField> {
        let mut out = BTreeMap::new();
        for (k, c) in &self.terms {
            if k.y_degree() == 0 && k.form == 0 {
                out.insert(k.nu, c.clone());
            }
        }
        out
    }

    /// `δ_F a = dx^i ∧ ∂a/∂y^i`.
    pub fn delta_f(&self) -> Self {
        let d = self.grid.dim;
        let mut out = WeylForm::zero(self.grid, self.cap);
        for (k, c) in &self.terms {
            for i in 0..d {
                if k.y[i] == 0 {
                    continue;
                }
                if let Some((form, sign)) = wedge_prepend(k.form, i) {
                    let mut nk = *k;
                    nk.y[i] -= 1;
                    nk.form = form;
                    out.add_term_scaled(nk, Complex64::new(sign * k.y[i] as f64, 0.0), c);
                }
            }
        }
        out
    }

    /// `δ_F^{-1} a = (1/(p+q)) y^i ι(e_i) a` on terms with `y`-degree `p` and
    /// form degree `q`, `p + q > 0`; kills the scalar part.
    pub fn delta_f_inv(&self) -> Self {
        let d = self.grid.dim;
        let mut out = WeylForm::zero(self.grid, self.cap);
        for (k, c) in &self.terms {
            let p = k.y_degree();
            let q = k.form_degree();
            if p + q == 0 {
                continue;
            }
            let w = 1.0 / (p + q) as f64;
            for i in 0..d {
                let bit = 1u8 << i;
                if k.form & bit == 0 {
                    continue;
                }
                // ι(e_i) picks the dx^i factor with the sign of moving it front
                let below = (k.form & (bit - 1)).count_ones();
                let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
                let mut nk = *k;
                nk.form &= !bit;
                nk.y[i] += 1;
                out.add_term_scaled(nk, Complex64::new(sign * w, 0.0), c);
            }
        }
        out
    }

    /// Coordinate exterior derivative of the coefficients (fiber variables
    /// treated as constants): `d a = dx^k ∧ ∂_{x^k} a`.
    pub fn coord_d(&self) -> Self {
        let d = self.grid.dim;
        let mut out = WeylForm::zero(self.grid, self.cap);
        for (k, c) in &self.terms {
            for axis in 0..d {
                if let Some((form, sign)) = wedge_prepend(k.form, axis) {
                    let mut nk = *k;
                    nk.form = form;
                    out.add_term_scaled(nk, Complex64::new(sign, 0.0), &c.derivative(axis));
                }
            }
        }
        out
    }

    /// Fiberwise Weyl product `a ∘ b`.
    pub fn product(&self, other: &Self, sympl: &SymplecticData) -> Result<Self> {
        product_internal(self, other, sympl, 0, 0, &|_, _| 1.0)
    }

    /// `(1/ν)[a, b]` for the graded commutator, computed exactly: the
    /// contraction-free parts cancel pairwise (coefficient fields commute),
    /// so only contracted terms — which carry at least one explicit power of
    /// `ν` — are produced, then shifted down by one power.
    pub fn commutator_div_nu(&self, other: &Self, sympl: &SymplecticData) -> Result<Self> {
        let ab = product_internal(self, other, sympl, 1, -1, &|_, _| 1.0)?;
        // per-pair Koszul sign: the second product contributes −(−1)^{|ta||tb|}
        let ba = product_internal(other, self, sympl, 1, -1, &|tb: &TermKey, ta: &TermKey| {
            if (ta.form_degree() * tb.form_degree()) % 2 == 0 {
                -1.0
            } else {
                1.0
            }
        })?;
        Ok(ab.add(&ba))
    }

    /// Graded commutator `[a, b] = a∘b − (−1)^{|a||b|} b∘a`, with the Koszul
    /// sign applied per term pair (so mixed form degrees are handled exactly).
    pub fn graded_commutator(&self, other: &Self, sympl: &SymplecticData) -> Result<Self> {
        let ab = product_internal(self, other, sympl, 0, 0, &|_, _| 1.0)?;
        let ba = product_internal(other, self, sympl, 0, 0, &|tb: &TermKey, ta: &TermKey| {
            if (ta.form_degree() * tb.form_degree()) % 2 == 0 {
                -1.0
            } else {
                1.0
            }
        })?;
        Ok(ab.add(&ba))
    }
}

/// The core product: every pair of terms, every admissible contraction
/// pattern over the nonzero entries of `Λ`, with the per-pattern coefficient
/// `(ν/2)^m Π_e (Λ_e^{c_e}/c_e!) · p_i^{(c_e)} q_j^{(c_e)}` (falling
/// factorials) and the wedge sign of merging the form parts.
fn product_internal(
    a: &WeylForm,
    b: &WeylForm,
    sympl: &SymplecticData,
    min_contractions: usize,
    nu_shift: i32,
    pair_sign: &dyn Fn(&TermKey, &TermKey) -> f64,
) -> Result<WeylForm> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(a.grid, b.grid));
    }
    let entries = sympl.lambda_entries();
    let cap = a.cap.min(b.cap);
    let mut out = WeylForm::zero(a.grid, cap);
    let mut counts = vec![0usize; entries.len()];
    for (ka, ca) in &a.terms {
        for (kb, cb) in &b.terms {
            let Some((form, wsign)) = wedge_merge(ka.form, kb.form) else {
                continue;
            };
            let wsign = wsign * pair_sign(ka, kb);
            enumerate_contractions(
                &entries,
                0,
                ka,
                kb,
                1.0,
                0,
                &mut counts,
                &mut |m, coeff, consumed_a, consumed_b| {
                    if m < min_contractions {
                        return;
                    }
                    let mut key = TermKey {
                        nu: ka.nu + kb.nu + m as i32 + nu_shift,
                        y: [0; MAX_DIM],
                        form,
                    };
                    for i in 0..MAX_DIM {
                        key.y[i] = ka.y[i] + kb.y[i] - consumed_a[i] - consumed_b[i];
                    }
                    let factor = wsign * coeff / 2f64.powi(m as i32);
                    out.add_term_scaled(key, Complex64::new(factor, 0.0), &ca.mul(cb));
                },
            );
        }
    }
    Ok(out)
}

/// `π₀₀(a ∘ b)` without forming the full product: only pairs of form-free
/// terms whose fiber variables are completely contracted against each other
/// can reach the scalar part, and for the standard `Λ` that pins the
/// contraction pattern uniquely. Returns `ν`-power/coefficient pairs.
pub fn product_scalar_part(
    a: &WeylForm,
    b: &WeylForm,
    sympl: &SymplecticData,
) -> Result<BTreeMap<i32, PeriodicField>> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(a.grid, b.grid));
    }
    let entries = sympl.lambda_entries();
    let mut out: BTreeMap<i32, PeriodicField> = BTreeMap::new();
    for (ka, ca) in &a.terms {
        if ka.form != 0 {
            continue;
        }
        for (kb, cb) in &b.terms {
            if kb.form != 0 {
                continue;
            }
            let mut coeff = 1.0f64;
            let mut m = 0usize;
            let mut ok = true;
            for &(i, j, lam) in &entries {
                let c = ka.y[i] as usize;
                if c != kb.y[j] as usize {
                    ok = false;
                    break;
                }
                // Λ^c · c! from λ^c/c! · (c!)² falling factorials
                let mut fact = 1.0f64;
                for t in 1..=c {
                    fact *= lam * t as f64;
                }
                coeff *= fact;
                m += c;
            }
            if !ok {
                continue;
            }
            let factor = coeff / 2f64.powi(m as i32);
            let nu = ka.nu + kb.nu + m as i32;
            let entry = out.entry(nu).or_insert_with(|| {
                let mut f = PeriodicField::zeros(a.grid);
                f.is_real = false;
                f
            });
            entry.accumulate_product(Complex64::new(factor, 0.0), ca, cb);
        }
    }
    Ok(out)
}

/// Assemble scalar-part pairs into a formal series truncated at `trunc`.
pub fn scalar_map_to_series(
    map: &BTreeMap<i32, PeriodicField>,
    grid: Grid,
    trunc: i64,
) -> crate::formal::FormalSeries<PeriodicField> {
    let lowest = map.keys().next().map(|&k| k as i64).unwrap_or(trunc + 1).min(trunc + 1);
    if lowest > trunc {
        return crate::formal::FormalSeries::zero(trunc);
    }
    let coeffs: Vec<PeriodicField> = (lowest..=trunc)
        .map(|k| map.get(&(k as i32)).cloned().unwrap_or_else(|| PeriodicField::zeros(grid)))
        .collect();
    crate::formal::FormalSeries::new(lowest, coeffs, trunc)
}

/// Recursive enumeration of contraction counts `c_e` per `Λ` entry, with the
/// accumulated combinatorial coefficient.
#[allow(clippy::too_many_arguments)]
fn enumerate_contractions(
    entries: &[(usize, usize, f64)],
    e: usize,
    ka: &TermKey,
    kb: &TermKey,
    coeff: f64,
    m: usize,
    counts: &mut [usize],
    emit: &mut impl FnMut(usize, f64, [u8; MAX_DIM], [u8; MAX_DIM]),
) {
    if e == entries.len() {
        let mut consumed_a = [0u8; MAX_DIM];
        let mut consumed_b = [0u8; MAX_DIM];
        for (idx, &(i, j, _)) in entries.iter().enumerate() {
            consumed_a[i] += counts[idx] as u8;
            consumed_b[j] += counts[idx] as u8;
        }
        emit(m, coeff, consumed_a, consumed_b);
        return;
    }
    let (i, j, lam) = entries[e];
    // the standard Λ has each index appearing once as row and once as column,
    // so per-entry budgets are independent
    let budget = (ka.y[i] as usize).min(kb.y[j] as usize);
    let mut c_coeff = 1.0;
    for c in 0..=budget {
        if c > 0 {
            // Λ^c/c! and the falling factorials, built incrementally
            c_coeff *= lam / c as f64;
            c_coeff *= (ka.y[i] as usize - (c - 1)) as f64;
            c_coeff *= (kb.y[j] as usize - (c - 1)) as f64;
        }
        counts[e] = c;
        enumerate_contractions(entries, e + 1, ka, kb, coeff * c_coeff, m + c, counts, emit);
    }
    counts[e] = 0;
}
