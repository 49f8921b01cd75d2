//! The flat-connection construction of a star product from a symplectic
//! connection and the central 2-form `ν·ρ^J`: the lifted connection data
//! `Γ̄`, `R̄`, the degree-by-degree solution `r`, the flat connection `D`,
//! its partial inverse, the lift `Q`, the star product itself, and the
//! constant-coefficient oracle.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{Grid, PeriodicField};
use crate::formal::FormalSeries;
use crate::geometry::{curvature, CompatibleStructure, SymplecticData};
use crate::tensor::TensorField;
use crate::weyl::{product_scalar_part, scalar_map_to_series, TermKey, WeylForm, MAX_DIM};

/// Everything needed to evaluate the star product at one structure.
#[derive(Debug, Clone)]
pub struct FedosovData {
    pub structure: CompatibleStructure,
    /// `Γ̄ = ½ ω_{lk} Γ^k_{ij} y^l y^j dx^i` from the symplectic connection.
    pub gamma_bar: WeylForm,
    /// `R̄ = ¼ ω_{ir} R^r_{jkl} y^i y^j dx^k ∧ dx^l`.
    pub r_bar: WeylForm,
    /// The central 2-form `Ω = ν ρ^J`.
    pub omega_central: WeylForm,
    /// The recursion solution, a 1-form of total degree ≥ 3 with `δ_F⁻¹ r = 0`.
    pub r: WeylForm,
    pub degree_cap: i32,
    /// Residual of the defining equation per total degree (complete degrees only).
    pub residuals: Vec<(i32, f64)>,
}

/// Embed an antisymmetric (0,2) tensor as a `ν^nu`-weighted Weyl 2-form.
fn two_form(t: &TensorField, nu: i32, cap: i32) -> WeylForm {
    let d = t.dim();
    let mut w = WeylForm::zero(t.grid, cap);
    for a in 0..d {
        for b in (a + 1)..d {
            let key = TermKey { nu, y: [0; MAX_DIM], form: (1 << a) | (1 << b) };
            w.add_term(key, t.comp(&[a, b]).clone());
        }
    }
    w
}

/// Build the connection data and solve the recursion up to `degree_cap`.
///
/// The interior constructor also accepts an arbitrary central 2-form; the
/// public surface fixes `Ω = ν ρ^J`.
pub fn build_fedosov(j: &CompatibleStructure, degree_cap: i32) -> Result<FedosovData> {
    let (rho, _) = crate::geometry::hermitian_ricci(j)?;
    build_fedosov_with_central(j, &rho, degree_cap)
}

pub(crate) fn build_fedosov_with_central(
    j: &CompatibleStructure,
    rho: &TensorField,
    degree_cap: i32,
) -> Result<FedosovData> {
    if degree_cap < 3 {
        return Err(Error::CapTooSmall { cap: degree_cap as usize, nu_order: 0 });
    }
    let d = j.dim();
    let grid = j.grid;
    let sympl = &j.sympl;

    // Γ̄ = ½ ω_{lk} Γ^k_{ij} y^l y^j dx^i
    let mut gamma_bar = WeylForm::zero(grid, degree_cap);
    for i in 0..d {
        for l in 0..d {
            for jj in 0..d {
                let mut coeff = PeriodicField::zeros(grid);
                for k in 0..d {
                    let w = sympl.omega(l, k);
                    if w != 0.0 {
                        coeff.add_scaled(
                            Complex64::new(0.5 * w, 0.0),
                            j.gamma_sympl.comp(&[k, i, jj]),
                        );
                    }
                }
                let mut key = TermKey { nu: 0, y: [0; MAX_DIM], form: 1 << i };
                key.y[l] += 1;
                key.y[jj] += 1;
                gamma_bar.add_term(key, coeff);
            }
        }
    }

    // R̄ = ¼ ω_{ir} R^r_{jkl} y^i y^j dx^k ∧ dx^l (sum over all k, l)
    let curv = curvature(&j.gamma_sympl);
    let mut r_bar = WeylForm::zero(grid, degree_cap);
    for i in 0..d {
        for jj in 0..d {
            for k in 0..d {
                for l in 0..d {
                    if k == l {
                        continue;
                    }
                    let (form, sign) =
                        if k < l { ((1 << k) | (1 << l), 1.0) } else { ((1 << k) | (1 << l), -1.0) };
                    let mut coeff = PeriodicField::zeros(grid);
                    for rr in 0..d {
                        let w = sympl.omega(i, rr);
                        if w != 0.0 {
                            coeff.add_scaled(
                                Complex64::new(0.25 * w * sign, 0.0),
                                curv.comp(&[rr, jj, k, l]),
                            );
                        }
                    }
                    let mut key = TermKey { nu: 0, y: [0; MAX_DIM], form };
                    key.y[i] += 1;
                    key.y[jj] += 1;
                    r_bar.add_term(key, coeff);
                }
            }
        }
    }
    r_bar.prune(0.0);

    let omega_central = two_form(rho, 1, degree_cap);

    // degree-by-degree fixed point r = δ_F⁻¹(R̄ − Ω + ∂r + (1/ν) r∘r)
    let mut r = WeylForm::zero(grid, degree_cap);
    for g in 3..=degree_cap {
        let rhs = recursion_rhs(&gamma_bar, &omega_central, &r_bar, &r, sympl)?;
        let new_piece = rhs.homogeneous_part(g - 1).delta_f_inv();
        r = r.add(&new_piece);
    }
    r.prune(1e-15);

    // residual of the original (un-rearranged) equation, complete degrees only
    let mut residuals = Vec::new();
    let defect = equation_defect(&gamma_bar, &omega_central, &r_bar, &r, sympl)?;
    for g in 2..degree_cap {
        residuals.push((g, defect.homogeneous_part(g).max_abs()));
    }
    for &(g, res) in &residuals {
        if res > 1e-9 {
            return Err(Error::RecursionResidual { degree: g as usize, residual: res, tol: 1e-9 });
        }
    }

    Ok(FedosovData {
        structure: j.clone(),
        gamma_bar,
        r_bar,
        omega_central,
        r,
        degree_cap,
        residuals,
    })
}

/// `R̄ − Ω + ∂r + (1/ν) r∘r`.
fn recursion_rhs(
    gamma_bar: &WeylForm,
    omega_central: &WeylForm,
    r_bar: &WeylForm,
    r: &WeylForm,
    sympl: &SymplecticData,
) -> Result<WeylForm> {
    let mut rhs = r_bar.sub(omega_central);
    rhs = rhs.add(&nabla_with(gamma_bar, r, sympl)?);
    let rr = product_div_nu(r, r, sympl)?;
    Ok(rhs.add(&rr))
}

/// `R̄ + ∂r − δ_F r + (1/ν) r∘r − Ω`: the defining equation's defect.
fn equation_defect(
    gamma_bar: &WeylForm,
    omega_central: &WeylForm,
    r_bar: &WeylForm,
    r: &WeylForm,
    sympl: &SymplecticData,
) -> Result<WeylForm> {
    let mut e = r_bar.add(&nabla_with(gamma_bar, r, sympl)?);
    e = e.sub(&r.delta_f());
    e = e.add(&product_div_nu(r, r, sympl)?);
    Ok(e.sub(omega_central))
}

/// `(1/ν) a∘a` for a 1-form `a`: the contraction-free part of `a∘a` cancels
/// exactly (wedge antisymmetry pairs every cross term), so the shift by
/// `ν^{-1}` only ever exposes exact zeros at negative powers.
fn product_div_nu(a: &WeylForm, b: &WeylForm, sympl: &SymplecticData) -> Result<WeylForm> {
    let mut p = a.product(b, sympl)?.mul_nu(-1);
    p.prune(0.0);
    Ok(p)
}

/// Connection part `∂a = da + (1/ν)[Γ̄, a]` for explicit `Γ̄`.
fn nabla_with(gamma_bar: &WeylForm, a: &WeylForm, sympl: &SymplecticData) -> Result<WeylForm> {
    Ok(a.coord_d().add(&gamma_bar.commutator_div_nu(a, sympl)?))
}

impl FedosovData {
    /// `∂a = da + (1/ν)[Γ̄, a]`.
    pub fn nabla(&self, a: &WeylForm) -> Result<WeylForm> {
        nabla_with(&self.gamma_bar, a, &self.structure.sympl)
    }

    /// The flat connection `Da = ∂a − δ_F a + (1/ν)[r, a]`.
    pub fn d_apply(&self, a: &WeylForm) -> Result<WeylForm> {
        let mut out = self.nabla(a)?;
        out = out.sub(&a.delta_f());
        out = out.add(&self.r.commutator_div_nu(a, &self.structure.sympl)?);
        Ok(out)
    }

    /// Partial inverse on `D`-closed 1-forms: the solution `a` of `Da = b`
    /// with vanishing symbol, `a = −Q(δ_F⁻¹ b)`.
    pub fn d_inverse(&self, b: &WeylForm) -> Result<WeylForm> {
        Ok(self.q_lift_weyl(&b.delta_f_inv())?.neg())
    }

    /// The lift `Q F = Σ_k (δ_F⁻¹(∂ + (1/ν)[r,·]))^k F` of a fiber-constant
    /// element `F`; terminates because each iterate raises the lowest total
    /// degree of the correction.
    pub fn q_lift_weyl(&self, f: &WeylForm) -> Result<WeylForm> {
        let mut total = f.clone();
        let mut increment = f.clone();
        for _ in 0..=(self.degree_cap + 1) {
            let mut next = self.nabla(&increment)?;
            next = next.add(&self.r.commutator_div_nu(&increment, &self.structure.sympl)?);
            increment = next.delta_f_inv();
            increment.prune(1e-300);
            if increment.terms.is_empty() {
                break;
            }
            total = total.add(&increment);
        }
        Ok(total)
    }

    /// Lift of a scalar field.
    pub fn q_lift_field(&self, f: &PeriodicField) -> Result<WeylForm> {
        self.q_lift_weyl(&WeylForm::from_scalar(f, self.degree_cap))
    }

    /// Lift of a formal series of fields (each `ν^k` coefficient embedded at
    /// `ν`-power `k`).
    pub fn q_lift_series(&self, f: &FormalSeries<PeriodicField>) -> Result<WeylForm> {
        let mut w = WeylForm::zero(self.grid(), self.degree_cap);
        for (k, c) in f.iter() {
            w.add_term(TermKey::scalar(k as i32), c.clone());
        }
        self.q_lift_weyl(&w)
    }

    pub fn grid(&self) -> Grid {
        self.structure.grid
    }

    /// `F * G = (Q F ∘ Q G)|_{y=0}` as a `ν`-series up to `nu_order`.
    pub fn star(
        &self,
        f: &PeriodicField,
        g: &PeriodicField,
        nu_order: i64,
    ) -> Result<FormalSeries<PeriodicField>> {
        if (self.degree_cap as i64) < 2 * nu_order + 2 {
            return Err(Error::CapTooSmall {
                cap: self.degree_cap as usize,
                nu_order: nu_order as usize,
            });
        }
        let qf = self.q_lift_field(f)?;
        let qg = self.q_lift_field(g)?;
        self.star_from_lifts(&qf, &qg, nu_order)
    }

    /// Same with the lifts precomputed (the trace-density solver reuses them).
    pub fn star_from_lifts(
        &self,
        qf: &WeylForm,
        qg: &WeylForm,
        nu_order: i64,
    ) -> Result<FormalSeries<PeriodicField>> {
        let map = product_scalar_part(qf, qg, &self.structure.sympl)?;
        Ok(scalar_map_to_series(&map, self.grid(), nu_order))
    }

    /// Star product of two `ν`-series of fields.
    pub fn star_general(
        &self,
        f: &FormalSeries<PeriodicField>,
        g: &FormalSeries<PeriodicField>,
        nu_order: i64,
    ) -> Result<FormalSeries<PeriodicField>> {
        let qf = self.q_lift_series(f)?;
        let qg = self.q_lift_series(g)?;
        self.star_from_lifts(&qf, &qg, nu_order)
    }

    /// Scalar part of `Q F ∘ Q G − Q G ∘ Q F` (the star commutator).
    pub fn star_commutator_from_lifts(
        &self,
        qf: &WeylForm,
        qg: &WeylForm,
        nu_order: i64,
    ) -> Result<FormalSeries<PeriodicField>> {
        let fg = self.star_from_lifts(qf, qg, nu_order)?;
        let gf = self.star_from_lifts(qg, qf, nu_order)?;
        fg.sub(&gf)
    }
}

/// Constant-coefficient star product on the standard chart:
/// `Σ_k (ν^k / 2^k k!) Λ^{i₁j₁}…Λ^{i_kj_k} ∂_{i₁…i_k}F ∂_{j₁…j_k}G`.
pub fn moyal_star(
    sympl: &SymplecticData,
    f: &PeriodicField,
    g: &PeriodicField,
    nu_order: i64,
) -> Result<FormalSeries<PeriodicField>> {
    let entries = sympl.lambda_entries();
    let mut df_cache: BTreeMap<[u8; MAX_DIM], PeriodicField> = BTreeMap::new();
    let mut dg_cache: BTreeMap<[u8; MAX_DIM], PeriodicField> = BTreeMap::new();
    df_cache.insert([0; MAX_DIM], f.clone());
    dg_cache.insert([0; MAX_DIM], g.clone());

    let mut coeffs: Vec<PeriodicField> =
        (0..=nu_order).map(|_| PeriodicField::zeros(f.grid)).collect();

    // compositions of k over the Λ entries, combinatorial factor Π Λ^c/c!
    let mut counts = vec![0usize; entries.len()];
    for k in 0..=nu_order {
        compositions(&entries, 0, k as usize, 1.0, &mut counts, &mut |coeff, counts| {
            let mut mf = [0u8; MAX_DIM];
            let mut mg = [0u8; MAX_DIM];
            for (idx, &(i, j, _)) in entries.iter().enumerate() {
                mf[i] += counts[idx] as u8;
                mg[j] += counts[idx] as u8;
            }
            let df = derive_cached(&mut df_cache, mf);
            let dg = derive_cached(&mut dg_cache, mg);
            coeffs[k as usize].accumulate_product(
                Complex64::new(coeff / 2f64.powi(k as i32), 0.0),
                &df,
                &dg,
            );
        });
    }
    Ok(FormalSeries::new(0, coeffs, nu_order))
}

fn derive_cached(
    cache: &mut BTreeMap<[u8; MAX_DIM], PeriodicField>,
    multi: [u8; MAX_DIM],
) -> PeriodicField {
    if let Some(f) = cache.get(&multi) {
        return f.clone();
    }
    let axis = (0..MAX_DIM).find(|&a| multi[a] > 0).expect("nonzero multi-index");
    let mut lower = multi;
    lower[axis] -= 1;
    let base = derive_cached(cache, lower);
    let d = base.derivative(axis);
    cache.insert(multi, d.clone());
    d
}

fn compositions(
    entries: &[(usize, usize, f64)],
    e: usize,
    remaining: usize,
    coeff: f64,
    counts: &mut [usize],
    emit: &mut impl FnMut(f64, &[usize]),
) {
    if e == entries.len() {
        if remaining == 0 {
            emit(coeff, counts);
        }
        return;
    }
    let lam = entries[e].2;
    let mut c_coeff = 1.0;
    for c in 0..=remaining {
        if c > 0 {
            c_coeff *= lam / c as f64;
        }
        counts[e] = c;
        compositions(entries, e + 1, remaining - c, coeff * c_coeff, counts, emit);
    }
    counts[e] = 0;
}
