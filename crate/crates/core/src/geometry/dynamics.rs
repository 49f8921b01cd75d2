//! Hamiltonian vector fields, Poisson bracket, the Lie derivative of an
//! almost complex structure along a Hamiltonian flow, and the Nijenhuis
//! integrability detector.

use num_complex::Complex64;

use crate::fields::PeriodicField;
use crate::tensor::{Slot, TensorField};

use super::connections::covariant_derivative;
use super::structure::{CompatibleStructure, SymplecticData};

/// Hamiltonian vector field from `ι(X_H)ω = dH`: `X^a = −Λ^{ab} ∂_b H`.
/// With this sign, `X_F(G) = {F, G}` for the bracket below.
pub fn hamiltonian_field(sympl: &SymplecticData, h: &PeriodicField) -> TensorField {
    let d = sympl.dim;
    let dh: Vec<PeriodicField> = (0..d).map(|b| h.derivative(b)).collect();
    let mut x = TensorField::zeros(h.grid, vec![Slot::Vector]);
    for a in 0..d {
        let mut acc = PeriodicField::zeros(h.grid);
        for (b, dhb) in dh.iter().enumerate() {
            let c = sympl.lambda(a, b);
            if c != 0.0 {
                acc.add_scaled(Complex64::new(-c, 0.0), dhb);
            }
        }
        x.set(&[a], acc);
    }
    x
}

/// Poisson bracket `{F, G} = Λ^{ij} ∂_i F ∂_j G`.
pub fn poisson_bracket(
    sympl: &SymplecticData,
    f: &PeriodicField,
    g: &PeriodicField,
) -> PeriodicField {
    let d = sympl.dim;
    let df: Vec<PeriodicField> = (0..d).map(|i| f.derivative(i)).collect();
    let dg: Vec<PeriodicField> = (0..d).map(|j| g.derivative(j)).collect();
    let mut out = PeriodicField::zeros(f.grid);
    for i in 0..d {
        for j in 0..d {
            let c = sympl.lambda(i, j);
            if c != 0.0 {
                out.accumulate_product(Complex64::new(c, 0.0), &df[i], &dg[j]);
            }
        }
    }
    out
}

/// Lie derivative of a (1,1) tensor along a vector field,
/// `(ℒ_X J)^a_b = X^c ∂_c J^a_b − J^c_b ∂_c X^a + J^a_c ∂_b X^c`.
pub fn lie_derivative_endo(x: &TensorField, j: &TensorField) -> TensorField {
    let d = j.dim();
    let grid = j.grid;
    let dx: Vec<TensorField> = (0..d).map(|c| x.partial(c)).collect();
    let dj: Vec<TensorField> = (0..d).map(|c| j.partial(c)).collect();
    let mut out = TensorField::zeros(grid, vec![Slot::Vector, Slot::Covector]);
    for a in 0..d {
        for b in 0..d {
            let mut acc = PeriodicField::zeros(grid);
            for c in 0..d {
                acc.accumulate_product(Complex64::new(1.0, 0.0), x.comp(&[c]), dj[c].comp(&[a, b]));
                acc.accumulate_product(
                    Complex64::new(-1.0, 0.0),
                    j.comp(&[c, b]),
                    dx[c].comp(&[a]),
                );
                acc.accumulate_product(Complex64::new(1.0, 0.0), j.comp(&[a, c]), dx[b].comp(&[c]));
            }
            out.set(&[a, b], acc);
        }
    }
    out
}

/// `ℒ_{X_H} J` for a Hamiltonian `H`.
pub fn lie_derivative_j(s: &CompatibleStructure, h: &PeriodicField) -> TensorField {
    let x = hamiltonian_field(&s.sympl, h);
    lie_derivative_endo(&x, &s.j)
}

/// Integrable-case expression `(ℒ_{X_H}J)(Y) = −∇_{JY} X_H + J ∇_Y X_H`
/// with the Levi-Civita connection; used as a cross-check.
pub fn lie_derivative_j_integrable(s: &CompatibleStructure, h: &PeriodicField) -> TensorField {
    let d = s.dim();
    let x = hamiltonian_field(&s.sympl, h);
    let nabla_x = covariant_derivative(&x, &s.gamma_lc); // [b; a] = (∇_b X)^a
    let mut out = TensorField::zeros(s.grid, vec![Slot::Vector, Slot::Covector]);
    for a in 0..d {
        for b in 0..d {
            let mut acc = PeriodicField::zeros(s.grid);
            for c in 0..d {
                acc.accumulate_product(
                    Complex64::new(-1.0, 0.0),
                    nabla_x.comp(&[c, a]),
                    s.j.comp(&[c, b]),
                );
                acc.accumulate_product(
                    Complex64::new(1.0, 0.0),
                    s.j.comp(&[a, c]),
                    nabla_x.comp(&[b, c]),
                );
            }
            out.set(&[a, b], acc);
        }
    }
    out
}

/// Pointwise norm of the Nijenhuis tensor
/// `N(X,Y) = [JX,JY] − J[JX,Y] − J[X,JY] − [X,Y]` on coordinate fields.
pub fn nijenhuis_norm(s: &CompatibleStructure) -> PeriodicField {
    let d = s.dim();
    let grid = s.grid;
    let j = &s.j;
    let dj: Vec<TensorField> = (0..d).map(|c| j.partial(c)).collect();
    let mut sq = PeriodicField::zeros(grid);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                // N^a_{bc} = J^k_b ∂_k J^a_c − J^k_c ∂_k J^a_b
                //          + J^a_m ∂_c J^m_b − J^a_m ∂_b J^m_c
                let mut n = PeriodicField::zeros(grid);
                for k in 0..d {
                    n.accumulate_product(
                        Complex64::new(1.0, 0.0),
                        j.comp(&[k, b]),
                        dj[k].comp(&[a, c]),
                    );
                    n.accumulate_product(
                        Complex64::new(-1.0, 0.0),
                        j.comp(&[k, c]),
                        dj[k].comp(&[a, b]),
                    );
                    n.accumulate_product(
                        Complex64::new(1.0, 0.0),
                        j.comp(&[a, k]),
                        dj[c].comp(&[k, b]),
                    );
                    n.accumulate_product(
                        Complex64::new(-1.0, 0.0),
                        j.comp(&[a, k]),
                        dj[b].comp(&[k, c]),
                    );
                }
                sq.accumulate_product(Complex64::new(1.0, 0.0), &n, &n);
            }
        }
    }
    let mut out = PeriodicField::zeros(grid);
    for (o, z) in out.data.iter_mut().zip(&sq.data) {
        *o = Complex64::new(z.re.max(0.0).sqrt(), 0.0);
    }
    out
}
