//! Curves of compatible structures through a tangent direction and the
//! closed-form first variations checked against finite differences.

use crate::error::Result;
use crate::fields::PeriodicField;
use crate::tensor::{Slot, TensorField};

use super::connections::covariant_derivative;
use super::hermitian::{delta_j, endo_flat};
use super::structure::{omega_lower, CompatibleStructure};

/// The point `J_t = exp(t·½JA) J exp(−t·½JA)` of the retraction through `J`
/// in direction `A`, as a raw tensor.
pub fn j_along_tensor(s: &CompatibleStructure, a: &TensorField, t: f64) -> TensorField {
    let half_ja = s.j.mat_mul(a).scale(0.5 * t);
    let e = half_ja.pointwise_exp();
    let e_inv = half_ja.neg().pointwise_exp();
    e.mat_mul(&s.j).mat_mul(&e_inv)
}

/// Same, validated and with geometry cached.
pub fn j_along(s: &CompatibleStructure, a: &TensorField, t: f64) -> Result<CompatibleStructure> {
    CompatibleStructure::from_tensor(j_along_tensor(s, a, t))
}

/// Central finite difference with one Richardson extrapolation step:
/// `(4D(h/2) − D(h))/3` where `D(h) = (f(h) − f(−h))/2h`.
pub fn fd_richardson(
    f: impl Fn(f64) -> Result<TensorField>,
    h: f64,
) -> Result<TensorField> {
    let d = |step: f64| -> Result<TensorField> {
        Ok(f(step)?.sub(&f(-step)?).scale(1.0 / (2.0 * step)))
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok(fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0)))
}

/// Scalar-field version of [`fd_richardson`].
pub fn fd_richardson_field(
    f: impl Fn(f64) -> Result<PeriodicField>,
    h: f64,
) -> Result<PeriodicField> {
    let d = |step: f64| -> Result<PeriodicField> {
        Ok(f(step)?.sub(&f(-step)?).scale(1.0 / (2.0 * step)))
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok(fine.scale(4.0 / 3.0).sub(&coarse.scale(1.0 / 3.0)))
}

/// First variation of the Levi-Civita connection along `A`, as the lowered
/// tensor `T(X,Y,Z) = g_J(d/dt|₀ ∇^{g_{J_t}}_X Y, Z)`:
/// `½((∇_Y a)(X,Z) + (∇_X a)(Y,Z) − (∇_Z a)(X,Y))` with `a(X,Y) = ω(X,AY)`.
pub fn first_variation_levi_civita(s: &CompatibleStructure, a: &TensorField) -> TensorField {
    let d = s.dim();
    let small_a = omega_lower(&s.sympl, a);
    let nabla_a = covariant_derivative(&small_a, &s.gamma_lc); // [u; x, y]
    let mut out = TensorField::zeros(
        s.grid,
        vec![Slot::Covector, Slot::Covector, Slot::Covector],
    );
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                let f = nabla_a
                    .comp(&[y, x, z])
                    .add(nabla_a.comp(&[x, y, z]))
                    .sub(nabla_a.comp(&[z, x, y]))
                    .scale(0.5);
                out.set(&[x, y, z], f);
            }
        }
    }
    out
}

/// Finite-difference oracle for [`first_variation_levi_civita`]: differentiates
/// the Christoffel symbols along the retraction and lowers the result at `t=0`.
pub fn first_variation_levi_civita_fd(
    s: &CompatibleStructure,
    a: &TensorField,
    h: f64,
) -> Result<TensorField> {
    let d = s.dim();
    let dgamma = fd_richardson(|t| Ok(j_along(s, a, t)?.gamma_lc), h)?;
    let mut out = TensorField::zeros(
        s.grid,
        vec![Slot::Covector, Slot::Covector, Slot::Covector],
    );
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                let mut acc = PeriodicField::zeros(s.grid);
                for c in 0..d {
                    acc.accumulate_product(
                        num_complex::Complex64::new(1.0, 0.0),
                        s.g.comp(&[c, z]),
                        dgamma.comp(&[c, x, y]),
                    );
                }
                out.set(&[x, y, z], acc);
            }
        }
    }
    Ok(out)
}

/// Closed-form first variation of the Hermitian Ricci form and scalar
/// curvature along `A`: `ρ̇ = −½ d δ^J A♭` and `Ṡ = ½ Λ^{ql} (d δ^J A♭)_{ql}`.
pub fn variation_hermitian_ricci(
    s: &CompatibleStructure,
    a: &TensorField,
) -> (TensorField, PeriodicField) {
    let d = s.dim();
    let ab = endo_flat(s, a);
    let kappa = delta_j(s, &ab); // 1-form
    let mut rho_dot = TensorField::zeros(s.grid, vec![Slot::Covector, Slot::Covector]);
    for x in 0..d {
        for y in (x + 1)..d {
            let dk = kappa.comp(&[y]).derivative(x).sub(&kappa.comp(&[x]).derivative(y));
            let f = dk.scale(-0.5);
            rho_dot.set(&[x, y], f.clone());
            rho_dot.set(&[y, x], f.neg());
        }
    }
    let mut s_dot = PeriodicField::zeros(s.grid);
    for q in 0..d {
        for l in 0..d {
            let c = s.sympl.lambda(q, l);
            if c != 0.0 {
                s_dot.add_scaled(num_complex::Complex64::new(-c, 0.0), rho_dot.comp(&[q, l]));
            }
        }
    }
    (rho_dot, s_dot)
}
