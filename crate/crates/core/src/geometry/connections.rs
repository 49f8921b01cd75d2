//! The three connections attached to a compatible structure and their
//! curvature, plus covariant derivatives of arbitrary tensors.

use num_complex::Complex64;

use crate::fields::PeriodicField;
use crate::tensor::{Slot, TensorField};

use super::structure::CompatibleStructure;

/// Levi-Civita Christoffel symbols by the Koszul formula,
/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`;
/// component order `[k][i][j]`.
pub fn levi_civita(g: &TensorField, g_inv: &TensorField) -> TensorField {
    let d = g.dim();
    let grid = g.grid;
    let dg: Vec<TensorField> = (0..d).map(|a| g.partial(a)).collect();
    let mut gamma =
        TensorField::zeros(grid, vec![Slot::Vector, Slot::Covector, Slot::Covector]);
    for i in 0..d {
        for j in 0..d {
            // lowered symbol Γ_{l,ij}
            let mut lowered = Vec::with_capacity(d);
            for l in 0..d {
                let mut f = dg[i].comp(&[j, l]).add(dg[j].comp(&[i, l]));
                f = f.sub(dg[l].comp(&[i, j])).scale(0.5);
                lowered.push(f);
            }
            for k in 0..d {
                let mut acc = PeriodicField::zeros(grid);
                for (l, low) in lowered.iter().enumerate() {
                    acc.accumulate_product(Complex64::new(1.0, 0.0), g_inv.comp(&[k, l]), low);
                }
                gamma.set(&[k, i, j], acc);
            }
        }
    }
    gamma
}

/// Covariant derivative with the given Christoffels; the derivative index is
/// prepended as a new first (covector) slot:
/// `(∇T)_{a; I} = ∂_a T_I + Σ_upper Γ^{i_s}_{a c} T_{…c…} − Σ_lower Γ^c_{a i_s} T_{…c…}`.
pub fn covariant_derivative(t: &TensorField, gamma: &TensorField) -> TensorField {
    let d = t.dim();
    let grid = t.grid;
    let rank = t.rank();
    let mut variance = Vec::with_capacity(rank + 1);
    variance.push(Slot::Covector);
    variance.extend_from_slice(&t.variance);
    let mut out = TensorField::zeros(grid, variance);

    let partials: Vec<TensorField> = (0..d).map(|a| t.partial(a)).collect();

    let mut idx = vec![0usize; rank];
    let count = d.pow(rank as u32);
    let mut out_idx = vec![0usize; rank + 1];
    for flat in 0..count {
        // decode flat -> idx (row-major, first slot outermost)
        let mut rem = flat;
        for s in (0..rank).rev() {
            idx[s] = rem % d;
            rem /= d;
        }
        for a in 0..d {
            let mut acc = partials[a].comp(&idx).clone();
            for s in 0..rank {
                let orig = idx[s];
                for c in 0..d {
                    idx[s] = c;
                    let coeff = match t.variance[s] {
                        Slot::Vector => gamma.comp(&[orig, a, c]),
                        Slot::Covector => gamma.comp(&[c, a, orig]),
                    };
                    let sign = match t.variance[s] {
                        Slot::Vector => Complex64::new(1.0, 0.0),
                        Slot::Covector => Complex64::new(-1.0, 0.0),
                    };
                    acc.accumulate_product(sign, coeff, t.comp(&idx));
                }
                idx[s] = orig;
            }
            out_idx[0] = a;
            out_idx[1..].copy_from_slice(&idx);
            out.set(&out_idx, acc);
        }
    }
    out
}

/// `K^J(X,Y) = −J (∇^{g_J}_X J)(Y)`, component order `[k][x][y]`.
pub fn k_tensor(j: &TensorField, gamma_lc: &TensorField) -> TensorField {
    let d = j.dim();
    let grid = j.grid;
    let nabla_j = covariant_derivative(j, gamma_lc); // [a; m, y]
    let mut k = TensorField::zeros(grid, vec![Slot::Vector, Slot::Covector, Slot::Covector]);
    for kk in 0..d {
        for x in 0..d {
            for y in 0..d {
                let mut acc = PeriodicField::zeros(grid);
                for m in 0..d {
                    acc.accumulate_product(
                        Complex64::new(-1.0, 0.0),
                        j.comp(&[kk, m]),
                        nabla_j.comp(&[x, m, y]),
                    );
                }
                k.set(&[kk, x, y], acc);
            }
        }
    }
    k
}

/// Coefficients of the symplectic connection
/// `∇^J_X Y = ∇^{g_J}_X Y + ⅓K^J(X,Y) + ⅓K^J(Y,X)`; also returns `K^J`.
pub fn symplectic_connection(j: &TensorField, gamma_lc: &TensorField) -> (TensorField, TensorField) {
    let d = j.dim();
    let k = k_tensor(j, gamma_lc);
    let mut gamma = gamma_lc.clone();
    for kk in 0..d {
        for i in 0..d {
            for jj in 0..d {
                let corr = k.comp(&[kk, i, jj]).add(k.comp(&[kk, jj, i])).scale(1.0 / 3.0);
                let f = gamma.comp(&[kk, i, jj]).add(&corr);
                gamma.set(&[kk, i, jj], f);
            }
        }
    }
    (gamma, k)
}

/// Coefficients of the canonical `J`-linear connection
/// `∇̄^J_X Y = ∇^{g_J}_X Y + ½K^J(X,Y)`.
pub fn chern_connection(j: &TensorField, gamma_lc: &TensorField) -> TensorField {
    let d = j.dim();
    let k = k_tensor(j, gamma_lc);
    let mut gamma = gamma_lc.clone();
    for kk in 0..d {
        for i in 0..d {
            for jj in 0..d {
                let f = gamma.comp(&[kk, i, jj]).add(&k.comp(&[kk, i, jj]).scale(0.5));
                gamma.set(&[kk, i, jj], f);
            }
        }
    }
    gamma
}

/// Curvature `R(e_k, e_l)e_j = R^r_{jkl} e_r` of a connection with symbols
/// `Γ^k_{ij}`; component order `[r][j][k][l]`.
pub fn curvature(gamma: &TensorField) -> TensorField {
    let d = gamma.dim();
    let grid = gamma.grid;
    let dgamma: Vec<TensorField> = (0..d).map(|a| gamma.partial(a)).collect();
    let mut r = TensorField::zeros(
        grid,
        vec![Slot::Vector, Slot::Covector, Slot::Covector, Slot::Covector],
    );
    for rr in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut acc = dgamma[k].comp(&[rr, l, j]).sub(dgamma[l].comp(&[rr, k, j]));
                    for m in 0..d {
                        acc.accumulate_product(
                            Complex64::new(1.0, 0.0),
                            gamma.comp(&[rr, k, m]),
                            gamma.comp(&[m, l, j]),
                        );
                        acc.accumulate_product(
                            Complex64::new(-1.0, 0.0),
                            gamma.comp(&[rr, l, m]),
                            gamma.comp(&[m, k, j]),
                        );
                    }
                    r.set(&[rr, j, k, l], acc);
                }
            }
        }
    }
    r
}

/// Ricci tensor `Ric_{uv} = R^a_{v a u}` of the Levi-Civita curvature.
pub fn ricci(r: &TensorField) -> TensorField {
    let d = r.dim();
    let mut ric = TensorField::zeros(r.grid, vec![Slot::Covector, Slot::Covector]);
    for u in 0..d {
        for v in 0..d {
            let mut acc = PeriodicField::zeros(r.grid);
            for a in 0..d {
                acc = acc.add(r.comp(&[a, v, a, u]));
            }
            ric.set(&[u, v], acc);
        }
    }
    ric
}

/// Kähler Ricci form `ric(U,V) = Ric(JU, V)`.
pub fn ric_form(j: &CompatibleStructure, ric: &TensorField) -> TensorField {
    let d = j.dim();
    let mut out = TensorField::zeros(j.grid, vec![Slot::Covector, Slot::Covector]);
    for u in 0..d {
        for v in 0..d {
            let mut acc = PeriodicField::zeros(j.grid);
            for c in 0..d {
                acc.accumulate_product(
                    Complex64::new(1.0, 0.0),
                    ric.comp(&[c, v]),
                    j.j.comp(&[c, u]),
                );
            }
            out.set(&[u, v], acc);
        }
    }
    out
}

/// Alternative Ricci-form expression `ric(U,V) = −½ Σ_k g(R(e_a, Je_a)U, V)`
/// contracted frame-free with `g⁻¹`.
pub fn ric_form_curvature_contraction(j: &CompatibleStructure, r: &TensorField) -> TensorField {
    let d = j.dim();
    let grid = j.grid;
    // frame-free: −½ g^{ab} J^c_b g(R(e_a, e_c)U, V) = −½ g^{ab} J^c_b R^m_{uac} g_{mv}
    let mut out = TensorField::zeros(grid, vec![Slot::Covector, Slot::Covector]);
    for u in 0..d {
        for v in 0..d {
            let mut acc = PeriodicField::zeros(grid);
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        for m in 0..d {
                            let term = j
                                .g_inv
                                .comp(&[a, b])
                                .mul(j.j.comp(&[c, b]))
                                .mul(r.comp(&[m, u, a, c]))
                                .mul(j.g.comp(&[m, v]));
                            acc.add_scaled(Complex64::new(-0.5, 0.0), &term);
                        }
                    }
                }
            }
            out.set(&[u, v], acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::geometry::structure::{flat_structure, make_structure, StructureKind};

    fn kahler() -> CompatibleStructure {
        let grid = Grid::new(2, 32).unwrap();
        make_structure(StructureKind::Kahler2d, grid, 0.3, 0).unwrap()
    }

    #[test]
    fn levi_civita_is_metric_and_torsion_free() {
        let s = kahler();
        let nabla_g = covariant_derivative(&s.g, &s.gamma_lc);
        assert!(nabla_g.max_abs() <= 1e-9, "∇g residual {}", nabla_g.max_abs());
        let d = s.dim();
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let t = s.gamma_lc.comp(&[k, i, j]).sub(s.gamma_lc.comp(&[k, j, i]));
                    assert!(t.max_abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn symplectic_connection_properties() {
        let s = kahler();
        // preserves ω
        let omega_rows: Vec<Vec<f64>> = (0..2)
            .map(|r| (0..2).map(|c| s.sympl.omega(r, c)).collect())
            .collect();
        let refs: Vec<&[f64]> = omega_rows.iter().map(|r| r.as_slice()).collect();
        let omega_t =
            TensorField::from_const_matrix(s.grid, vec![Slot::Covector, Slot::Covector], &refs);
        let nabla_omega = covariant_derivative(&omega_t, &s.gamma_sympl);
        assert!(nabla_omega.max_abs() <= 1e-9, "∇^Jω residual {}", nabla_omega.max_abs());
        // torsion-free by construction: symbols symmetric in the lower pair
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let t = s.gamma_sympl.comp(&[k, i, j]).sub(s.gamma_sympl.comp(&[k, j, i]));
                    assert!(t.max_abs() <= 1e-12);
                }
            }
        }
        // ω(K(X,Y),Z) = (∇^g_X ω)(Y,Z) — compare K against the defining property
        let k = &s.k_tensor;
        let nabla_omega_lc = covariant_derivative(&omega_t, &s.gamma_lc);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let mut lhs = crate::fields::PeriodicField::zeros(s.grid);
                    for m in 0..2 {
                        lhs.add_scaled(
                            num_complex::Complex64::new(s.sympl.omega(m, z), 0.0),
                            k.comp(&[m, x, y]),
                        );
                    }
                    let res = lhs.sub(nabla_omega_lc.comp(&[x, y, z])).max_abs();
                    assert!(res <= 1e-9, "K defining property residual {res}");
                }
            }
        }
    }

    #[test]
    fn chern_connection_preserves_g_and_j() {
        let s = kahler();
        let nabla_g = covariant_derivative(&s.g, &s.gamma_chern);
        assert!(nabla_g.max_abs() <= 1e-9, "∇̄g residual {}", nabla_g.max_abs());
        let nabla_j = covariant_derivative(&s.j, &s.gamma_chern);
        assert!(nabla_j.max_abs() <= 1e-9, "∇̄J residual {}", nabla_j.max_abs());
    }

    #[test]
    fn kahler_family_is_integrable_so_connections_coincide() {
        let s = kahler();
        // ∇^{g_J} J = 0 on this family, so all three connections agree
        let nabla_j = covariant_derivative(&s.j, &s.gamma_lc);
        assert!(nabla_j.max_abs() <= 1e-9, "∇J residual {}", nabla_j.max_abs());
        assert!(s.gamma_chern.sub(&s.gamma_lc).max_abs() <= 1e-9);
        assert!(s.gamma_sympl.sub(&s.gamma_lc).max_abs() <= 1e-9);
    }

    #[test]
    fn flat_structure_has_no_curvature() {
        let grid = Grid::new(4, 8).unwrap();
        let s = flat_structure(grid).unwrap();
        assert!(s.gamma_lc.max_abs() <= 1e-13);
        let r = curvature(&s.gamma_lc);
        assert!(r.max_abs() <= 1e-13);
    }

    #[test]
    fn first_bianchi_identity() {
        let s = kahler();
        let r = curvature(&s.gamma_lc);
        let d = s.dim();
        for rr in 0..d {
            for x in 0..d {
                for y in 0..d {
                    for z in 0..d {
                        // R(X,Y)Z + R(Y,Z)X + R(Z,X)Y = 0
                        let sum = r
                            .comp(&[rr, z, x, y])
                            .add(r.comp(&[rr, x, y, z]))
                            .add(r.comp(&[rr, y, z, x]));
                        assert!(sum.max_abs() <= 1e-8, "Bianchi residual {}", sum.max_abs());
                    }
                }
            }
        }
    }

    #[test]
    fn two_ricci_form_expressions_agree() {
        let s = kahler();
        let r = curvature(&s.gamma_lc);
        let ric_t = ricci(&r);
        let form_a = ric_form(&s, &ric_t);
        let form_b = ric_form_curvature_contraction(&s, &r);
        let res = form_a.sub(&form_b).max_abs();
        assert!(res <= 1e-8, "Ricci form mismatch {res}");
    }

    #[test]
    fn perturbed4d_connections_have_expected_properties() {
        let grid = Grid::new(4, 8).unwrap();
        let s = make_structure(StructureKind::Perturbed4d, grid, 0.2, 7).unwrap();
        let nabla_g = covariant_derivative(&s.g, &s.gamma_lc);
        assert!(nabla_g.max_abs() <= 1e-8, "∇g residual {}", nabla_g.max_abs());
        // the coarse n=8 grid limits spectral accuracy of the curved identity
        let nabla_j = covariant_derivative(&s.j, &s.gamma_chern);
        assert!(nabla_j.max_abs() <= 1e-4, "∇̄J residual {}", nabla_j.max_abs());
    }
}
