//! Compatible almost complex structures on `(T^d, ω_standard)` and their
//! tangent vectors.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{random_trig_field, Grid, PeriodicField};
use crate::tensor::{Slot, TensorField};

use super::connections::{chern_connection, levi_civita, symplectic_connection};

/// The constant standard symplectic structure `ω(e_{2i-1}, e_{2i}) = 1` and its
/// inverse coordinate matrix `Λ`.
#[derive(Debug, Clone)]
pub struct SymplecticData {
    pub dim: usize,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SymplecticData {
    pub fn standard(dim: usize) -> Self {
        let mut omega = vec![0.0; dim * dim];
        let mut lambda = vec![0.0; dim * dim];
        for i in 0..dim / 2 {
            let (a, b) = (2 * i, 2 * i + 1);
            omega[a * dim + b] = 1.0;
            omega[b * dim + a] = -1.0;
            // Λ = ω^{-1}
            lambda[a * dim + b] = -1.0;
            lambda[b * dim + a] = 1.0;
        }
        SymplecticData { dim, omega, lambda }
    }

    #[inline]
    pub fn omega(&self, a: usize, b: usize) -> f64 {
        self.omega[a * self.dim + b]
    }

    #[inline]
    pub fn lambda(&self, a: usize, b: usize) -> f64 {
        self.lambda[a * self.dim + b]
    }

    /// Nonzero entries `(i, j, Λ^{ij})`, used by the fiberwise Weyl product.
    pub fn lambda_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut v = Vec::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if self.lambda(i, j) != 0.0 {
                    v.push((i, j, self.lambda(i, j)));
                }
            }
        }
        v
    }
}

/// Which generated family a structure comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    /// Integrable family on `T²`.
    Kahler2d,
    /// Exp-conjugated random perturbation of the flat structure on `T⁴`.
    Perturbed4d,
}

/// An almost complex structure with its derived geometry cached.
#[derive(Debug, Clone)]
pub struct CompatibleStructure {
    pub grid: Grid,
    pub sympl: SymplecticData,
    /// `J^a_b`
    pub j: TensorField,
    /// `g_{ab} = ω_{ac} J^c_b`
    pub g: TensorField,
    pub g_inv: TensorField,
    /// Levi-Civita `Γ^k_{ij}`, component order `[k][i][j]`
    pub gamma_lc: TensorField,
    /// Symplectic connection coefficients
    pub gamma_sympl: TensorField,
    /// Chern connection coefficients
    pub gamma_chern: TensorField,
    /// `K^J(X,Y) = -J (∇^{g_J}_X J)(Y)`, order `[k][x][y]`
    pub k_tensor: TensorField,
    /// Worst invariant residual observed at construction.
    pub invariant_residual: f64,
}

/// Tangent vector at `J`: `ω(·, A·)` symmetric and `AJ = -JA`.
#[derive(Debug, Clone)]
pub struct TangentAtJ {
    pub a: TensorField,
}

/// Lower an endomorphism with the constant `ω`: `(ωA)_{xy} = ω_{xc} A^c_y`.
pub fn omega_lower(sympl: &SymplecticData, a: &TensorField) -> TensorField {
    let d = sympl.dim;
    let mut out = TensorField::zeros(a.grid, vec![Slot::Covector, Slot::Covector]);
    for x in 0..d {
        for y in 0..d {
            let mut acc = PeriodicField::zeros(a.grid);
            for c in 0..d {
                let w = sympl.omega(x, c);
                if w != 0.0 {
                    acc.add_scaled(Complex64::new(w, 0.0), a.comp(&[c, y]));
                }
            }
            out.set(&[x, y], acc);
        }
    }
    out
}

/// Raise the first slot of a 2-tensor with `Λ`: `A^x_y = Λ^{xc} a_{cy}`.
pub fn lambda_raise(sympl: &SymplecticData, a: &TensorField) -> TensorField {
    let d = sympl.dim;
    let mut out = TensorField::zeros(a.grid, vec![Slot::Vector, Slot::Covector]);
    for x in 0..d {
        for y in 0..d {
            let mut acc = PeriodicField::zeros(a.grid);
            for c in 0..d {
                let l = sympl.lambda(x, c);
                if l != 0.0 {
                    acc.add_scaled(Complex64::new(l, 0.0), a.comp(&[c, y]));
                }
            }
            out.set(&[x, y], acc);
        }
    }
    out
}

impl CompatibleStructure {
    /// Validate and cache the geometry of an explicit `J`.
    pub fn from_tensor(j: TensorField) -> Result<Self> {
        let grid = j.grid;
        let d = grid.dim;
        let sympl = SymplecticData::standard(d);

        let mut worst = 0.0f64;

        // J² = -Id
        let j2 = j.mat_mul(&j);
        let res_j2 = j2.add(&TensorField::identity_endo(grid)).max_abs();
        worst = worst.max(res_j2);
        if res_j2 > 1e-10 {
            return Err(Error::StructureRejected(format!("J² + Id residual {res_j2:.3e}")));
        }

        // ω(J·, J·) = ω  ⇔  Jᵀ ω J = ω
        let omega_t = TensorField::from_const_matrix(
            grid,
            vec![Slot::Covector, Slot::Covector],
            &matrix_rows(&sympl.omega, d),
        );
        let jtoj = j.transpose2().mat_mul(&omega_t).mat_mul(&j);
        let res_compat = jtoj.sub(&omega_t).max_abs();
        worst = worst.max(res_compat);
        if res_compat > 1e-10 {
            return Err(Error::StructureRejected(format!(
                "ω(J·,J·) - ω residual {res_compat:.3e}"
            )));
        }

        // g = ωJ, must be symmetric positive definite
        let g = omega_lower(&sympl, &j);
        let res_sym = g.sub(&g.transpose2()).max_abs();
        worst = worst.max(res_sym);
        if res_sym > 1e-10 {
            return Err(Error::StructureRejected(format!("g asymmetry {res_sym:.3e}")));
        }
        let min_eig = min_eigenvalue_sym(&g);
        if min_eig <= 0.0 {
            return Err(Error::StructureRejected(format!(
                "positivity failure: min eigenvalue of g is {min_eig:.3e}"
            )));
        }

        let g_inv = g.pointwise_inverse();
        let res_inv = g_inv.mat_mul(&g).sub(&TensorField::identity_endo(grid)).max_abs();
        worst = worst.max(res_inv);
        if res_inv > 1e-10 {
            return Err(Error::StructureRejected(format!("g·g⁻¹ residual {res_inv:.3e}")));
        }

        // algebraic consequence of compatibility: g⁻¹ = -J Λ
        let lambda_t = TensorField::from_const_matrix(
            grid,
            vec![Slot::Vector, Slot::Vector],
            &matrix_rows(&sympl.lambda, d),
        );
        let res_alg = g_inv.add(&j.mat_mul(&lambda_t)).max_abs();
        worst = worst.max(res_alg);
        if res_alg > 1e-10 {
            return Err(Error::StructureRejected(format!("g⁻¹ + JΛ residual {res_alg:.3e}")));
        }

        let gamma_lc = levi_civita(&g, &g_inv);
        let (gamma_sympl, k_tensor) = symplectic_connection(&j, &gamma_lc);
        let gamma_chern = chern_connection(&j, &gamma_lc);

        let s = CompatibleStructure {
            grid,
            sympl,
            j,
            g,
            g_inv,
            gamma_lc,
            gamma_sympl,
            gamma_chern,
            k_tensor,
            invariant_residual: worst,
        };
        // frame conditioning is part of the type contract
        let det = s.frame_det_min()?;
        if det <= 1e-6 {
            return Err(Error::DegenerateFrame(det));
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Complex frame `Z_i = e_{2i-1} - i J e_{2i-1}`; components `Z_i^a`.
    pub fn frame(&self) -> Vec<Vec<PeriodicField>> {
        self.frame_from(|i| 2 * i)
    }

    /// Alternative frame `Z_i = e_{2i} - i J e_{2i}` for frame-independence tests.
    pub fn frame_alt(&self) -> Vec<Vec<PeriodicField>> {
        self.frame_from(|i| 2 * i + 1)
    }

    fn frame_from(&self, base: impl Fn(usize) -> usize) -> Vec<Vec<PeriodicField>> {
        let d = self.dim();
        let m = d / 2;
        let mut frame = Vec::with_capacity(m);
        for i in 0..m {
            let b = base(i);
            let mut comps = Vec::with_capacity(d);
            for a in 0..d {
                let mut f = self.j.comp(&[a, b]).scale_c(Complex64::new(0.0, -1.0));
                if a == b {
                    f = f.add(&PeriodicField::constant(self.grid, 1.0));
                }
                f.is_real = false;
                comps.push(f);
            }
            frame.push(comps);
        }
        frame
    }

    /// Minimum over the grid of `|det h(Z_i, Z_k)|` for the default frame.
    pub fn frame_det_min(&self) -> Result<f64> {
        let frame = self.frame();
        let h = super::hermitian::hermitian_matrix(self, &frame);
        let m = self.dim() / 2;
        let mut min = f64::INFINITY;
        for p in 0..self.grid.points() {
            let det = if m == 1 {
                h[0][0].data[p]
            } else {
                h[0][0].data[p] * h[1][1].data[p] - h[0][1].data[p] * h[1][0].data[p]
            };
            min = min.min(det.norm());
        }
        Ok(min)
    }
}

fn matrix_rows(m: &[f64], d: usize) -> Vec<&[f64]> {
    (0..d).map(|r| &m[r * d..(r + 1) * d]).collect()
}

/// Minimum eigenvalue of a symmetric (0,2) tensor over the grid.
pub fn min_eigenvalue_sym(g: &TensorField) -> f64 {
    let d = g.dim();
    let mut min = f64::INFINITY;
    for p in 0..g.grid.points() {
        let mut m = nalgebra::DMatrix::<f64>::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                m[(a, b)] = g.comp(&[a, b]).data[p].re;
            }
        }
        let eig = m.symmetric_eigenvalues();
        for e in eig.iter() {
            min = min.min(*e);
        }
    }
    min
}

/// Build a compatible structure from one of the two generated families.
pub fn make_structure(kind: StructureKind, grid: Grid, eps: f64, seed: u64) -> Result<CompatibleStructure> {
    match kind {
        StructureKind::Kahler2d => {
            if grid.dim != 2 {
                return Err(Error::InvalidConfig("kahler2d requires dim 2".into()));
            }
            // J = [[p, q], [r, -p]] with p² + qr = -det = ... chosen so J² = -Id
            let p = PeriodicField::from_real_fn(grid, |x| eps * (x[0] + x[1]).sin());
            let r = PeriodicField::from_real_fn(grid, |x| (eps * x[0].cos()).exp());
            let one = PeriodicField::constant(grid, 1.0);
            let q = one.add(&p.mul(&p)).div(&r).neg();
            let mut j = TensorField::zeros(grid, vec![Slot::Vector, Slot::Covector]);
            j.set(&[0, 0], p.clone());
            j.set(&[0, 1], q);
            j.set(&[1, 0], r);
            j.set(&[1, 1], p.neg());
            CompatibleStructure::from_tensor(j)
        }
        StructureKind::Perturbed4d => {
            if grid.dim != 4 {
                return Err(Error::InvalidConfig("perturbed4d requires dim 4".into()));
            }
            let flat = flat_structure(grid)?;
            let a0 = random_tangent(&flat, seed)?;
            let half_ja = flat.j.mat_mul(&a0.a).scale(0.5 * eps);
            let e = half_ja.pointwise_exp();
            let e_inv = half_ja.neg().pointwise_exp();
            let j = e.mat_mul(&flat.j).mat_mul(&e_inv);
            CompatibleStructure::from_tensor(j)
        }
    }
}

/// The constant standard structure `J₀ = Λ` (so that `g = Id`).
pub fn flat_structure(grid: Grid) -> Result<CompatibleStructure> {
    let sympl = SymplecticData::standard(grid.dim);
    let rows: Vec<&[f64]> =
        (0..grid.dim).map(|r| &sympl.lambda[r * grid.dim..(r + 1) * grid.dim]).collect();
    let j = TensorField::from_const_matrix(grid, vec![Slot::Vector, Slot::Covector], &rows);
    CompatibleStructure::from_tensor(j)
}

/// Project a random (1,1) field onto `T_J 𝒥`: first to the `J`-anticommuting
/// part `½(M + JMJ)`, then to the `ω`-symmetric part. The result is
/// normalized to unit sup-norm.
///
/// In dimension 4 the grid is coarse (n = 8), so the generator frequency is
/// lowered to 1 to keep products of tangents inside the dealiasing budget.
pub fn random_tangent(j: &CompatibleStructure, seed: u64) -> Result<TangentAtJ> {
    let max_freq = if j.dim() == 4 { 1 } else { 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A9C_3E11);
    for attempt in 0..5 {
        let _ = attempt;
        let mut m = TensorField::zeros(j.grid, vec![Slot::Vector, Slot::Covector]);
        for a in 0..j.dim() {
            for b in 0..j.dim() {
                let s: u64 = rng.gen();
                m.set(&[a, b], random_trig_field(j.grid, s, max_freq, false)?);
            }
        }
        let t = project_tangent(j, &m);
        let norm = t.max_abs();
        if norm < 1e-8 {
            continue;
        }
        let t = t.scale(1.0 / norm);
        let res = tangent_residual(j, &t);
        if res <= 1e-10 {
            return Ok(TangentAtJ { a: t });
        }
    }
    Err(Error::TangentProjectionFailed(5))
}

/// The two projections used by [`random_tangent`], exposed for idempotence tests.
pub fn project_tangent(j: &CompatibleStructure, m: &TensorField) -> TensorField {
    let anti = m.add(&j.j.mat_mul(m).mat_mul(&j.j)).scale(0.5);
    let a = omega_lower(&j.sympl, &anti);
    let sym = a.add(&a.transpose2()).scale(0.5);
    lambda_raise(&j.sympl, &sym)
}

/// Worst of the two tangency residuals: `AJ + JA` and `ω(X,AY) - ω(Y,AX)`.
pub fn tangent_residual(j: &CompatibleStructure, a: &TensorField) -> f64 {
    let anti = a.mat_mul(&j.j).add(&j.j.mat_mul(a)).max_abs();
    let low = omega_lower(&j.sympl, a);
    let sym = low.sub(&low.transpose2()).max_abs();
    anti.max(sym)
}
