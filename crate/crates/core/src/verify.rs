//! Declarative registry of named numerical checks.
//!
//! Each check binds one verified identity to a deterministic procedure with a
//! seeded input family, a residual, and a tolerance, producing
//! machine-readable pass/fail evidence. Anchors are the formula strings of
//! the identities themselves; `docs/identities.md` maps every anchor to the
//! implementing code.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedosov::{build_fedosov, moyal_star};
use crate::fields::{random_trig_field, Grid, PeriodicField};
use crate::geometry::{
    fd_richardson, fd_richardson_field, first_variation_levi_civita,
    first_variation_levi_civita_fd, flat_structure, hamiltonian_field, hermitian_ricci, j_along,
    laplacian, lie_derivative_j, make_structure, random_tangent, variation_hermitian_ricci,
    CompatibleStructure, StructureKind,
};
use crate::moment::{
    curvature_element_with, delta_flat, hamiltonian_correction_1form, moment_residual_classical,
    moment_residual_with, DensityOptions,
};
use crate::tensor::{Slot, TensorField};

/// Run-wide configuration shared by the verification suite and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Torus dimension, 2 or 4.
    pub dim: usize,
    /// Grid points per axis (even).
    pub grid_n: usize,
    /// Deformation amplitude of the base structure; `0` selects the flat one.
    pub eps: f64,
    /// Seed for every random draw (structures, tangents, Hamiltonians).
    pub seed: u64,
    /// Highest ν-power carried by formal results.
    pub nu_order: i64,
    /// Fiberwise total-degree cap; must be at least `2·nu_order + 2`.
    pub weyl_degree_cap: i32,
    /// Step of the central finite-difference stencils.
    pub fd_step: f64,
    /// Check names to run; `["all"]` (or empty `--check` selection) runs the
    /// full registry.
    pub checks: Vec<String>,
    /// Where the CLI writes the JSON report, if anywhere.
    pub report_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            grid_n: 32,
            eps: 0.3,
            seed: 7,
            nu_order: 2,
            weyl_degree_cap: 8,
            fd_step: 1e-3,
            checks: vec!["all".to_string()],
            report_path: None,
        }
    }
}

impl RunConfig {
    /// Validates the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 4 {
            return Err(Error::InvalidConfig(format!("dim must be 2 or 4, got {}", self.dim)));
        }
        if self.grid_n < 8 || self.grid_n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "grid_n must be even and at least 8, got {}",
                self.grid_n
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be >= 0, got {}", self.eps)));
        }
        if self.nu_order < 0 {
            return Err(Error::InvalidConfig(format!(
                "nu_order must be >= 0, got {}",
                self.nu_order
            )));
        }
        if (self.weyl_degree_cap as i64) < 2 * self.nu_order + 2 {
            return Err(Error::InvalidConfig(format!(
                "weyl_degree_cap {} is below 2*nu_order + 2 = {}",
                self.weyl_degree_cap,
                2 * self.nu_order + 2
            )));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidConfig(format!("fd_step must be > 0, got {}", self.fd_step)));
        }
        for name in &self.checks {
            if name != "all" && find_check(name).is_none() {
                return Err(Error::UnknownCheck(name.clone()));
            }
        }
        Ok(())
    }

    /// The registry entries selected by `checks`.
    pub fn selected_checks(&self) -> Vec<&'static CheckSpec> {
        if self.checks.iter().any(|c| c == "all") {
            registry().iter().collect()
        } else {
            registry().iter().filter(|s| self.checks.iter().any(|c| c == s.name)).collect()
        }
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Formula string of the verified identity (see `docs/identities.md`).
    pub anchor: String,
    /// Normalized residual produced by the check procedure.
    pub residual: f64,
    pub tolerance: f64,
    /// `residual <= tolerance` and the procedure completed.
    pub passed: bool,
    pub runtime_ms: u128,
    pub config_echo: RunConfig,
    /// Failure of the procedure itself (not of the tolerance), if any.
    pub error: Option<String>,
}

/// One registry entry: an identity, its tolerance, and its procedure.
pub struct CheckSpec {
    pub name: &'static str,
    pub anchor: &'static str,
    pub tolerance: f64,
    runner: fn(&RunConfig) -> Result<f64>,
}

/// The full declarative check registry, in canonical report order.
pub fn registry() -> &'static [CheckSpec] {
    &REGISTRY
}

static REGISTRY: [CheckSpec; 10] = [
    CheckSpec {
        name: "moyal_oracle",
        anchor: "Moyal star product",
        tolerance: 1e-10,
        runner: check_moyal_oracle,
    },
    CheckSpec {
        name: "firstvarnabla",
        anchor: "1/2((nabla_Y a)(X,Z) + (nabla_X a)(Y,Z) - (nabla_Z a)(X,Y))",
        tolerance: 1e-6,
        runner: check_firstvarnabla,
    },
    CheckSpec {
        name: "cor_variation",
        anchor: "-1/2 d delta^J A^flat",
        tolerance: 1e-5,
        runner: check_cor_variation,
    },
    CheckSpec {
        name: "lemma_delta",
        anchor: "-1/2 d(Tr(JAB))",
        tolerance: 1e-4,
        runner: check_lemma_delta,
    },
    CheckSpec {
        name: "lemma_exact_laplacian",
        anchor: "d(1/2 Delta^J H)",
        tolerance: 1e-5,
        runner: check_lemma_exact_laplacian,
    },
    CheckSpec {
        name: "lemma_ddto_laplacian",
        anchor: "(delta^J A)^flat(X_H)",
        tolerance: 1e-5,
        runner: check_lemma_ddto_laplacian,
    },
    CheckSpec {
        name: "lemma_formula",
        anchor: "int Tr(JA L_{X_H}J)",
        tolerance: 1e-6,
        runner: check_lemma_formula,
    },
    CheckSpec {
        name: "r_leading",
        anchor: "(nu/4) Tr(JAB)",
        tolerance: 1e-5,
        runner: check_r_leading,
    },
    CheckSpec {
        name: "df_order0",
        anchor: "coincide with the Donaldson-Fujiki moment map",
        tolerance: 1e-4,
        runner: check_df_order0,
    },
    CheckSpec {
        name: "kahler_order1",
        anchor: "H - (nu/2) Delta^J H",
        tolerance: 1e-3,
        runner: check_kahler_order1,
    },
];

fn find_check(name: &str) -> Option<&'static CheckSpec> {
    registry().iter().find(|s| s.name == name)
}

/// Runs one named check under `config`. A failing procedure yields a result
/// with `passed = false` and the error message attached; an unknown name or
/// invalid config is an error.
pub fn run_check(name: &str, config: &RunConfig) -> Result<CheckResult> {
    config.validate()?;
    let spec = find_check(name).ok_or_else(|| Error::UnknownCheck(name.to_string()))?;
    Ok(execute(spec, config))
}

/// Runs the configured selection of checks, concurrently up to the
/// `DQLAB_THREADS` cap; never aborts on a single failure. Results come back
/// in registry order regardless of completion order.
pub fn run_suite(config: &RunConfig) -> Result<Vec<CheckResult>> {
    config.validate()?;
    let specs = config.selected_checks();
    if specs.is_empty() {
        return Ok(Vec::new());
    }
    let workers = thread_cap().min(specs.len());
    let slots: Vec<Mutex<Option<CheckResult>>> = specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let result = execute(specs[i], config);
                *slots[i].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("check not executed"))
        .collect())
}

/// Parallelism cap: `DQLAB_THREADS` if set and positive, else the number of
/// available cores.
pub fn thread_cap() -> usize {
    std::env::var("DQLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn execute(spec: &CheckSpec, config: &RunConfig) -> CheckResult {
    let start = Instant::now();
    let outcome = (spec.runner)(config);
    let runtime_ms = start.elapsed().as_millis();
    match outcome {
        Ok(residual) => CheckResult {
            name: spec.name.to_string(),
            anchor: spec.anchor.to_string(),
            residual,
            tolerance: spec.tolerance,
            passed: residual <= spec.tolerance,
            runtime_ms,
            config_echo: config.clone(),
            error: None,
        },
        Err(e) => CheckResult {
            name: spec.name.to_string(),
            anchor: spec.anchor.to_string(),
            residual: f64::MAX,
            tolerance: spec.tolerance,
            passed: false,
            runtime_ms,
            config_echo: config.clone(),
            error: Some(e.to_string()),
        },
    }
}

// ---------------------------------------------------------------------------
// seeded input families
// ---------------------------------------------------------------------------

/// Base structure at the configured dimension: flat when `eps = 0`, otherwise
/// the integrable T² family or the exp-conjugated T⁴ perturbation.
fn base_structure(cfg: &RunConfig) -> Result<CompatibleStructure> {
    let grid = Grid::new(cfg.dim, cfg.grid_n)?;
    if cfg.eps == 0.0 {
        flat_structure(grid)
    } else if cfg.dim == 2 {
        make_structure(StructureKind::Kahler2d, grid, cfg.eps, cfg.seed)
    } else {
        make_structure(StructureKind::Perturbed4d, grid, cfg.eps, cfg.seed)
    }
}

/// Integrable T² structure regardless of the configured dimension; used by
/// checks whose identity requires integrability.
fn surface_structure(cfg: &RunConfig) -> Result<CompatibleStructure> {
    let grid = Grid::new(2, cfg.grid_n.max(16))?;
    if cfg.eps == 0.0 {
        flat_structure(grid)
    } else {
        make_structure(StructureKind::Kahler2d, grid, cfg.eps, cfg.seed)
    }
}

fn zero_mean_h(s: &CompatibleStructure, seed: u64) -> Result<PeriodicField> {
    let max_freq = if s.grid.dim == 2 { 2 } else { 1 };
    random_trig_field(s.grid, seed, max_freq, true)
}

fn pairing_eval(kappa: &TensorField, x: &TensorField) -> PeriodicField {
    let d = kappa.grid.dim;
    let mut acc = PeriodicField::zeros(kappa.grid);
    for i in 0..d {
        acc.accumulate_product(
            num_complex::Complex64::new(1.0, 0.0),
            kappa.comp(&[i]),
            x.comp(&[i]),
        );
    }
    acc
}

fn scalar_exterior_derivative(f: &PeriodicField) -> TensorField {
    let d = f.grid.dim;
    let mut out = TensorField::zeros(f.grid, vec![Slot::Covector]);
    for i in 0..d {
        out.set(&[i], f.derivative(i));
    }
    out
}

// ---------------------------------------------------------------------------
// check procedures
// ---------------------------------------------------------------------------

/// Flat T²: the constructed star product must reproduce the constant-
/// coefficient star through `ν³` per coefficient.
fn check_moyal_oracle(cfg: &RunConfig) -> Result<f64> {
    let grid = Grid::new(2, cfg.grid_n)?;
    let s = flat_structure(grid)?;
    let cap = cfg.weyl_degree_cap.max(8);
    let fd = build_fedosov(&s, cap)?;
    let f = random_trig_field(grid, cfg.seed, 2, false)?;
    let g = random_trig_field(grid, cfg.seed + 1, 2, false)?;
    let ours = fd.star(&f, &g, 3)?;
    let oracle = moyal_star(&s.sympl, &f, &g, 3)?;
    let mut worst: f64 = 0.0;
    for k in 0..=3 {
        let diff = ours.coeff_or_zero(k, &f).sub(&oracle.coeff_or_zero(k, &f));
        worst = worst.max(diff.max_abs());
    }
    Ok(worst)
}

/// First variation of the Levi-Civita connection vs the finite-difference
/// oracle, worst case over 5 seeded tangents.
fn check_firstvarnabla(cfg: &RunConfig) -> Result<f64> {
    let s = base_structure(cfg)?;
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let a = random_tangent(&s, cfg.seed + 10 + k)?.a;
        let closed = first_variation_levi_civita(&s, &a);
        let fd = first_variation_levi_civita_fd(&s, &a, cfg.fd_step)?;
        worst = worst.max(closed.sub(&fd).max_abs());
    }
    Ok(worst)
}

/// First variation of the Hermitian Ricci form vs the finite-difference
/// oracle, worst case over 5 seeded tangents.
fn check_cor_variation(cfg: &RunConfig) -> Result<f64> {
    let s = base_structure(cfg)?;
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let a = random_tangent(&s, cfg.seed + 10 + k)?.a;
        let (rho_dot, _) = variation_hermitian_ricci(&s, &a);
        let fd = fd_richardson(|t| Ok(hermitian_ricci(&j_along(&s, &a, t)?)?.0), cfg.fd_step)?;
        worst = worst.max(rho_dot.sub(&fd).max_abs());
    }
    Ok(worst)
}

/// Stacked second-order finite differences of the divergence 1-form along the
/// two-parameter family against the exact right-hand side `−½ d(Tr(JAB))`.
fn check_lemma_delta(cfg: &RunConfig) -> Result<f64> {
    let s = base_structure(cfg)?;
    let a = random_tangent(&s, cfg.seed + 10)?.a;
    let b = random_tangent(&s, cfg.seed + 11)?.a;
    let term_a = fd_richardson(
        |t| {
            let st = j_along(&s, &a, t)?;
            Ok(delta_flat(&st, &b))
        },
        cfg.fd_step,
    )?;
    let term_b = fd_richardson(
        |t| {
            let st = j_along(&s, &b, t)?;
            Ok(delta_flat(&st, &a))
        },
        cfg.fd_step,
    )?;
    let tr = s.j.mat_mul(&a).mat_mul(&b).trace2();
    let rhs = scalar_exterior_derivative(&tr).scale(-0.5);
    Ok(term_a.sub(&term_b).sub(&rhs).max_abs())
}

/// The classical correction 1-form equals the differential of half the
/// twisted Laplacian (integrable surface case).
fn check_lemma_exact_laplacian(cfg: &RunConfig) -> Result<f64> {
    let s = surface_structure(cfg)?;
    let h = zero_mean_h(&s, cfg.seed + 20)?;
    let beta = hamiltonian_correction_1form(&s, &h)?;
    let rhs = scalar_exterior_derivative(&laplacian(&s, &h).scale(0.5));
    Ok(beta.sub(&rhs).max_abs())
}

/// First variation of the twisted Laplacian along a tangent against
/// `(δ^J A)♭(X_H) − ½Tr(JA ℒ_{X_H}J)`; the ½ on the trace term is the
/// resolved coefficient forced by the finite-difference oracle in these
/// conventions.
fn check_lemma_ddto_laplacian(cfg: &RunConfig) -> Result<f64> {
    let s = surface_structure(cfg)?;
    let a = random_tangent(&s, cfg.seed + 10)?.a;
    let h = zero_mean_h(&s, cfg.seed + 20)?;
    let lhs = fd_richardson_field(|t| Ok(laplacian(&j_along(&s, &a, t)?, &h)), cfg.fd_step)?;
    let x = hamiltonian_field(&s.sympl, &h);
    let kappa = delta_flat(&s, &a);
    let lxj = lie_derivative_j(&s, &h);
    let tr = s.j.mat_mul(&a).mat_mul(&lxj).trace2();
    let rhs = pairing_eval(&kappa, &x).sub(&tr.scale(0.5));
    Ok(lhs.sub(&rhs).max_abs())
}

/// Integral identity `∫(δ^J A)♭(X_H) = ½∫Tr(JA ℒ_{X_H}J)`, normalized by the
/// size of the two sides; the ½ is the resolved coefficient consistent with
/// the Laplacian-variation identity after integration.
fn check_lemma_formula(cfg: &RunConfig) -> Result<f64> {
    let s = base_structure(cfg)?;
    let a = random_tangent(&s, cfg.seed + 10)?.a;
    let h = zero_mean_h(&s, cfg.seed + 20)?;
    let x = hamiltonian_field(&s.sympl, &h);
    let kappa = delta_flat(&s, &a);
    let lhs = pairing_eval(&kappa, &x).integrate();
    let lxj = lie_derivative_j(&s, &h);
    let rhs = 0.5 * s.j.mat_mul(&a).mat_mul(&lxj).trace2().integrate();
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0))
}

/// Leading coefficient of the curvature element against `(ν/4)Tr(JAB)`,
/// relative to the scale of the target.
fn check_r_leading(cfg: &RunConfig) -> Result<f64> {
    let s = surface_structure(cfg)?;
    let cap = cfg.weyl_degree_cap.min(6).max(4);
    let fd = build_fedosov(&s, cap)?;
    let a = random_tangent(&s, cfg.seed + 10)?.a;
    let b = random_tangent(&s, cfg.seed + 11)?.a;
    let r = curvature_element_with(&fd, &a, &b, cfg.fd_step)?;
    let target = s.j.mat_mul(&a).mat_mul(&b).trace2().scale(0.25);
    let sp = r.value.scalar_part();
    let lead = sp.get(&1).cloned().unwrap_or_else(|| PeriodicField::zeros(s.grid));
    Ok(lead.sub(&target).max_abs() / target.max_abs().max(1e-3))
}

/// Classical (`ν⁰`) moment-map identity over 3 seeded pairs, residual
/// relative to the size of the two sides.
fn check_df_order0(cfg: &RunConfig) -> Result<f64> {
    let s = base_structure(cfg)?;
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let a = random_tangent(&s, cfg.seed + 10 + k)?.a;
        let h = zero_mean_h(&s, cfg.seed + 20 + k)?;
        let (lhs, rhs) = moment_residual_classical(&s, &h, &a)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-6));
    }
    Ok(worst)
}

/// Order-`ν¹` moment-map identity for the integrable family with the
/// Laplacian-corrected moment map, residual relative to the size of the
/// derivative side.
fn check_kahler_order1(cfg: &RunConfig) -> Result<f64> {
    let s = surface_structure(cfg)?;
    // The density behind the corrected trace is solved through ρ₂, whose
    // defining equation uses star-commutator coefficients through ν³,
    // requiring a fiber-degree cap of at least 8.
    let cap = cfg.weyl_degree_cap.max(8);
    let a = random_tangent(&s, cfg.seed + 10)?.a;
    let h = zero_mean_h(&s, cfg.seed + 20)?;
    // The ν¹ coefficient of the corrected trace involves the density through
    // ρ₂ (the trace carries a (2πν)^{-1} prefactor on the surface), so the
    // density is solved one order beyond the identity order. The band limit
    // must reach the grid's full spectrum (n/2 − 1 at the reference n = 16):
    // truncating at 6 leaves an O(1e-2) error in the differentiated density,
    // while 7 brings the residual to the finite-difference floor (~5e-5).
    let opts = DensityOptions { nu_order: 2, mode_limit: 7, pairs: 300, seed: cfg.seed + 30 };
    let sides = moment_residual_with(&s, &h, &a, 1, cap, Some(&opts))?;
    // Residual relative to the size of the identity's own terms (floored at
    // the Hamiltonian's sup-norm so exact zeros cannot inflate it).
    let scale = sides
        .iter()
        .map(|(_, l, r)| l.abs().max(r.abs()))
        .fold(h.max_abs().max(1.0), f64::max);
    Ok(sides.into_iter().map(|(_, l, r)| (l - r).abs()).fold(0.0f64, f64::max) / scale)
}
