//! Command-line entry point: configuration, execution, and reporting for the
//! verification suite, field dumps for inspection, and module timings.
//!
//! Exit codes: `0` when everything selected passes, `1` when a check fails,
//! `2` on invalid configuration or I/O problems.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dqlab_core::error::Error as CoreError;
use dqlab_core::fedosov::build_fedosov;
use dqlab_core::fields::{random_trig_field, Grid, PeriodicField};
use dqlab_core::geometry::{
    flat_structure, hermitian_ricci, hermitian_scalar, make_structure, CompatibleStructure,
    StructureKind,
};
use dqlab_core::verify::{run_suite, CheckResult, RunConfig};

const REPORT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "dqlab", version, about = "Deformation-quantization laboratory on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suite and write a JSON report.
    Verify(VerifyArgs),
    /// Emit geometry and star-product coefficient fields as CSV.
    Compute(ComputeArgs),
    /// Time representative operations per module.
    Bench(BenchArgs),
}

/// Flags mirroring `RunConfig`; a `--config` JSON file supplies defaults and
/// explicit flags override it.
#[derive(Args, Clone)]
struct ConfigFlags {
    /// JSON file mirroring the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Torus dimension (2 or 4).
    #[arg(long)]
    dim: Option<usize>,
    /// Grid points per axis (even).
    #[arg(long)]
    grid: Option<usize>,
    /// Deformation amplitude; 0 selects the flat structure.
    #[arg(long)]
    eps: Option<f64>,
    /// Seed for all random draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Highest ν-power of formal results.
    #[arg(long = "nu-order")]
    nu_order: Option<i64>,
    /// Fiberwise total-degree cap (at least 2·nu_order + 2).
    #[arg(long = "cap")]
    weyl_degree_cap: Option<i32>,
    /// Finite-difference step.
    #[arg(long = "fd-step")]
    fd_step: Option<f64>,
}

impl ConfigFlags {
    fn build(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.grid {
            cfg.grid_n = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.nu_order {
            cfg.nu_order = v;
        }
        if let Some(v) = self.weyl_degree_cap {
            cfg.weyl_degree_cap = v;
        }
        if let Some(v) = self.fd_step {
            cfg.fd_step = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Check name to run (repeatable); default is the configured selection.
    #[arg(long = "check")]
    checks: Vec<String>,
    /// Report output path (overrides the config's report_path).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// What to emit: hermitian_scalar, hermitian_ricci, or star_coefficient.
    #[arg(long)]
    field: String,
    /// ν-power selected for star_coefficient.
    #[arg(long, default_value_t = 1)]
    order: i64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    flags: ConfigFlags,
}

enum CliError {
    /// Invalid configuration or I/O problem → exit 2.
    Config(String),
}

#[derive(Serialize)]
struct Report<'a> {
    version: &'a str,
    config: &'a RunConfig,
    results: &'a [CheckResult],
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Compute(args) => cmd_compute(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn core_to_cli(e: CoreError) -> CliError {
    CliError::Config(e.to_string())
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, CliError> {
    let mut cfg = args.flags.build()?;
    if !args.checks.is_empty() {
        cfg.checks = args.checks.clone();
    }
    if let Some(path) = &args.report {
        cfg.report_path = Some(path.display().to_string());
    }
    cfg.validate().map_err(core_to_cli)?;
    let results = run_suite(&cfg).map_err(core_to_cli)?;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        match &r.error {
            Some(e) => println!("{status} {} error: {e} ({} ms)", r.name, r.runtime_ms),
            None => println!(
                "{status} {} residual {:.3e} tolerance {:.3e} ({} ms)",
                r.name, r.residual, r.tolerance, r.runtime_ms
            ),
        }
    }
    let report = Report { version: REPORT_VERSION, config: &cfg, results: &results };
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Config(format!("serializing report: {e}")))?;
    match &cfg.report_path {
        Some(path) => fs::write(path, body.as_bytes())
            .map_err(|e| CliError::Config(format!("writing {path}: {e}")))?,
        None => println!("{body}"),
    }
    if results.iter().all(|r| r.passed) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn base_structure(cfg: &RunConfig) -> Result<CompatibleStructure, CliError> {
    let grid = Grid::new(cfg.dim, cfg.grid_n).map_err(core_to_cli)?;
    let s = if cfg.eps == 0.0 {
        flat_structure(grid)
    } else if cfg.dim == 2 {
        make_structure(StructureKind::Kahler2d, grid, cfg.eps, cfg.seed)
    } else {
        make_structure(StructureKind::Perturbed4d, grid, cfg.eps, cfg.seed)
    };
    s.map_err(core_to_cli)
}

/// CSV layout: one header row with the per-axis sample coordinates, then each
/// named field as row-major sample rows (the last axis varies within a row).
fn write_csv(out: &mut dyn std::io::Write, fields: &[(String, &PeriodicField)]) -> std::io::Result<()> {
    let grid = fields[0].1.grid;
    let n = grid.n;
    let header: Vec<String> = (0..n).map(|i| format!("{:.12}", grid.h() * i as f64)).collect();
    writeln!(out, "{}", header.join(","))?;
    let rows = grid.points() / n;
    for (name, f) in fields {
        writeln!(out, "# {name}")?;
        for row in 0..rows {
            let line: Vec<String> =
                (0..n).map(|c| format!("{:.15e}", f.data[row * n + c].re)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
    }
    Ok(())
}

fn cmd_compute(args: ComputeArgs) -> Result<ExitCode, CliError> {
    let cfg = args.flags.build()?;
    cfg.validate().map_err(core_to_cli)?;
    let s = base_structure(&cfg)?;
    let mut named: Vec<(String, PeriodicField)> = Vec::new();
    match args.field.as_str() {
        "hermitian_scalar" => {
            let (rho, _) = hermitian_ricci(&s).map_err(core_to_cli)?;
            named.push(("hermitian_scalar".into(), hermitian_scalar(&s, &rho)));
        }
        "hermitian_ricci" => {
            let (rho, _) = hermitian_ricci(&s).map_err(core_to_cli)?;
            for i in 0..cfg.dim {
                for j in (i + 1)..cfg.dim {
                    named.push((format!("hermitian_ricci[{i},{j}]"), rho.comp(&[i, j]).clone()));
                }
            }
        }
        "star_coefficient" => {
            if args.order < 0 || args.order > cfg.nu_order {
                return Err(CliError::Config(format!(
                    "order {} outside 0..={}",
                    args.order, cfg.nu_order
                )));
            }
            let fd = build_fedosov(&s, cfg.weyl_degree_cap).map_err(core_to_cli)?;
            let f = random_trig_field(s.grid, cfg.seed, 2, false).map_err(core_to_cli)?;
            let g = random_trig_field(s.grid, cfg.seed + 1, 2, false).map_err(core_to_cli)?;
            let star = fd.star(&f, &g, cfg.nu_order).map_err(core_to_cli)?;
            named.push((
                format!("star_coefficient[nu^{}]", args.order),
                star.coeff_or_zero(args.order, &f),
            ));
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown field '{other}'; expected hermitian_scalar, hermitian_ricci, or star_coefficient"
            )))
        }
    }
    let refs: Vec<(String, &PeriodicField)> =
        named.iter().map(|(n, f)| (n.clone(), f)).collect();
    let io_err = |e: std::io::Error| CliError::Config(format!("writing output: {e}"));
    match &args.out {
        Some(path) => {
            let mut file = fs::File::create(path)
                .map_err(|e| CliError::Config(format!("creating {}: {e}", path.display())))?;
            write_csv(&mut file, &refs).map_err(io_err)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&mut lock, &refs).map_err(io_err)?;
            lock.flush().map_err(io_err)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, CliError> {
    let cfg = args.flags.build()?;
    cfg.validate().map_err(core_to_cli)?;
    let grid = Grid::new(cfg.dim, cfg.grid_n).map_err(core_to_cli)?;
    let time =
        |name: &str, f: &mut dyn FnMut() -> Result<(), CliError>| -> Result<(), CliError> {
            let start = Instant::now();
            f()?;
            println!("{name}: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
            Ok(())
        };

    let f = random_trig_field(grid, cfg.seed, 2, false).map_err(core_to_cli)?;
    time("fields: spectral derivative x64", &mut || {
        let mut acc = f.clone();
        for _ in 0..64 {
            acc = acc.derivative(0);
        }
        std::hint::black_box(acc.max_abs());
        Ok(())
    })?;

    let mut structure: Option<CompatibleStructure> = None;
    time("geometry: structure build + curvature cache", &mut || {
        structure = Some(base_structure(&cfg)?);
        Ok(())
    })?;
    let s = structure.expect("structure benchmarked above");
    time("geometry: Hermitian Ricci form", &mut || {
        let (rho, _) = hermitian_ricci(&s).map_err(core_to_cli)?;
        std::hint::black_box(hermitian_scalar(&s, &rho).max_abs());
        Ok(())
    })?;

    let mut fed = None;
    time("fedosov: recursion to the degree cap", &mut || {
        fed = Some(build_fedosov(&s, cfg.weyl_degree_cap).map_err(core_to_cli)?);
        Ok(())
    })?;
    let fd = fed.expect("recursion benchmarked above");
    let g = random_trig_field(grid, cfg.seed + 1, 2, false).map_err(core_to_cli)?;
    time("fedosov: one star product", &mut || {
        std::hint::black_box(fd.star(&f, &g, cfg.nu_order).map_err(core_to_cli)?);
        Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
