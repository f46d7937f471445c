//! Batch front-end: build kernel tables, compute ground states, scan
//! half-periods, run the acceptance suite, export field slices.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 config error,
//! 3 numerical failure.

use chainsolve::config::{Config, ConfigError};
use chainsolve::fields::{Field, GridSpec};
use chainsolve::planar::{PlanarGrid, PlanarKernelTable};
use chainsolve::poisson::{calibrated_kernel_table, newtonian_limit_experiment, BumpSpec};
use chainsolve::solver::{
    ell_scan, extend_planar_to_slab, ground_state, planar_ground_state, SymmetryClass,
};
use chainsolve::variational::VariationalContext;
use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "chainsolve", about = "Periodic-slab Schrödinger–Poisson toolbox")]
struct Cli {
    /// Worker threads for table construction and FFT batches.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and calibrate a kernel table; dump it with metadata.
    Kernel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compute the ground state of the configured symmetry class.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Scan half-periods and locate the symmetry-breaking transition.
    Ellscan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip half-periods already present in the scan CSV.
        #[arg(long)]
        resume: bool,
    },
    /// Run the acceptance criteria (A1..A10).
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run a single criterion, e.g. --only A5.
        #[arg(long)]
        only: Option<String>,
    },
    /// Export a plane of a dumped field as CSV.
    ExportSlice {
        /// Field dump produced by `solve`.
        #[arg(long)]
        field: PathBuf,
        /// Plane selector: x1=V, x2=V or x3=V.
        #[arg(long)]
        plane: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code)
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn grid_of(cfg: &Config) -> Result<GridSpec, CliError> {
    GridSpec::new(cfg.domain.l_planar, cfg.domain.n_x, cfg.domain.ell, cfg.domain.n_z)
        .map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))
}

fn run(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Kernel { config, out } => cmd_kernel(&config, &out),
        Command::Solve { config, out } => cmd_solve(&config, &out),
        Command::Ellscan { config, out, resume } => cmd_ellscan(&config, &out, resume),
        Command::Verify { config: _, out, only } => cmd_verify(&out, only.as_deref()),
        Command::ExportSlice { field, plane, out } => cmd_export_slice(&field, &plane, &out),
    }
}

fn cmd_kernel(config: &Path, out: &Path) -> Result<u8, CliError> {
    let cfg = Config::from_path(config)?;
    let grid = grid_of(&cfg)?;
    fs::create_dir_all(out)?;
    let (table, report) = calibrated_kernel_table(&grid, cfg.kernel.quad_tol).map_err(numerical)?;
    let mut file = fs::File::create(out.join("kernel_table.bin"))?;
    table.dump(&mut file).map_err(numerical)?;
    let meta = serde_json::json!({
        "ell": table.ell,
        "dims": table.dims,
        "spacing": table.spacing,
        "calibration_constant": table.calibration,
        "crossover_radius": table.crossover_radius,
        "log_comparison_constant": table.log_comparison,
        "asymptotic_slope": table.asymptotic_slope,
        "calibration_fit_residual": report.fit_residual,
        "calibration_validation_residual": report.validation_residual,
    });
    fs::write(out.join("kernel_meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    println!(
        "kernel table: calibration={:.6e} R={:?} C_K={:?} slope={:.6e}",
        table.calibration, table.crossover_radius, table.log_comparison, table.asymptotic_slope
    );
    Ok(0)
}

fn write_trace(path: &Path, trace: &[chainsolve::solver::TracePoint]) -> Result<(), CliError> {
    let mut text = String::from("iter,phi,grad_norm,step\n");
    for t in trace {
        text.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", t.iter, t.phi, t.grad_norm, t.step));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_slices(out: &Path, field: &Field) -> Result<(), CliError> {
    let mut f = fs::File::create(out.join("slice_x3.csv"))?;
    field.csv_slice(2, 0.0, &mut f).map_err(numerical)?;
    let mut f = fs::File::create(out.join("slice_x2.csv"))?;
    field.csv_slice(1, 0.0, &mut f).map_err(numerical)?;
    Ok(())
}

fn cmd_solve(config: &Path, out: &Path) -> Result<u8, CliError> {
    let cfg = Config::from_path(config)?;
    let grid = grid_of(&cfg)?;
    fs::create_dir_all(out)?;
    match cfg.solver.class {
        SymmetryClass::Planar => {
            let pgrid = PlanarGrid::new(cfg.domain.l_planar, cfg.domain.n_x).map_err(numerical)?;
            let table = PlanarKernelTable::analytic_log(&pgrid);
            let report = match planar_ground_state(pgrid, &cfg.potential, &table, &cfg.solver) {
                Ok(r) => r,
                Err(e) => {
                    fs::write(
                        out.join("report.json"),
                        serde_json::to_string_pretty(&serde_json::json!({"error": e.to_string()}))?,
                    )?;
                    return Err(numerical(e));
                }
            };
            fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            write_trace(&out.join("trace.csv"), &report.trace)?;
            let ext = extend_planar_to_slab(&report.field, grid);
            let mut f = fs::File::create(out.join("field.bin"))?;
            ext.dump(&mut f).map_err(numerical)?;
            write_slices(out, &ext)?;
            println!(
                "planar ground state: kappa={:.8e} grad={:.3e}",
                report.kappa, report.grad_norm
            );
        }
        _ => {
            let (table, _) =
                calibrated_kernel_table(&grid, cfg.kernel.quad_tol).map_err(numerical)?;
            let ctx = VariationalContext::new(grid, &cfg.potential, &table).map_err(numerical)?;
            let report = match ground_state(&ctx, &cfg.solver) {
                Ok(r) => r,
                Err(e) => {
                    fs::write(
                        out.join("report.json"),
                        serde_json::to_string_pretty(&serde_json::json!({"error": e.to_string()}))?,
                    )?;
                    return Err(numerical(e));
                }
            };
            fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            write_trace(&out.join("trace.csv"), &report.trace)?;
            let mut f = fs::File::create(out.join("field.bin"))?;
            report.field.dump(&mut f).map_err(numerical)?;
            write_slices(out, &report.field)?;
            println!(
                "ground state: phi={:.8e} grad={:.3e} nehari={:.3e} d3={:.4}",
                report.energy.phi, report.grad_norm, report.nehari_residual, report.d3_fraction
            );
        }
    }
    Ok(0)
}

fn cmd_ellscan(config: &Path, out: &Path, resume: bool) -> Result<u8, CliError> {
    let cfg = Config::from_path(config)?;
    let ells = cfg.domain.ell_list.clone().ok_or(ConfigError::Missing {
        section: "domain".into(),
        key: "ell_list".into(),
    })?;
    if !cfg.potential.x3_independent() {
        return Err(CliError::Config(ConfigError::Invalid(
            "ellscan requires an x3-independent potential".into(),
        )));
    }
    fs::create_dir_all(out)?;
    let scan_path = out.join("scan.csv");
    let header = "ell,c_r,c_g,kappa,two_ell_kappa,d3_radial,d3_g,sigma_invariance,status";
    let mut done: Vec<String> = Vec::new();
    if resume && scan_path.exists() {
        for line in fs::read_to_string(&scan_path)?.lines().skip(1) {
            let mut parts = line.split(',');
            if let (Some(ell), Some(status)) = (parts.next(), parts.clone().last()) {
                if status == "ok" {
                    done.push(ell.to_string());
                }
            }
        }
    }
    let todo: Vec<f64> =
        ells.iter().copied().filter(|e| !done.contains(&format!("{e}"))).collect();
    let table = ell_scan(
        &todo,
        cfg.domain.l_planar,
        cfg.domain.n_x,
        cfg.domain.n_z,
        &cfg.potential,
        &cfg.solver,
        cfg.kernel.quad_tol,
    )
    .map_err(numerical)?;
    let mut text = String::new();
    if resume && scan_path.exists() {
        text = fs::read_to_string(&scan_path)?;
        if !text.ends_with('\n') {
            text.push('\n');
        }
    } else {
        text.push_str(header);
        text.push('\n');
    }
    for r in &table.rows {
        text.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.ell,
            r.c_r,
            r.c_g,
            r.kappa,
            r.two_ell_kappa,
            r.d3_radial,
            r.d3_g,
            r.sigma_invariance,
            r.status
        ));
    }
    fs::write(&scan_path, text)?;
    fs::write(out.join("scan_summary.json"), serde_json::to_string_pretty(&table)?)?;
    // companion kernel-limit experiment
    let bump = BumpSpec { amplitude: 1.0, sigma: 0.008, support_radius: 0.032 };
    let newt_ells: Vec<f64> =
        [2.0, 4.0, 8.0, 16.0].iter().map(|m| m * bump.support_radius).collect();
    let rows = newtonian_limit_experiment(&bump, &newt_ells, 24, cfg.kernel.quad_tol.max(1e-9))
        .map_err(numerical)?;
    let mut newt = String::from("ell,D_ell,D_inf,rel_err\n");
    for r in rows {
        newt.push_str(&format!(
            "{:.8e},{:.17e},{:.17e},{:.8e}\n",
            r.ell, r.d_ell, r.d_inf, r.rel_err
        ));
    }
    fs::write(out.join("newtonian_limit.csv"), newt)?;
    match table.ell_star {
        Some(ls) => println!("symmetry breaking detected: ell_star = {ls}"),
        None => println!("no symmetry breaking inside the scanned window"),
    }
    Ok(0)
}

fn cmd_verify(out: &Path, only: Option<&str>) -> Result<u8, CliError> {
    fs::create_dir_all(out)?;
    let results = chainsolve::verify::run_all(only);
    fs::write(out.join("verify.json"), serde_json::to_string_pretty(&results)?)?;
    if results.is_empty() {
        return Err(CliError::Config(ConfigError::Invalid("no criterion matched".into())));
    }
    Ok(if results.iter().all(|r| r.pass) { 0 } else { 1 })
}

fn cmd_export_slice(field: &Path, plane: &str, out: &Path) -> Result<u8, CliError> {
    let file = fs::File::open(field)?;
    let f = Field::load(file).map_err(numerical)?;
    let (axis_name, value) = plane.split_once('=').ok_or_else(|| {
        CliError::Config(ConfigError::Invalid(format!("bad plane selector '{plane}'")))
    })?;
    let axis = match axis_name.trim() {
        "x1" => 0,
        "x2" => 1,
        "x3" => 2,
        other => {
            return Err(CliError::Config(ConfigError::Invalid(format!(
                "unknown axis '{other}' (use x1, x2 or x3)"
            ))))
        }
    };
    let coord: f64 = value.trim().parse().map_err(|_| {
        CliError::Config(ConfigError::Invalid(format!("bad plane coordinate '{value}'")))
    })?;
    let mut w = fs::File::create(out)?;
    f.csv_slice(axis, coord, &mut w).map_err(numerical)?;
    Ok(0)
}
