//! Command-line driver: cell meshes, homogenization, sensitivity audit and the 1D pumping model.

mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pzflow::macro_model::{run_simulation, MacroCoefficients, Nonlinearity};
use pzflow::sensitivity::{run_audit, state_gradients};
use pzflow::{homogenize, CanonicalGeometry, CellMesh, Homogenized};
use serde_json::json;

use config::{AuditFile, CellSource, SimulateFile};
use error::CliError;
use output::OutputDir;

const AUDIT_TOLERANCE: f64 = 1e-3;
const MIN_ORDER: f64 = 1.9;

#[derive(Parser)]
#[command(name = "pzflow", version, about = "Piezo-poroelastic cell homogenization and peristaltic pumping runs")]
struct Cli {
    /// Worker threads for independent cell solves.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Effective coefficients and correctors of a cell.
    Homogenize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shape sensitivities against central differences.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also run the Taylor remainder sweep and write its order table.
        #[arg(long)]
        sweep: bool,
    },
    /// Time stepping of the 1D macroscopic model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Cell mesh generation and validation.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
}

#[derive(Subcommand)]
enum MeshAction {
    /// Canonical cell from a geometry config (`{"geometry": {...}, "resolution": n}`).
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks a mesh file and prints its region measures.
    Validate {
        #[arg(long)]
        mesh: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Linear,
    Semilinear,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Homogenize { config, out } => cmd_homogenize(&config, &out),
        Command::Audit { config, out, sweep } => cmd_audit(&config, &out, sweep),
        Command::Simulate { config, out, mode } => cmd_simulate(&config, &out, mode),
        Command::Mesh { action: MeshAction::Generate { config, out } } => cmd_mesh_generate(&config, &out),
        Command::Mesh { action: MeshAction::Validate { mesh } } => cmd_mesh_validate(&mesh),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}

fn inputs_of(config: &Path, cell: &CellSource, base: &Path) -> Vec<PathBuf> {
    std::iter::once(config.to_path_buf()).chain(cell.inputs(base)).collect()
}

fn correctors_csv(mesh: &CellMesh, hom: &Homogenized) -> String {
    let c = &hom.correctors;
    let mut fields: Vec<(String, &pzflow::cell_problems::PiezoCorrector<f64>)> = vec![
        ("e11".into(), &c.strain[0]),
        ("e22".into(), &c.strain[1]),
        ("e12".into(), &c.strain[2]),
        ("p".into(), &c.pressure),
        ("rho".into(), &c.charge),
    ];
    for (i, el) in c.electrodes.iter().enumerate() {
        fields.push((format!("phi{}", i + 1), el));
    }
    let mut s = String::from("# schema: pzflow.correctors/1\nnode,y1,y2");
    for (name, _) in &fields {
        s.push_str(&format!(",{name}_u1,{name}_u2,{name}_eta"));
    }
    s.push('\n');
    for (i, y) in mesh.nodes.iter().enumerate() {
        s.push_str(&format!("{i},{:.17e},{:.17e}", y[0], y[1]));
        for (_, f) in &fields {
            s.push_str(&format!(",{:.17e},{:.17e},{:.17e}", f.u[i][0], f.u[i][1], f.eta[i]));
        }
        s.push('\n');
    }
    s
}

fn cmd_homogenize(config: &Path, out: &Path) -> Result<(), CliError> {
    let (cell, base): (CellSource, _) = config::load(config)?;
    let mat = cell.load_materials(&base)?;
    let mesh = cell.load_mesh(&base)?;
    let hom = homogenize(&mesh, &mat)?;
    let mut dir = OutputDir::create(out)?;
    dir.write("coefficients.json", &hom.coeffs.to_json())?;
    let checks = json!({
        "routes": hom.checks,
        "symmetry_defect": hom.coeffs.symmetry_defect(),
        "k_min_eigenvalue": hom.coeffs.k_min_eigenvalue(),
    });
    dir.write("checks.json", &serde_json::to_string_pretty(&checks).expect("checks serialization"))?;
    dir.write("correctors.csv", &correctors_csv(&mesh, &hom))?;
    let stats = json!({ "nodes": mesh.n_nodes(), "elements": mesh.n_elements() });
    dir.finish("homogenize", &inputs_of(config, &cell, &base), stats)
}

fn cmd_audit(config: &Path, out: &Path, sweep: bool) -> Result<(), CliError> {
    let (file, base): (AuditFile, _) = config::load(config)?;
    let mat = file.cell.load_materials(&base)?;
    let mesh = file.cell.load_mesh(&base)?;
    let mut cfg = file.audit.clone();
    if !sweep {
        cfg.tau_sweep.clear();
    }
    let report = run_audit(&mesh, &mat, &cfg)?;
    let mut dir = OutputDir::create(out)?;
    let mut csv = String::from("coefficient,formula_value,fd_value,rel_error\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", r.coefficient, r.formula_value, r.fd_value, r.rel_error));
    }
    dir.write("audit.csv", &csv)?;
    if sweep {
        let mut t = String::from("field,tau,remainder,order\n");
        for s in &report.sweeps {
            for (tau, rem) in s.taus.iter().zip(&s.remainders) {
                t.push_str(&format!("{},{:.17e},{:.17e},{:.6}\n", s.field, tau, rem, s.order));
            }
        }
        dir.write("sweep.csv", &t)?;
    }
    let failing = report.rows.iter().filter(|r| !(r.rel_error <= AUDIT_TOLERANCE)).count();
    let order_ok = !sweep || report.min_order >= MIN_ORDER;
    let summary = json!({
        "rows": report.rows.len(),
        "failing_rows": failing,
        "max_rel_error": report.max_rel_error,
        "min_order": if sweep { Some(report.min_order) } else { None },
        "cell_solves": report.cell_solves,
    });
    dir.write("audit_summary.json", &serde_json::to_string_pretty(&summary).expect("summary serialization"))?;
    dir.finish("audit", &inputs_of(config, &file.cell, &base), summary)?;
    if failing > 0 {
        return Err(CliError::numerical(
            "AuditToleranceExceeded",
            format!("{failing} rows above {AUDIT_TOLERANCE:e}, max {:e}", report.max_rel_error),
        ));
    }
    if !order_ok {
        return Err(CliError::numerical("ConvergenceOrder", format!("order {:.3} below {MIN_ORDER}", report.min_order)));
    }
    Ok(())
}

fn cmd_simulate(config: &Path, out: &Path, mode: Option<Mode>) -> Result<(), CliError> {
    let (file, base): (SimulateFile, _) = config::load(config)?;
    let mut run = file.run.clone();
    if let Some(m) = mode {
        run.mode = match m {
            Mode::Linear => Nonlinearity::Linear,
            Mode::Semilinear => Nonlinearity::Semilinear,
        };
    }
    run.validate()?;
    let coeffs = match &file.coefficients {
        Some(c) => c.clone(),
        None => {
            let mat = file.cell.load_materials(&base)?;
            let mesh = file.cell.load_mesh(&base)?;
            let hom = homogenize(&mesh, &mat)?;
            let grads = state_gradients(&mesh, &mat, &hom)?;
            MacroCoefficients::from_cell(&hom.coeffs, &grads, file.electrode)?
        }
    };
    let series = run_simulation(&run, &coeffs)?;
    let summary = series.summary(run.mode);
    let mut dir = OutputDir::create(out)?;
    dir.write("coefficients_1d.json", &serde_json::to_string_pretty(&coeffs).expect("coefficient serialization"))?;
    dir.write("fluxes.csv", &series.fluxes_csv())?;
    for snap in &series.snapshots {
        dir.write(&format!("fields_{}.csv", snap.step), &snap.csv())?;
    }
    let text = serde_json::to_string_pretty(&summary).expect("summary serialization");
    dir.write("summary.json", &text)?;
    let inputs = if file.coefficients.is_some() { vec![config.to_path_buf()] } else { inputs_of(config, &file.cell, &base) };
    dir.finish("simulate", &inputs, serde_json::to_value(&summary).expect("summary serialization"))
}

fn cmd_mesh_generate(config: &Path, out: &Path) -> Result<(), CliError> {
    let (cell, base): (CellSource, _) = config::load(config)?;
    let mesh = match cell.mesh {
        Some(_) => cell.load_mesh(&base)?,
        None => {
            let g = cell.geometry.clone().unwrap_or_else(CanonicalGeometry::reference);
            pzflow::generate_canonical_cell(&g, cell.resolution)?
        }
    };
    let mut dir = OutputDir::create(out)?;
    dir.write("mesh.json", &mesh.to_json())?;
    let stats = json!({ "nodes": mesh.n_nodes(), "elements": mesh.n_elements(), "fluid_fraction": mesh.fluid_fraction() });
    dir.finish("mesh generate", &[config.to_path_buf()], stats)
}

fn cmd_mesh_validate(path: &Path) -> Result<(), CliError> {
    let text = config::read_input(path, "MissingMesh")?;
    let mesh = CellMesh::from_json(&text)?;
    let regions: serde_json::Map<String, serde_json::Value> =
        mesh.region_measures().into_iter().map(|(r, m)| (r.to_string(), json!(m))).collect();
    let report = json!({
        "valid": true,
        "nodes": mesh.n_nodes(),
        "elements": mesh.n_elements(),
        "conductors": mesh.n_conductors(),
        "region_measures": regions,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialization"));
    Ok(())
}
