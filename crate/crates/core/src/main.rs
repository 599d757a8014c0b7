use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};

use steklov::density::{self, BoundaryDensity};
use steklov::lab::{self, ConvergenceFamily, ExperimentRecord};
use steklov::mesh::{self, SurfaceMesh};
use steklov::meshio::{self, IoError};
use steklov::optimize::{self, OptimizerConfig};
use steklov::{plot, spectral};

#[derive(Parser)]
#[command(name = "steklov", about = "Steklov eigenvalues of triangulated surfaces with boundary", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or transform meshes and write them to mesh files.
    Mesh {
        #[command(subcommand)]
        op: MeshOp,
    },
    /// Solve for the spectrum of a mesh with an optional density file.
    Spectrum {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        density: Option<PathBuf>,
        /// Number of eigenvalues.
        #[arg(long, default_value_t = 7)]
        count: usize,
        #[arg(long, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize the normalized first eigenvalue over boundary densities.
    Optimize {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        density: Option<PathBuf>,
        /// Seed for a random initial density (ignored when --density is set).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        #[arg(long, default_value_t = 0.02)]
        gap_tol: f64,
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
        /// Iteration trace CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a study; the exit status reflects its verdict.
    Study {
        #[command(subcommand)]
        which: StudyOp,
    },
    /// Render a numeric CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
    },
}

#[derive(Subcommand)]
enum MeshOp {
    /// Triangulated flat disk.
    Disk {
        #[arg(long, default_value_t = 2)]
        rings: usize,
        #[arg(long, default_value_t = 16)]
        sectors: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Refinement levels with boundary snapping to the circle.
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flat cylinder of two boundary circles.
    Cylinder {
        #[arg(long, default_value_t = 1.0)]
        half_height: f64,
        #[arg(long, default_value_t = 8)]
        axial: usize,
        #[arg(long, default_value_t = 16)]
        circ: usize,
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Glue matched boundary arcs of the first two loops.
    Glue {
        #[arg(long)]
        mesh: PathBuf,
        /// Number of edges in each glued arc.
        #[arg(long, default_value_t = 2)]
        arc_edges: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Open a new boundary loop at an interior vertex.
    Puncture {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        vertex: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check structural invariants of a mesh file.
    Validate {
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Uniform 1-to-4 refinement.
    Refine {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = 1)]
        refine: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum StudyOp {
    /// Eigenvalue convergence along a density family.
    Convergence {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long, default_value = "heat")]
        family: FamilyArg,
        /// Schedule of family parameters, comma-separated, decreasing.
        #[arg(long, value_parser = parse_schedule)]
        eps_schedule: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary-gluing bracketing study on a two-boundary surface.
    Gluing {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long, value_parser = parse_schedule)]
        eps_schedule: Option<Vec<f64>>,
        /// Coefficient of the (eps + h) closeness threshold.
        #[arg(long, default_value_t = 10.0)]
        delta_coeff: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Disk refinement study against the closed-form value 2 pi.
    Weinstock {
        #[arg(long, default_value_t = 4)]
        refine: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Critical flat cylinder against its separated-modes target.
    Catenoid {
        #[arg(long, default_value_t = 3)]
        refine: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, clap::ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FamilyArg {
    Heat,
    Arcs,
}

fn parse_schedule(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad schedule entry {p:?}: {e}")))
        .collect()
}

enum CliError {
    /// Bad input: unreadable or malformed files, impossible parameters.
    Input(String),
    /// The computation ran but an asserted property failed.
    Assertion(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<steklov::mesh::MeshError> for CliError {
    fn from(e: steklov::mesh::MeshError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<steklov::density::DensityError> for CliError {
    fn from(e: steklov::density::DensityError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<steklov::spectral::SpectralError> for CliError {
    fn from(e: steklov::spectral::SpectralError) -> Self {
        CliError::Assertion(e.to_string())
    }
}

impl From<steklov::optimize::OptimizeError> for CliError {
    fn from(e: steklov::optimize::OptimizeError) -> Self {
        CliError::Assertion(e.to_string())
    }
}

impl From<steklov::lab::LabError> for CliError {
    fn from(e: steklov::lab::LabError) -> Self {
        match e {
            lab::LabError::Parse { .. } | lab::LabError::BadSchedule(_) => CliError::Input(e.to_string()),
            lab::LabError::Io(_) | lab::LabError::Mesh(_) | lab::LabError::Density(_) => {
                CliError::Input(e.to_string())
            }
            lab::LabError::Spectral(_) => CliError::Assertion(e.to_string()),
        }
    }
}

impl From<plot::PlotError> for CliError {
    fn from(e: plot::PlotError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(CliError::Assertion(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Mesh { op } => run_mesh(op),
        Command::Spectrum {
            mesh,
            density,
            count,
            format,
            out,
        } => run_spectrum(&mesh, density.as_deref(), count, format, out.as_deref()),
        Command::Optimize {
            mesh,
            density,
            seed,
            max_iters,
            step,
            gap_tol,
            floor,
            out,
        } => run_optimize(mesh.as_deref(), density.as_deref(), seed, max_iters, step, gap_tol, floor, out.as_deref()),
        Command::Study { which } => run_study(which),
        Command::Plot { input, out, title } => {
            let file = std::fs::File::open(&input)?;
            let series = plot::series_from_csv(std::io::BufReader::new(file))?;
            let title = if title.is_empty() {
                input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            } else {
                title
            };
            std::fs::write(&out, plot::line_chart(&title, &series)?)?;
            Ok(true)
        }
    }
}

fn run_mesh(op: MeshOp) -> Result<bool, CliError> {
    match op {
        MeshOp::Disk {
            rings,
            sectors,
            radius,
            refine,
            out,
        } => {
            let mut m = mesh::build_disk(rings, sectors, radius)?;
            let snap = mesh::snap_to_circle(radius);
            for _ in 0..refine {
                m = mesh::refine(&m, Some(&snap))?;
            }
            meshio::write_mesh_file(&m, &out)?;
            Ok(true)
        }
        MeshOp::Cylinder {
            half_height,
            axial,
            circ,
            refine,
            out,
        } => {
            let mut m = mesh::build_cylinder(half_height, axial, circ)?;
            let snap = mesh::snap_to_cylinder();
            for _ in 0..refine {
                m = mesh::refine(&m, Some(&snap))?;
            }
            meshio::write_mesh_file(&m, &out)?;
            Ok(true)
        }
        MeshOp::Glue { mesh: path, arc_edges, out } => {
            let m = meshio::read_mesh_file(&path)?;
            let spec = lab::arc_pair_spec(&m, (0, 0), (1, 0), arc_edges)?;
            let glued = mesh::glue_segments(&m, &spec)?;
            // The quotient metric is intrinsic; the written coordinates only
            // approximate it.
            meshio::write_mesh_file(&glued.mesh, &out)?;
            Ok(true)
        }
        MeshOp::Puncture { mesh: path, vertex, out } => {
            let m = meshio::read_mesh_file(&path)?;
            let p = mesh::puncture(&m, vertex)?;
            meshio::write_mesh_file(&p, &out)?;
            Ok(true)
        }
        MeshOp::Validate { mesh: path } => {
            let m = meshio::read_mesh_file(&path)?;
            match m.validate() {
                Ok(()) => {
                    let t = m.topology().map_err(|e| CliError::Assertion(e.to_string()))?;
                    println!(
                        "ok: {} vertices, {} triangles, genus {}, {} boundary loops",
                        m.vertex_count(),
                        m.triangle_count(),
                        t.genus,
                        t.boundary_count
                    );
                    Ok(true)
                }
                Err(e) => {
                    eprintln!("invalid: {e}");
                    Ok(false)
                }
            }
        }
        MeshOp::Refine { mesh: path, refine, out } => {
            let mut m = meshio::read_mesh_file(&path)?;
            for _ in 0..refine {
                m = mesh::refine(&m, None)?;
            }
            meshio::write_mesh_file(&m, &out)?;
            Ok(true)
        }
    }
}

fn load_density(m: &SurfaceMesh, path: Option<&std::path::Path>) -> Result<BoundaryDensity, CliError> {
    match path {
        Some(p) => Ok(meshio::read_density_file(m, p)?),
        None => Ok(density::uniform_density(m)),
    }
}

fn write_or_print(out: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_spectrum(
    mesh_path: &std::path::Path,
    density_path: Option<&std::path::Path>,
    count: usize,
    format: Format,
    out: Option<&std::path::Path>,
) -> Result<bool, CliError> {
    let m = meshio::read_mesh_file(mesh_path)?;
    let rho = load_density(&m, density_path)?;
    let spec = spectral::steklov_spectrum(&m, &rho, count)?;
    let sigma_bar = spectral::normalized_eigenvalues(&spec, &m, &rho);
    let text = match format {
        Format::Json => {
            let v = serde_json::json!({
                "sigma": spec.eigenvalues,
                "sigma_bar": sigma_bar,
                "residuals": spec.residuals,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
        Format::Csv => {
            let mut s = String::from("index,sigma,sigma_bar\n");
            for (i, (sig, sb)) in spec.eigenvalues.iter().zip(sigma_bar.iter()).enumerate() {
                s.push_str(&format!("{i},{sig:.17e},{sb:.17e}\n"));
            }
            s
        }
    };
    write_or_print(out, &text)?;
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn run_optimize(
    mesh_path: Option<&std::path::Path>,
    density_path: Option<&std::path::Path>,
    seed: Option<u64>,
    max_iters: usize,
    step: f64,
    gap_tol: f64,
    floor: f64,
    out: Option<&std::path::Path>,
) -> Result<bool, CliError> {
    let m = match mesh_path {
        Some(p) => meshio::read_mesh_file(p)?,
        None => mesh::build_disk(3, 24, 1.0)?,
    };
    let rho0 = match (density_path, seed) {
        (Some(p), _) => meshio::read_density_file(&m, p)?,
        (None, Some(s)) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let vals = (0..m.boundary_edge_count()).map(|_| rng.gen_range(0.25..4.0)).collect();
            BoundaryDensity::new(&m, vals)?
        }
        (None, None) => density::uniform_density(&m),
    };
    let cfg = OptimizerConfig {
        max_iters,
        step,
        tol_grad: 1e-6,
        gap_tol,
        floor,
    };
    let trace = optimize::maximize_density(&m, &rho0, &cfg)?;
    let mut csv = String::from("iter,sigma_bar,grad_norm,step,multiplicity\n");
    for r in &trace.records {
        csv.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{}\n",
            r.iter, r.sigma_bar, r.grad_norm, r.step, r.multiplicity
        ));
    }
    write_or_print(out, &csv)?;
    eprintln!(
        "final sigma_bar {:.6}, multiplicity {}, termination {:?}",
        trace.final_sigma_bar(),
        trace.final_multiplicity(),
        trace.termination
    );
    Ok(true)
}

fn emit_records(records: &[ExperimentRecord], out: Option<&std::path::Path>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    lab::write_records_csv(&mut buf, records).map_err(|e| CliError::Input(e.to_string()))?;
    write_or_print(out, std::str::from_utf8(&buf).unwrap())
}

fn run_study(which: StudyOp) -> Result<bool, CliError> {
    let records = match which {
        StudyOp::Convergence {
            mesh: mesh_path,
            density: density_path,
            family,
            eps_schedule,
            tol,
            out,
        } => {
            let m = match mesh_path {
                Some(p) => meshio::read_mesh_file(&p)?,
                None => mesh::build_disk(2, 24, 1.0)?,
            };
            let rho = match density_path {
                Some(p) => meshio::read_density_file(&m, &p)?,
                None => {
                    // Default probe: a step density, rough enough that the
                    // families have work to do.
                    let ne = m.boundary_edge_count();
                    BoundaryDensity::new(&m, (0..ne).map(|e| if e < ne / 4 { 4.0 } else { 0.25 }).collect())?
                }
            };
            let fam = match family {
                FamilyArg::Heat => ConvergenceFamily::Heat,
                FamilyArg::Arcs => ConvergenceFamily::ZeroOnArcs {
                    centers: (0..m.boundary_loops().len()).map(|l| (l, 0)).collect(),
                },
            };
            let schedule = eps_schedule.unwrap_or_else(|| match fam {
                ConvergenceFamily::Heat => vec![0.1, 0.05, 0.02, 0.005, 0.002],
                ConvergenceFamily::ZeroOnArcs { .. } => {
                    let h = m.loop_length(0) / m.boundary_loops()[0].len() as f64;
                    vec![4.0 * h, 2.0 * h, h]
                }
            });
            let records = lab::convergence_study(&m, &rho, &schedule, &fam, tol)?;
            emit_records(&records, out.as_deref())?;
            records
        }
        StudyOp::Gluing {
            mesh: mesh_path,
            density: density_path,
            eps_schedule,
            delta_coeff,
            out,
        } => {
            let m = match mesh_path {
                Some(p) => meshio::read_mesh_file(&p)?,
                None => mesh::build_cylinder(lab::critical_half_height(), 8, 32)?,
            };
            let rho = load_density(&m, density_path.as_deref())?;
            let schedule = eps_schedule.unwrap_or_else(|| {
                let h = m.loop_length(0) / m.boundary_loops()[0].len() as f64;
                vec![8.0 * h, 4.0 * h, 2.0 * h, h]
            });
            let records = lab::gluing_study(&m, &rho, &schedule, delta_coeff)?;
            emit_records(&records, out.as_deref())?;
            records
        }
        StudyOp::Weinstock { refine, out } => {
            let records = lab::weinstock_check(refine)?;
            emit_records(&records, out.as_deref())?;
            records
        }
        StudyOp::Catenoid { refine, out } => {
            let records = lab::catenoid_check(refine)?;
            emit_records(&records, out.as_deref())?;
            records
        }
    };
    let pass = lab::study_pass(&records);
    eprintln!("study: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}
