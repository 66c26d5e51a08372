//! Command-line driver: mesh generation, single runs, convergence studies
//! and lemma-rate checks, with CSV/JSON outputs.

use clap::{Args, Parser, Subcommand};
use mfd_wave::voronoi::generate_voronoi;
use mfd_wave::Rect;
use mfd_wave_cli::study::{
    run_experiment, write_lemma_json, write_report_csv, write_report_json, ExperimentConfig,
    MeshSource, StudyAxis, TestCase,
};
use mfd_wave_cli::{csvio, meshio, problems, study, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mfd-wave",
    about = "Mimetic finite difference solver for the 2D nonlinear wave equation \
             with symplectic implicit-midpoint time integration",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Voronoi mesh of a rectangle and write it as mesh JSON.
    GenerateMesh(GenerateMeshArgs),
    /// Integrate one configuration and write series.csv / report.json.
    Run(RunArgs),
    /// Run a refinement study and write report.csv / report.json.
    Study(StudyArgs),
    /// Projection, nonlinearity and defect rate checks on a mesh sequence.
    LemmaChecks(LemmaArgs),
}

#[derive(Args)]
struct GenerateMeshArgs {
    /// Output mesh JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Number of Voronoi seeds.
    #[arg(long, conflicts_with = "target_h")]
    n_seeds: Option<usize>,
    /// Target mesh size on the unit square (seed count chosen to match).
    #[arg(long)]
    target_h: Option<f64>,
    /// Lloyd relaxation iterations.
    #[arg(long, default_value_t = 100)]
    lloyd: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Domain rectangle as x0,y0,x1,y1 (only with --n-seeds).
    #[arg(long, value_delimiter = ',', num_args = 4)]
    domain: Option<Vec<f64>>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON (flags below override its fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in test case (1 or 2).
    #[arg(long)]
    test: Option<u8>,
    /// Mesh JSON file to run on.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Generate the mesh with this target size instead.
    #[arg(long)]
    target_h: Option<f64>,
    /// Generate the mesh with this many seeds instead.
    #[arg(long)]
    n_seeds: Option<usize>,
    /// Lloyd iterations for generated meshes.
    #[arg(long)]
    lloyd: Option<usize>,
    /// RNG seed for generated meshes.
    #[arg(long)]
    seed: Option<u64>,
    /// Time step.
    #[arg(long)]
    tau: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// Diagnostics cadence in steps.
    #[arg(long)]
    cadence: Option<usize>,
    /// Output directory (series.csv, report.json, mesh.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump M_F and DIV as Matrix Market files.
    #[arg(long)]
    dump_operators: bool,
    /// Also write a final-state checkpoint JSON.
    #[arg(long)]
    checkpoint: bool,
    /// Also dump the final u and v fields as per-cell CSV.
    #[arg(long)]
    dump_state: bool,
    /// Fail (exit nonzero) unless the run finished with finite metrics.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct StudyArgs {
    /// Built-in test case (1 or 2).
    #[arg(long, default_value_t = 1)]
    test: u8,
    /// Mesh refinement targets, e.g. 0.2,0.1,0.05.
    #[arg(long, value_delimiter = ',')]
    h_targets: Option<Vec<f64>>,
    /// Lock tau to the measured mesh size of each level.
    #[arg(long, requires = "h_targets")]
    coupled: bool,
    /// Time-step sweep on one fixed mesh, e.g. 0.04,0.02,0.01.
    #[arg(long, value_delimiter = ',', conflicts_with = "h_targets")]
    taus: Option<Vec<f64>>,
    /// Fixed mesh target size for a tau sweep.
    #[arg(long)]
    target_h: Option<f64>,
    /// Time step for mesh studies.
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    t_final: f64,
    /// Lloyd iterations for generated meshes.
    #[arg(long, default_value_t = 100)]
    lloyd: usize,
    /// RNG seed for generated meshes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (report.csv, report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assert the expected convergence orders (exit nonzero on failure).
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct LemmaArgs {
    /// Mesh sizes for the second-order rate checks.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05])]
    h_targets: Vec<f64>,
    /// Mesh sizes for the non-decaying defect study.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    defect_h_targets: Vec<f64>,
    /// Lloyd iterations for generated meshes.
    #[arg(long, default_value_t = 100)]
    lloyd: usize,
    /// RNG seed for generated meshes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (lemma_report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assert second-order rates and the non-decaying defect.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<bool, HarnessError> {
    match command {
        Command::GenerateMesh(args) => generate_mesh(args),
        Command::Run(args) => run_command(args),
        Command::Study(args) => study_command(args),
        Command::LemmaChecks(args) => lemma_command(args),
    }
}

fn parse_test(id: u8) -> Result<TestCase, HarnessError> {
    match id {
        1 => Ok(TestCase::Test1),
        2 => Ok(TestCase::Test2),
        other => Err(HarnessError::Invalid(format!(
            "unknown test case {other}; choose 1 or 2"
        ))),
    }
}

fn generate_mesh(args: GenerateMeshArgs) -> Result<bool, HarnessError> {
    let mesh = match (args.n_seeds, args.target_h) {
        (Some(n), None) => {
            let domain = match &args.domain {
                Some(d) => Rect {
                    x0: d[0],
                    y0: d[1],
                    x1: d[2],
                    y1: d[3],
                },
                None => Rect::UNIT,
            };
            generate_voronoi(n, args.lloyd, args.seed, domain)?
        }
        (None, Some(h)) => {
            if args.domain.is_some() {
                return Err(HarnessError::Invalid(
                    "--target-h sizing applies to the unit square; use --n-seeds with --domain"
                        .into(),
                ));
            }
            problems::generate_mesh_for_target_h(h, args.lloyd, args.seed)?
        }
        _ => {
            return Err(HarnessError::Invalid(
                "give exactly one of --n-seeds or --target-h".into(),
            ))
        }
    };
    let report = mesh.validate()?;
    meshio::save_mesh(&mesh, &args.out)?;
    println!(
        "wrote {} ({} cells, {} faces, h = {:.6}, min inradius ratio {:.4})",
        args.out.display(),
        mesh.n_cells(),
        mesh.n_faces(),
        mesh.h(),
        report.min_inradius_ratio
    );
    Ok(true)
}

fn run_command(args: RunArgs) -> Result<bool, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            test: TestCase::Test1,
            mesh: MeshSource::Generate {
                n_seeds: None,
                target_h: Some(0.1),
                lloyd_iters: 100,
                rng_seed: 0,
            },
            tau: 1e-3,
            t_final: 1.0,
            newton_rel_tol: 1e-12,
            newton_abs_floor: 1e-14,
            newton_linear_tol: 1e-13,
            solver_rel_tol: 1e-12,
            cadence: 1,
        },
    };
    if let Some(id) = args.test {
        cfg.test = parse_test(id)?;
    }
    if let Some(path) = &args.mesh {
        cfg.mesh = MeshSource::File(path.clone());
    } else if args.target_h.is_some() || args.n_seeds.is_some() {
        cfg.mesh = MeshSource::Generate {
            n_seeds: args.n_seeds,
            target_h: args.target_h,
            lloyd_iters: args.lloyd.unwrap_or(100),
            rng_seed: args.seed.unwrap_or(0),
        };
    } else if let MeshSource::Generate {
        lloyd_iters,
        rng_seed,
        ..
    } = &mut cfg.mesh
    {
        if let Some(l) = args.lloyd {
            *lloyd_iters = l;
        }
        if let Some(s) = args.seed {
            *rng_seed = s;
        }
    }
    if let Some(tau) = args.tau {
        cfg.tau = tau;
    }
    if let Some(t) = args.t_final {
        cfg.t_final = t;
    }
    if let Some(c) = args.cadence {
        cfg.cadence = c;
    }

    // stream the diagnostics series while the run progresses
    let mut series = match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(mfd_wave_cli::io_err(dir))?;
            Some(csvio::SeriesWriter::create(dir.join("series.csv"))?)
        }
        None => None,
    };
    let mut stream_err = None;
    let outcome = run_experiment(&cfg, |r| {
        if let Some(w) = series.as_mut() {
            if let Err(e) = w.append(r) {
                stream_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = stream_err {
        return Err(e);
    }
    if let Some(w) = series {
        w.finish()?;
    }
    let row = outcome.row;
    println!(
        "finished {} steps: h = {:.6}, tau = {:e}",
        outcome.run.state.step, row.h, row.tau
    );
    if let Some(e) = row.solution_error {
        println!("  E       (solution error)    = {e:e}");
    }
    println!(
        "  sigma   (Hamiltonian total) = {:e}",
        row.hamiltonian_total_error
    );
    println!(
        "  delta   (Hamiltonian drift) = {:e}",
        row.hamiltonian_drift
    );
    if let Some(eps) = row.energy_law_error {
        println!("  epsilon (energy-law max)    = {eps:e}");
    }

    if let Some(dir) = &args.out {
        let body = serde_json::to_string_pretty(&row).expect("metrics serialize");
        std::fs::write(dir.join("report.json"), body)
            .map_err(mfd_wave_cli::io_err(dir.join("report.json")))?;
        meshio::save_mesh(&outcome.mesh, dir.join("mesh.json"))?;
        if args.dump_operators {
            csvio::write_matrix_market(dir.join("m_f.mtx"), outcome.ops.flux_mass(), true)?;
            csvio::write_matrix_market(dir.join("div.mtx"), outcome.ops.div_matrix(), false)?;
        }
        if args.checkpoint {
            csvio::write_checkpoint(dir.join("checkpoint.json"), &outcome.run.state)?;
        }
        if args.dump_state {
            csvio::write_field_csv(dir.join("u.csv"), "cell", outcome.run.state.u.values())?;
            csvio::write_field_csv(dir.join("v.csv"), "cell", outcome.run.state.v.values())?;
        }
        println!("outputs in {}", dir.display());
    }

    if args.check {
        let finite = row.hamiltonian_total_error.is_finite()
            && row.hamiltonian_drift.is_finite()
            && row.solution_error.map_or(true, f64::is_finite)
            && row.energy_law_error.map_or(true, f64::is_finite);
        if !finite {
            eprintln!("check failed: non-finite metrics");
            return Ok(false);
        }
    }
    Ok(true)
}

fn in_window(slope: Option<f64>, lo: f64, hi: f64, what: &str) -> bool {
    match slope {
        Some(s) if s >= lo && s <= hi => {
            println!("check ok: {what} slope {s:.3} in [{lo}, {hi}]");
            true
        }
        Some(s) => {
            eprintln!("check failed: {what} slope {s:.3} outside [{lo}, {hi}]");
            false
        }
        None => {
            eprintln!("check failed: {what} slope unavailable");
            false
        }
    }
}

fn study_command(args: StudyArgs) -> Result<bool, HarnessError> {
    let test = parse_test(args.test)?;
    let axis = match (&args.h_targets, &args.taus) {
        (Some(hs), None) => {
            if args.coupled {
                StudyAxis::CoupledTauH {
                    h_targets: hs.clone(),
                }
            } else {
                StudyAxis::MeshSize {
                    h_targets: hs.clone(),
                }
            }
        }
        (None, Some(taus)) => StudyAxis::TimeStep { taus: taus.clone() },
        _ => {
            return Err(HarnessError::Invalid(
                "give exactly one of --h-targets or --taus".into(),
            ))
        }
    };
    let base = ExperimentConfig {
        test,
        mesh: MeshSource::Generate {
            n_seeds: None,
            target_h: Some(args.target_h.unwrap_or(0.1)),
            lloyd_iters: args.lloyd,
            rng_seed: args.seed,
        },
        tau: args.tau,
        t_final: args.t_final,
        newton_rel_tol: 1e-12,
        newton_abs_floor: 1e-14,
        newton_linear_tol: 1e-13,
        solver_rel_tol: 1e-12,
        cadence: 1,
    };
    let report = study::run_convergence_study(&base, &axis)?;

    println!("h,tau,E,sigma,delta,epsilon");
    for row in &report.rows {
        match &row.metrics {
            Some(m) => println!(
                "{:.6},{:e},{},{:e},{:e},{}",
                row.h,
                row.tau,
                m.solution_error
                    .map(|v| format!("{v:e}"))
                    .unwrap_or_default(),
                m.hamiltonian_total_error,
                m.hamiltonian_drift,
                m.energy_law_error
                    .map(|v| format!("{v:e}"))
                    .unwrap_or_default(),
            ),
            None => println!(
                "{:.6},{:e},FAILED: {}",
                row.h,
                row.tau,
                row.error.as_deref().unwrap_or("unknown")
            ),
        }
    }
    if let Some(slopes) = &report.slopes {
        println!("slopes vs {}:", slopes.axis);
        if let Some(s) = slopes.solution_error {
            println!("  E       {s:.3}");
        }
        println!(
            "  sigma   {}",
            slopes
                .hamiltonian_total_error
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "n/a".into())
        );
        println!(
            "  delta   {}",
            slopes
                .hamiltonian_drift
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "n/a".into())
        );
        println!(
            "  epsilon {}",
            slopes
                .energy_law_error
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(mfd_wave_cli::io_err(dir))?;
        write_report_csv(dir.join("report.csv"), &report)?;
        write_report_json(dir.join("report.json"), &report)?;
        println!("outputs in {}", dir.display());
    }

    let mut ok = report.rows.iter().all(|r| r.error.is_none());
    if !ok {
        eprintln!("one or more runs failed");
    }
    if args.check {
        let slopes = report.slopes.as_ref();
        match &axis {
            StudyAxis::MeshSize { .. } => {
                if test == TestCase::Test1 {
                    ok &= in_window(
                        slopes.and_then(|s| s.solution_error),
                        1.7,
                        2.3,
                        "solution error",
                    );
                }
                ok &= in_window(
                    slopes.and_then(|s| s.hamiltonian_total_error),
                    1.7,
                    2.3,
                    "Hamiltonian total error",
                );
            }
            StudyAxis::TimeStep { .. } => {
                ok &= in_window(
                    slopes.and_then(|s| s.hamiltonian_drift),
                    1.7,
                    2.3,
                    "Hamiltonian drift",
                );
            }
            StudyAxis::CoupledTauH { .. } => {
                ok &= in_window(
                    slopes.and_then(|s| s.energy_law_error),
                    3.4,
                    4.6,
                    "energy-law error",
                );
            }
        }
    }
    Ok(ok)
}

fn lemma_command(args: LemmaArgs) -> Result<bool, HarnessError> {
    let report = study::lemma_rate_checks(
        &args.h_targets,
        &args.defect_h_targets,
        args.lloyd,
        args.seed,
    )?;
    println!("projection error by h:");
    for (h, e) in &report.projection {
        println!("  {h:.6} -> {e:e}");
    }
    println!(
        "projection slope: {}",
        report
            .projection_slope
            .map(|s| format!("{s:.3}"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("nonlinear commutator by h:");
    for (h, e) in &report.nonlinear {
        println!("  {h:.6} -> {e:e}");
    }
    println!(
        "nonlinear slope: {}",
        report
            .nonlinear_slope
            .map(|s| format!("{s:.3}"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("laplacian/interpolation defect by h:");
    for (h, l) in &report.defect {
        println!("  {h:.6} -> {l:e}");
    }
    println!(
        "defect finest/coarsest ratio: {}",
        report
            .defect_ratio
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(mfd_wave_cli::io_err(dir))?;
        write_lemma_json(dir.join("lemma_report.json"), &report)?;
        println!("outputs in {}", dir.display());
    }

    let mut ok = true;
    if args.check {
        ok &= in_window(report.projection_slope, 1.7, 2.3, "projection error");
        ok &= in_window(report.nonlinear_slope, 1.7, 2.3, "nonlinear commutator");
        if report.linear_commutation_max > 1e-12 {
            eprintln!(
                "check failed: affine nonlinearity does not commute exactly ({:e})",
                report.linear_commutation_max
            );
            ok = false;
        }
        match report.defect_ratio {
            Some(r) if r > 0.1 => println!("check ok: defect ratio {r:.4} > 0.1"),
            Some(r) => {
                eprintln!("check failed: defect ratio {r:.4} <= 0.1");
                ok = false;
            }
            None => {
                eprintln!("check failed: defect ratio unavailable");
                ok = false;
            }
        }
    }
    Ok(ok)
}
