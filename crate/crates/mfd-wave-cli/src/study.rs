//! Experiment configuration, single runs, convergence studies and the
//! lemma-rate checks.

use crate::metrics::{
    energy_law_error, fit_log_slope, hamiltonian_drift, hamiltonian_total_error, solution_error,
};
use crate::problems::{generate_mesh_for_target_h, test1, test2};
use crate::{io_err, meshio, HarnessError, Result};
use mfd_wave::dynamics::{laplacian_commutation_defect, DiagnosticsRecord, WaveProblem};
use mfd_wave::integrator::{run, NewtonConfig, RunOptions, RunOutput};
use mfd_wave::operators::{LinearSolveConfig, MimeticOperators};
use mfd_wave::voronoi::generate_voronoi;
use mfd_wave::{PolyMesh, Rect};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestCase {
    Test1,
    Test2,
}

impl TestCase {
    pub fn problem(self) -> WaveProblem {
        match self {
            TestCase::Test1 => test1(),
            TestCase::Test2 => test2(),
        }
    }
}

fn default_lloyd() -> usize {
    100
}

fn default_newton_rel() -> f64 {
    1e-12
}

fn default_newton_floor() -> f64 {
    1e-14
}

fn default_linear_tol() -> f64 {
    1e-13
}

fn default_solver_tol() -> f64 {
    1e-12
}

fn default_cadence() -> usize {
    1
}

/// Where the mesh comes from: generated (by seed count or target size) or
/// loaded from a mesh JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSource {
    Generate {
        #[serde(default)]
        n_seeds: Option<usize>,
        #[serde(default)]
        target_h: Option<f64>,
        #[serde(default = "default_lloyd")]
        lloyd_iters: usize,
        #[serde(default)]
        rng_seed: u64,
    },
    File(PathBuf),
}

impl MeshSource {
    pub fn resolve(&self) -> Result<PolyMesh> {
        match self {
            MeshSource::Generate {
                n_seeds,
                target_h,
                lloyd_iters,
                rng_seed,
            } => match (n_seeds, target_h) {
                (Some(n), None) => Ok(generate_voronoi(*n, *lloyd_iters, *rng_seed, Rect::UNIT)?),
                (None, Some(h)) => generate_mesh_for_target_h(*h, *lloyd_iters, *rng_seed),
                (Some(_), Some(_)) => Err(HarnessError::Invalid(
                    "give either n_seeds or target_h, not both".into(),
                )),
                (None, None) => Err(HarnessError::Invalid(
                    "mesh generation needs n_seeds or target_h".into(),
                )),
            },
            MeshSource::File(path) => meshio::load_mesh(path),
        }
    }
}

/// One experiment: a test case, a mesh source and run parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub test: TestCase,
    pub mesh: MeshSource,
    pub tau: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_newton_rel")]
    pub newton_rel_tol: f64,
    #[serde(default = "default_newton_floor")]
    pub newton_abs_floor: f64,
    #[serde(default = "default_linear_tol")]
    pub newton_linear_tol: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_rel_tol: f64,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&body).map_err(|source| HarnessError::ConfigFormat {
                path: path.to_path_buf(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(HarnessError::Invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(HarnessError::Invalid(format!(
                "T must be nonnegative, got {}",
                self.t_final
            )));
        }
        Ok(())
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            rel_tol: self.newton_rel_tol,
            abs_floor: self.newton_abs_floor,
            linear_tol: self.newton_linear_tol,
            ..NewtonConfig::default()
        }
    }

    pub fn solver(&self) -> LinearSolveConfig {
        LinearSolveConfig {
            rel_tol: self.solver_rel_tol,
            ..LinearSolveConfig::direct()
        }
    }
}

/// Metric values of one finished run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsRow {
    pub h: f64,
    pub tau: f64,
    /// `E`: relative solution error (needs an exact solution).
    pub solution_error: Option<f64>,
    /// `sigma`: Hamiltonian error against the continuous functional.
    pub hamiltonian_total_error: f64,
    /// `delta`: Hamiltonian drift over the run.
    pub hamiltonian_drift: f64,
    /// `epsilon`: max-cell energy-law residual at the final step.
    pub energy_law_error: Option<f64>,
}

/// Everything a finished experiment produced.
pub struct ExperimentOutcome {
    pub mesh: PolyMesh,
    pub ops: MimeticOperators,
    pub problem: WaveProblem,
    pub run: RunOutput,
    pub row: MetricsRow,
}

/// Runs one experiment end to end: mesh, assembly, integration, metrics.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mut on_record: impl FnMut(&DiagnosticsRecord),
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mesh = cfg.mesh.resolve()?;
    run_experiment_on_mesh(cfg, mesh, &mut on_record)
}

/// Same as [`run_experiment`], but on an already resolved mesh (studies
/// reuse one mesh across a `tau` sweep).
pub fn run_experiment_on_mesh(
    cfg: &ExperimentConfig,
    mesh: PolyMesh,
    on_record: &mut dyn FnMut(&DiagnosticsRecord),
) -> Result<ExperimentOutcome> {
    run_problem_on_mesh(cfg.test.problem(), cfg, mesh, on_record)
}

/// Runs a caller-supplied problem (anything beyond the two built-in test
/// cases) with the run parameters of `cfg`; `cfg.test` is ignored.
pub fn run_problem_on_mesh(
    problem: WaveProblem,
    cfg: &ExperimentConfig,
    mesh: PolyMesh,
    on_record: &mut dyn FnMut(&DiagnosticsRecord),
) -> Result<ExperimentOutcome> {
    let ops = MimeticOperators::assemble(&mesh, |x, y| (problem.tensor)(x, y))?;
    let solver = cfg.solver();
    let opts = RunOptions {
        cadence: cfg.cadence,
        solve: solver,
    };
    let out = run(
        &problem,
        &mesh,
        &ops,
        cfg.tau,
        cfg.t_final,
        &cfg.newton(),
        &opts,
        |r| on_record(r),
    )?;

    let e = match problem.exact {
        Some(_) => Some(solution_error(&out, &problem, &mesh)?),
        None => None,
    };
    let sigma = hamiltonian_total_error(&out, &problem, &mesh, &ops, &solver)?;
    let delta = if out.records.is_empty() {
        0.0
    } else {
        hamiltonian_drift(&out.records)?
    };
    let epsilon = if out.previous.is_some() {
        Some(energy_law_error(&out, cfg.tau, &problem, &ops, &solver)?)
    } else {
        None
    };
    let row = MetricsRow {
        h: mesh.h(),
        tau: cfg.tau,
        solution_error: e,
        hamiltonian_total_error: sigma,
        hamiltonian_drift: delta,
        energy_law_error: epsilon,
    };
    Ok(ExperimentOutcome {
        mesh,
        ops,
        problem,
        run: out,
        row,
    })
}

/// Which parameter a study refines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyAxis {
    /// Refine the mesh at fixed `tau`.
    MeshSize { h_targets: Vec<f64> },
    /// Refine `tau` on one fixed mesh.
    TimeStep { taus: Vec<f64> },
    /// Refine the mesh with `tau` locked to the measured mesh size.
    CoupledTauH { h_targets: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: f64,
    pub tau: f64,
    pub metrics: Option<MetricsRow>,
    pub error: Option<String>,
}

/// Fitted log-log slopes per metric along the study axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Slopes {
    pub axis: String,
    pub solution_error: Option<f64>,
    pub hamiltonian_total_error: Option<f64>,
    pub hamiltonian_drift: Option<f64>,
    pub energy_law_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<StudyRow>,
    pub slopes: Option<Slopes>,
}

impl ConvergenceReport {
    pub fn surviving(&self) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter_map(|r| r.metrics.as_ref())
    }
}

/// Runs every refinement level of a study. Individual run failures are
/// recorded in their row; slopes are fitted over the surviving rows when
/// at least two remain.
pub fn run_convergence_study(
    base: &ExperimentConfig,
    axis: &StudyAxis,
) -> Result<ConvergenceReport> {
    base.validate()?;
    let mut rows: Vec<StudyRow> = Vec::new();

    match axis {
        StudyAxis::MeshSize { h_targets } | StudyAxis::CoupledTauH { h_targets } => {
            let coupled = matches!(axis, StudyAxis::CoupledTauH { .. });
            let mut targets = h_targets.clone();
            targets.sort_by(|a, b| b.total_cmp(a));
            let (lloyd, seed) = match &base.mesh {
                MeshSource::Generate {
                    lloyd_iters,
                    rng_seed,
                    ..
                } => (*lloyd_iters, *rng_seed),
                MeshSource::File(_) => (default_lloyd(), 0),
            };
            for &target in &targets {
                let mesh = match generate_mesh_for_target_h(target, lloyd, seed) {
                    Ok(m) => m,
                    Err(e) => {
                        rows.push(StudyRow {
                            h: target,
                            tau: base.tau,
                            metrics: None,
                            error: Some(e.to_string()),
                        });
                        continue;
                    }
                };
                let mut cfg = base.clone();
                if coupled {
                    // nominal coupling: the target is an exact divisor of
                    // typical horizons, so every level ends at the same time
                    cfg.tau = target;
                }
                let h = mesh.h();
                match run_experiment_on_mesh(&cfg, mesh, &mut |_| {}) {
                    Ok(outcome) => rows.push(StudyRow {
                        h,
                        tau: cfg.tau,
                        metrics: Some(outcome.row),
                        error: None,
                    }),
                    Err(e) => rows.push(StudyRow {
                        h,
                        tau: cfg.tau,
                        metrics: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
        }
        StudyAxis::TimeStep { taus } => {
            let mesh = base.mesh.resolve()?;
            let mut taus = taus.clone();
            taus.sort_by(|a, b| b.total_cmp(a));
            for &tau in &taus {
                let mut cfg = base.clone();
                cfg.tau = tau;
                match run_experiment_on_mesh(&cfg, mesh.clone(), &mut |_| {}) {
                    Ok(outcome) => rows.push(StudyRow {
                        h: mesh.h(),
                        tau,
                        metrics: Some(outcome.row),
                        error: None,
                    }),
                    Err(e) => rows.push(StudyRow {
                        h: mesh.h(),
                        tau,
                        metrics: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
        }
    }

    let axis_name = match axis {
        StudyAxis::TimeStep { .. } => "tau",
        _ => "h",
    };
    let survivors: Vec<&MetricsRow> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let slopes = if survivors.len() >= 2 {
        let xs: Vec<f64> = survivors
            .iter()
            .map(|m| if axis_name == "tau" { m.tau } else { m.h })
            .collect();
        let fit = |ys: Vec<Option<f64>>| -> Option<f64> {
            let points: Vec<(f64, f64)> = xs
                .iter()
                .zip(ys)
                .filter_map(|(&x, y)| y.map(|y| (x, y)))
                .collect();
            if points.len() >= 2 {
                fit_log_slope(&points)
            } else {
                None
            }
        };
        Some(Slopes {
            axis: axis_name.into(),
            solution_error: fit(survivors.iter().map(|m| m.solution_error).collect()),
            hamiltonian_total_error: fit(survivors
                .iter()
                .map(|m| Some(m.hamiltonian_total_error))
                .collect()),
            hamiltonian_drift: fit(survivors
                .iter()
                .map(|m| Some(m.hamiltonian_drift))
                .collect()),
            energy_law_error: fit(survivors.iter().map(|m| m.energy_law_error).collect()),
        })
    } else {
        None
    };

    Ok(ConvergenceReport { rows, slopes })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `report.csv`: `h,tau,E,sigma,delta,epsilon`, one row per refinement
/// level (failed rows keep their axis values and leave metrics empty).
pub fn write_report_csv(path: impl AsRef<Path>, report: &ConvergenceReport) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("h,tau,E,sigma,delta,epsilon\n");
    for row in &report.rows {
        match &row.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{:e},{:e},{},{:e},{:e},{}",
                    row.h,
                    row.tau,
                    opt(m.solution_error),
                    m.hamiltonian_total_error,
                    m.hamiltonian_drift,
                    opt(m.energy_law_error),
                );
            }
            None => {
                let _ = writeln!(out, "{:e},{:e},,,,", row.h, row.tau);
            }
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_report_json(path: impl AsRef<Path>, report: &ConvergenceReport) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    fs::write(path, body).map_err(io_err(path))
}

/// Rate checks with the smooth reference `u = sin(pi x) sin(pi y)`:
/// the energy-projection error and the nonlinear interpolation commutator
/// (with `f(s) = s^3`) both decay at second order, an affine nonlinearity
/// commutes exactly, and the interpolation/Laplacian defect `L(u)` does
/// not decay at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub projection: Vec<(f64, f64)>,
    pub projection_slope: Option<f64>,
    pub nonlinear: Vec<(f64, f64)>,
    pub nonlinear_slope: Option<f64>,
    pub linear_commutation_max: f64,
    pub defect: Vec<(f64, f64)>,
    /// L(u) at the finest mesh over L(u) at the coarsest.
    pub defect_ratio: Option<f64>,
}

pub fn lemma_rate_checks(
    rate_h_targets: &[f64],
    defect_h_targets: &[f64],
    lloyd_iters: usize,
    rng_seed: u64,
) -> Result<LemmaReport> {
    let u = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let div_k_grad_u = move |x: f64, y: f64| -2.0 * PI * PI * u(x, y);
    let cfg = LinearSolveConfig::default();
    let identity = |_: f64, _: f64| [[1.0, 0.0], [0.0, 1.0]];

    let mut projection = Vec::new();
    let mut nonlinear = Vec::new();
    let mut linear_commutation_max = 0.0f64;
    let mut targets = rate_h_targets.to_vec();
    targets.sort_by(|a, b| b.total_cmp(a));
    for &target in &targets {
        let mesh = generate_mesh_for_target_h(target, lloyd_iters, rng_seed)?;
        let ops = MimeticOperators::assemble(&mesh, identity)?;
        let u_i = mesh.interpolate_scalar(u)?;

        // energy projection: solve LAP p = (div K grad u)^I
        let g = mesh.interpolate_scalar(div_k_grad_u)?;
        let p = ops.energy_projection(&g, &cfg)?;
        let mut diff = u_i.clone();
        diff.axpy(-1.0, &p);
        projection.push((mesh.h(), mesh.norm_cell(&diff)?));

        // nonlinear commutator for f(s) = s^3, f'(s) = 3 s^2
        let fprime_then_interp = mesh.interpolate_scalar(|x, y| 3.0 * u(x, y) * u(x, y))?;
        let interp_then_fprime = u_i.map(|s| 3.0 * s * s);
        let mut comm = fprime_then_interp;
        comm.axpy(-1.0, &interp_then_fprime);
        nonlinear.push((mesh.h(), mesh.norm_cell(&comm)?));

        // affine f commutes with cell averaging exactly
        let affine_then_interp = mesh.interpolate_scalar(|x, y| 2.0 * u(x, y) + 1.0)?;
        let interp_then_affine = u_i.map(|s| 2.0 * s + 1.0);
        let mut affine = affine_then_interp;
        affine.axpy(-1.0, &interp_then_affine);
        linear_commutation_max = linear_commutation_max.max(
            affine
                .values()
                .iter()
                .fold(0.0f64, |acc, &v| acc.max(v.abs())),
        );
    }

    let mut defect = Vec::new();
    let mut defect_targets = defect_h_targets.to_vec();
    defect_targets.sort_by(|a, b| b.total_cmp(a));
    for &target in &defect_targets {
        let mesh = generate_mesh_for_target_h(target, lloyd_iters, rng_seed)?;
        let ops = MimeticOperators::assemble(&mesh, identity)?;
        let l = laplacian_commutation_defect(&mesh, &ops, u, div_k_grad_u, &cfg)?;
        defect.push((mesh.h(), l));
    }
    let defect_ratio = match (defect.first(), defect.last()) {
        (Some(&(_, coarse)), Some(&(_, fine))) if defect.len() >= 2 && coarse > 0.0 => {
            Some(fine / coarse)
        }
        _ => None,
    };

    Ok(LemmaReport {
        projection_slope: fit_log_slope(&projection),
        projection,
        nonlinear_slope: fit_log_slope(&nonlinear),
        nonlinear,
        linear_commutation_max,
        defect,
        defect_ratio,
    })
}

pub fn write_lemma_json(path: impl AsRef<Path>, report: &LemmaReport) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    fs::write(path, body).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_roundtrip_with_defaults() {
        let body = r#"{
            "test": "test2",
            "mesh": {"generate": {"target_h": 0.2, "lloyd_iters": 5, "rng_seed": 3}},
            "tau": 0.1,
            "T": 0.5
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(body).unwrap();
        assert_eq!(cfg.test, TestCase::Test2);
        assert_eq!(cfg.cadence, 1);
        assert_eq!(cfg.newton_rel_tol, 1e-12);
        cfg.validate().unwrap();
        let back = serde_json::to_string(&cfg).unwrap();
        let again: ExperimentConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(again.tau, cfg.tau);
    }

    #[test]
    fn file_mesh_source_parses() {
        let body = r#"{"test": "test1", "mesh": {"file": "some/mesh.json"}, "tau": 0.1, "T": 1.0}"#;
        let cfg: ExperimentConfig = serde_json::from_str(body).unwrap();
        assert!(matches!(cfg.mesh, MeshSource::File(_)));
    }

    #[test]
    fn bad_tau_is_rejected() {
        let cfg = ExperimentConfig {
            test: TestCase::Test1,
            mesh: MeshSource::Generate {
                n_seeds: Some(4),
                target_h: None,
                lloyd_iters: 0,
                rng_seed: 0,
            },
            tau: -0.5,
            t_final: 1.0,
            newton_rel_tol: 1e-12,
            newton_abs_floor: 1e-14,
            newton_linear_tol: 1e-13,
            solver_rel_tol: 1e-12,
            cadence: 1,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ambiguous_mesh_source_is_rejected() {
        let source = MeshSource::Generate {
            n_seeds: Some(10),
            target_h: Some(0.1),
            lloyd_iters: 0,
            rng_seed: 0,
        };
        assert!(source.resolve().is_err());
    }

    #[test]
    fn tiny_study_produces_rows_and_slopes() {
        let base = ExperimentConfig {
            test: TestCase::Test1,
            mesh: MeshSource::Generate {
                n_seeds: None,
                target_h: Some(0.3),
                lloyd_iters: 5,
                rng_seed: 11,
            },
            tau: 0.05,
            t_final: 0.2,
            newton_rel_tol: 1e-12,
            newton_abs_floor: 1e-14,
            newton_linear_tol: 1e-13,
            solver_rel_tol: 1e-12,
            cadence: 1,
        };
        let report = run_convergence_study(
            &base,
            &StudyAxis::MeshSize {
                h_targets: vec![0.4, 0.2],
            },
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(
            report.rows[0].h > report.rows[1].h,
            "rows ordered by decreasing h"
        );
        assert!(report.slopes.is_some());
        let single = run_convergence_study(
            &base,
            &StudyAxis::MeshSize {
                h_targets: vec![0.3],
            },
        )
        .unwrap();
        assert_eq!(single.rows.len(), 1);
        assert!(single.slopes.is_none(), "single-row study has no slopes");
    }
}
