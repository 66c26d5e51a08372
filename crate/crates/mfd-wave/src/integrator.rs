//! Symplectic implicit midpoint stepping for the semi-discrete wave system
//!
//! ```text
//! u^{n+1} = u^n + tau (v^{n+1} + v^n)/2
//! v^{n+1} = v^n + tau (LAP m - f'(m)),   m = (u^{n+1} + u^n)/2.
//! ```
//!
//! The step eliminates `v^{n+1}` and solves for the midpoint `m` the
//! nonlinear system
//!
//! ```text
//! G(m) = 2m - (tau^2/2) LAP m + (tau^2/2) f'(m) - 2u^n - tau v^n = 0
//! ```
//!
//! by Newton, with the Jacobian action
//! `J(m) w = 2w - (tau^2/2) LAP w + (tau^2/2) f''(m) w` solved by conjugate
//! gradients in the cell inner product, in which `J` is self-adjoint. The
//! explicit predictor `m_0 = u^n + (tau/2) v^n` starts the iteration.

use crate::dynamics::{discrete_hamiltonian, energy_law_residual, DiagnosticsRecord, WaveProblem};
use crate::error::Error;
use crate::fmath;
use crate::mesh::PolyMesh;
use crate::operators::{LinearSolveConfig, MimeticOperators, SolverKind};
use crate::spaces::CellField;
use crate::sparse::conjugate_gradient;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// One point of the fully discrete trajectory.
#[derive(Debug, Clone)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub u: CellField,
    pub v: CellField,
}

/// Newton iteration controls for the midpoint solve.
#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    /// Convergence threshold relative to `||2u^n + tau v^n||_C`.
    pub rel_tol: f64,
    /// Absolute floor for the threshold (guards zero states).
    pub abs_floor: f64,
    pub max_iters: usize,
    /// Relative tolerance of the inner Jacobian solves.
    pub linear_tol: f64,
    pub linear_max_iters: usize,
    /// Abort when the residual exceeds this multiple of its initial value.
    pub divergence_guard: f64,
}

impl NewtonConfig {
    pub fn new(
        rel_tol: f64,
        abs_floor: f64,
        max_iters: usize,
        linear_tol: f64,
    ) -> Result<Self, Error> {
        let cfg = NewtonConfig {
            rel_tol,
            abs_floor,
            max_iters,
            linear_tol,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rel_tol > 0.0 && self.abs_floor > 0.0 && self.linear_tol > 0.0) {
            return Err(Error::BadConfig(
                "Newton tolerances must be positive".into(),
            ));
        }
        if self.max_iters == 0 || self.linear_max_iters == 0 {
            return Err(Error::BadConfig(
                "Newton iteration budgets must be at least 1".into(),
            ));
        }
        if !(self.divergence_guard > 1.0) {
            return Err(Error::BadConfig(format!(
                "divergence guard must exceed 1, got {:e}",
                self.divergence_guard
            )));
        }
        Ok(())
    }

    /// Tightened tolerances for studies that push conservation to
    /// round-off (quadratic invariants, reversibility).
    pub fn strict() -> Self {
        NewtonConfig {
            rel_tol: 1e-13,
            abs_floor: 1e-15,
            max_iters: 50,
            linear_tol: 1e-14,
            linear_max_iters: 20_000,
            divergence_guard: 1e6,
        }
    }
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            rel_tol: 1e-12,
            abs_floor: 1e-14,
            max_iters: 50,
            linear_tol: 1e-13,
            linear_max_iters: 20_000,
            divergence_guard: 1e6,
        }
    }
}

/// What one step cost.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub newton_iters: u32,
    pub residual: f64,
}

/// Interpolates the initial data into the discrete spaces.
pub fn initial_state(problem: &WaveProblem, mesh: &PolyMesh) -> Result<SimState, Error> {
    Ok(SimState {
        step: 0,
        time: 0.0,
        u: mesh.interpolate_scalar(&problem.initial_u)?,
        v: mesh.interpolate_scalar(&problem.initial_v)?,
    })
}

fn flux_solve_config(newton: &NewtonConfig) -> LinearSolveConfig {
    LinearSolveConfig {
        rel_tol: newton.linear_tol,
        max_iters: newton.linear_max_iters,
        kind: SolverKind::Direct,
    }
}

/// Advances one implicit midpoint step of size `tau` (any nonzero sign;
/// the scheme is symmetric, so stepping by `-tau` undoes a step).
pub fn implicit_midpoint_step(
    state: &SimState,
    tau: f64,
    problem: &WaveProblem,
    ops: &MimeticOperators,
    newton: &NewtonConfig,
) -> Result<(SimState, StepStats), Error> {
    newton.validate()?;
    if !(tau != 0.0 && tau.is_finite()) {
        return Err(Error::BadConfig(format!(
            "time step must be finite and nonzero, got {tau}"
        )));
    }
    if state.u.token() != ops.token() || state.v.token() != ops.token() {
        return Err(Error::MeshMismatch);
    }
    let n = ops.n_cells();
    let areas = ops.cell_areas();
    let half_tau2 = 0.5 * tau * tau;
    let cfg = flux_solve_config(newton);

    // rhs = 2 u^n + tau v^n
    let mut rhs = state.u.clone();
    rhs.scale(2.0);
    rhs.axpy(tau, &state.v);
    let rhs_norm = ops.norm_cell(&rhs)?;
    let tol = (newton.rel_tol * rhs_norm).max(newton.abs_floor);

    // explicit predictor m0 = u^n + (tau/2) v^n
    let mut m = state.u.clone();
    m.axpy(0.5 * tau, &state.v);

    let residual = |m: &CellField| -> Result<CellField, Error> {
        let lap = ops.laplacian(m, &cfg)?;
        let mut g = m.clone();
        g.scale(2.0);
        g.axpy(-half_tau2, &lap);
        let fp = m.map(|s| (problem.potential_d1)(s));
        g.axpy(half_tau2, &fp);
        g.axpy(-1.0, &rhs);
        Ok(g)
    };

    let mut r = residual(&m)?;
    let mut r_norm = ops.norm_cell(&r)?;
    let initial_norm = r_norm.max(tol);
    let mut iters = 0u32;
    while r_norm > tol {
        if iters as usize >= newton.max_iters {
            return Err(Error::NewtonFailed {
                step: state.step,
                iterations: iters as usize,
                residual: r_norm,
            });
        }
        if r_norm > newton.divergence_guard * initial_norm {
            return Err(Error::NewtonFailed {
                step: state.step,
                iterations: iters as usize,
                residual: r_norm,
            });
        }

        // curvature guard: the symmetrized Jacobian stays SPD only while
        // 2 + (tau^2/2) f''(m) > 0 everywhere
        let curvatures: Vec<f64> = m
            .values()
            .iter()
            .map(|&s| (problem.potential_d2)(s))
            .collect();
        for (c, &f2) in curvatures.iter().enumerate() {
            if 2.0 + half_tau2 * f2 <= 0.0 {
                return Err(Error::IndefiniteJacobian {
                    cell: c,
                    curvature: f2,
                });
            }
        }

        let neg_r: Vec<f64> = r.values().iter().map(|&x| -x).collect();
        let mut delta = vec![0.0; n];
        conjugate_gradient(
            |w, out| {
                let lap = ops.laplacian_raw(w, &cfg)?;
                for i in 0..n {
                    out[i] = 2.0 * w[i] - half_tau2 * lap[i] + half_tau2 * curvatures[i] * w[i];
                }
                Ok(())
            },
            &neg_r,
            &mut delta,
            Some(areas),
            None,
            newton.linear_tol,
            newton.linear_max_iters,
        )
        .map_err(|e| Error::StepFailed {
            step: state.step,
            time: state.time,
            source: Box::new(e),
        })?;

        for (mv, d) in m.values_mut().iter_mut().zip(&delta) {
            *mv += d;
        }
        iters += 1;
        r = residual(&m)?;
        r_norm = ops.norm_cell(&r)?;
    }

    // recover the endpoint: u^{n+1} = 2m - u^n, v^{n+1} = 2(u^{n+1}-u^n)/tau - v^n
    let mut u_next = m;
    u_next.scale(2.0);
    u_next.axpy(-1.0, &state.u);
    let mut v_next = u_next.clone();
    v_next.axpy(-1.0, &state.u);
    v_next.scale(2.0 / tau);
    v_next.axpy(-1.0, &state.v);

    Ok((
        SimState {
            step: state.step + 1,
            time: state.time + tau,
            u: u_next,
            v: v_next,
        },
        StepStats {
            newton_iters: iters,
            residual: r_norm,
        },
    ))
}

/// Run controls: emit a diagnostics record every `cadence` steps (the
/// first and last step are always recorded) and solve diagnostics with
/// `solve`.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub cadence: usize,
    pub solve: LinearSolveConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            cadence: 1,
            solve: LinearSolveConfig::direct(),
        }
    }
}

/// A finished trajectory: the final state, the state one step earlier
/// (for the final energy-law residual) and the diagnostics series.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SimState,
    pub previous: Option<SimState>,
    pub records: Vec<DiagnosticsRecord>,
}

/// Integrates from the interpolated initial data to `t_final` with
/// `N = round(t_final / tau)` steps, emitting diagnostics records along
/// the way. Step times are accumulated as `n * tau`, not by repeated
/// addition.
pub fn run(
    problem: &WaveProblem,
    mesh: &PolyMesh,
    ops: &MimeticOperators,
    tau: f64,
    t_final: f64,
    newton: &NewtonConfig,
    opts: &RunOptions,
    mut on_record: impl FnMut(&DiagnosticsRecord),
) -> Result<RunOutput, Error> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::BadConfig(format!(
            "time step must be positive, got {tau}"
        )));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::BadConfig(format!(
            "final time must be nonnegative, got {t_final}"
        )));
    }
    if mesh.token() != ops.token() {
        return Err(Error::MeshMismatch);
    }
    let cadence = opts.cadence.max(1);
    let n_steps = fmath::round(t_final / tau) as usize;

    let mut state = initial_state(problem, mesh)?;
    let mut records = Vec::new();
    if n_steps == 0 {
        return Ok(RunOutput {
            state,
            previous: None,
            records,
        });
    }

    let h0 = discrete_hamiltonian(&state.u, &state.v, problem, ops, &opts.solve)?;
    let first = DiagnosticsRecord {
        step: 0,
        time: 0.0,
        hamiltonian: h0,
        drift: 0.0,
        energy_residual: None,
        newton_iters: 0,
    };
    on_record(&first);
    records.push(first);

    let mut previous: Option<SimState> = None;
    for n in 0..n_steps {
        let (mut next, stats) =
            implicit_midpoint_step(&state, tau, problem, ops, newton).map_err(|e| match e {
                e @ Error::StepFailed { .. } => e,
                other => Error::StepFailed {
                    step: n,
                    time: (n as f64) * tau,
                    source: Box::new(other),
                },
            })?;
        next.time = (next.step as f64) * tau;

        let done = next.step == n_steps;
        if done || next.step % cadence == 0 {
            let h = discrete_hamiltonian(&next.u, &next.v, problem, ops, &opts.solve)?;
            let res = energy_law_residual(
                &state.u,
                &state.v,
                &next.u,
                &next.v,
                tau,
                problem,
                ops,
                &opts.solve,
            )?;
            let record = DiagnosticsRecord {
                step: next.step,
                time: next.time,
                hamiltonian: h,
                drift: fmath::abs(h - h0),
                energy_residual: Some(res),
                newton_iters: stats.newton_iters,
            };
            on_record(&record);
            records.push(record);
        }
        previous = Some(core::mem::replace(&mut state, next));
    }

    Ok(RunOutput {
        state,
        previous,
        records,
    })
}
