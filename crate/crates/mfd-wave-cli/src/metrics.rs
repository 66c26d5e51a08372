//! The four run metrics and log-log slope fitting.
//!
//! For a run ending at step `N`:
//! * solution error `E = ||u(t_N)^I - u^N|| / ||u(t_N)^I||` (cell norm),
//! * Hamiltonian total error `sigma = |H_h[u^N, v^N] - H[u0, v0]|` against
//!   the continuous Hamiltonian of the initial data,
//! * Hamiltonian drift `delta = |H_h[u^N, v^N] - H_h[u^0, v^0]|`,
//! * energy-law error `epsilon`: the max-cell residual of the discrete
//!   energy balance over the final step.

use crate::{HarnessError, Result};
use mfd_wave::dynamics::{
    continuous_hamiltonian, energy_law_residual, DiagnosticsRecord, WaveProblem,
};
use mfd_wave::integrator::RunOutput;
use mfd_wave::operators::{LinearSolveConfig, MimeticOperators};
use mfd_wave::PolyMesh;

/// Relative cell-norm error of the final state against the interpolated
/// exact solution at the same time.
pub fn solution_error(out: &RunOutput, problem: &WaveProblem, mesh: &PolyMesh) -> Result<f64> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or(mfd_wave::Error::UnsupportedProblem("exact solution"))?;
    let t = out.state.time;
    let reference = mesh.interpolate_scalar(|x, y| (exact.u)(t, x, y))?;
    Ok(mesh.relative_error_cell(&out.state.u, &reference)?)
}

/// `|H_h[final] - H[u0, v0]|` with the continuous Hamiltonian by quadrature.
pub fn hamiltonian_total_error(
    out: &RunOutput,
    problem: &WaveProblem,
    mesh: &PolyMesh,
    ops: &MimeticOperators,
    cfg: &LinearSolveConfig,
) -> Result<f64> {
    let h_continuous = continuous_hamiltonian(problem, mesh)?;
    let h_final =
        mfd_wave::dynamics::discrete_hamiltonian(&out.state.u, &out.state.v, problem, ops, cfg)?;
    Ok((h_final - h_continuous).abs())
}

/// `|H_h[final] - H_h[initial]|` from the run's own record series.
pub fn hamiltonian_drift(records: &[DiagnosticsRecord]) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| HarnessError::Invalid("run produced no records".into()))?;
    let last = records.last().expect("nonempty");
    Ok((last.hamiltonian - first.hamiltonian).abs())
}

/// Max-cell energy-law residual over the final step of the run.
pub fn energy_law_error(
    out: &RunOutput,
    tau: f64,
    problem: &WaveProblem,
    ops: &MimeticOperators,
    cfg: &LinearSolveConfig,
) -> Result<f64> {
    let previous = out
        .previous
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("run has no completed step".into()))?;
    Ok(energy_law_residual(
        &previous.u,
        &previous.v,
        &out.state.u,
        &out.state.v,
        tau,
        problem,
        ops,
        cfg,
    )?)
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than
/// two usable (positive) points.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Plain least-squares slope of `y` against `x` plus its standard error,
/// for trend checks on noisy series.
pub fn fit_linear_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let var = ss_res / (n - 2.0);
    let se = (var * n / denom).sqrt();
    Some((slope, se))
}
