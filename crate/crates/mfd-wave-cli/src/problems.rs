//! The two built-in benchmark problems on the unit square, plus mesh
//! sizing helpers.
//!
//! Test 1 is a manufactured standing wave: `K = I`,
//! `f(u) = (1 - 2 pi^2)/2 u^2`, exact solution
//! `u(t, x, y) = sin(t) sin(pi x) sin(pi y)`.
//! Test 2 is the nonlinear pendulum-type load: `K = I`, `f(u) = sin(u)`,
//! `u0 = 0`, `v0 = sin(pi x) sin(pi y)` (no closed-form solution).

use crate::{HarnessError, Result};
use mfd_wave::dynamics::WaveProblem;
use mfd_wave::voronoi::generate_voronoi;
use mfd_wave::{PolyMesh, Rect};
use std::f64::consts::PI;

/// Manufactured standing wave with a quadratic potential.
pub fn test1() -> WaveProblem {
    let c = (1.0 - 2.0 * PI * PI) / 2.0;
    WaveProblem::builder()
        .identity_tensor()
        .potential(move |s| c * s * s, move |s| 2.0 * c * s, move |_| 2.0 * c)
        .initial_data(|_, _| 0.0, |x, y| (PI * x).sin() * (PI * y).sin())
        .initial_u_gradient(|_, _| (0.0, 0.0))
        .exact_solution(
            |t, x, y| t.sin() * (PI * x).sin() * (PI * y).sin(),
            |t, x, y| t.cos() * (PI * x).sin() * (PI * y).sin(),
        )
        .final_time(1.0)
        .build()
        .expect("test 1 problem data is consistent")
}

/// Sine potential with zero initial displacement.
pub fn test2() -> WaveProblem {
    WaveProblem::builder()
        .identity_tensor()
        .potential(|s| s.sin(), |s| s.cos(), |s| -s.sin())
        .initial_data(|_, _| 0.0, |x, y| (PI * x).sin() * (PI * y).sin())
        .initial_u_gradient(|_, _| (0.0, 0.0))
        .final_time(1.0)
        .build()
        .expect("test 2 problem data is consistent")
}

/// Seed count whose relaxed Voronoi tessellation of the unit square has
/// mesh size close to `h`: centroidal cells are nearly regular hexagons of
/// area `1/n` and diameter about `1.24 / sqrt(n)`.
pub fn seed_count_for_target_h(h: f64) -> usize {
    ((1.24 / h) * (1.24 / h)).round().max(1.0) as usize
}

/// Generates a unit-square Voronoi mesh with measured mesh size within
/// about 12% of `target_h`, adjusting the seed count a few times if the
/// first guess lands outside. Deterministic for fixed arguments.
pub fn generate_mesh_for_target_h(
    target_h: f64,
    lloyd_iters: usize,
    rng_seed: u64,
) -> Result<PolyMesh> {
    if !(target_h > 0.0 && target_h.is_finite()) {
        return Err(HarnessError::Invalid(format!(
            "target mesh size must be positive, got {target_h}"
        )));
    }
    let mut n = seed_count_for_target_h(target_h);
    let mut best: Option<(f64, PolyMesh)> = None;
    for _ in 0..4 {
        let mesh = generate_voronoi(n, lloyd_iters, rng_seed, Rect::UNIT)?;
        let h = mesh.h();
        let misfit = (h / target_h - 1.0).abs();
        let better = best.as_ref().map_or(true, |(m, _)| misfit < *m);
        if better {
            best = Some((misfit, mesh));
        }
        if misfit <= 0.12 {
            break;
        }
        // cell diameter scales like 1/sqrt(n)
        let scaled = (n as f64) * (h / target_h) * (h / target_h);
        let next = scaled.round().max(1.0) as usize;
        if next == n {
            break;
        }
        n = next;
    }
    Ok(best.expect("at least one attempt").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfd_wave::dynamics::{continuous_hamiltonian, discrete_hamiltonian};
    use mfd_wave::operators::{LinearSolveConfig, MimeticOperators};

    #[test]
    fn test1_load_solves_the_manufactured_equation() {
        // u_tt - div grad u + f'(u) = 0 for u = sin(t) sin(pi x) sin(pi y):
        // pointwise check at a few (t, x, y)
        let problem = test1();
        let exact = problem.exact.as_ref().unwrap();
        let eps = 1e-5;
        for &(t, x, y) in &[(0.3, 0.21, 0.47), (1.1, 0.73, 0.11), (2.0, 0.5, 0.5)] {
            let u = |t: f64| (exact.u)(t, x, y);
            let u_tt = (u(t + eps) - 2.0 * u(t) + u(t - eps)) / (eps * eps);
            let lap = -2.0 * PI * PI * u(t);
            let rhs = lap - (problem.potential_d1)(u(t));
            assert!((u_tt - rhs).abs() < 1e-5, "residual {}", u_tt - rhs);
        }
    }

    #[test]
    fn continuous_hamiltonian_is_one_eighth() {
        // both tests start from u0 = 0, v0 = sin sin: H = int v0^2 / 2 = 1/8
        let mesh = generate_mesh_for_target_h(0.1, 50, 42).unwrap();
        for problem in [test1(), test2()] {
            let h = continuous_hamiltonian(&problem, &mesh).unwrap();
            assert!(
                (h - 0.125).abs() < 5e-3,
                "quadrature Hamiltonian {h} too far from 1/8"
            );
        }
    }

    #[test]
    fn discrete_hamiltonian_matches_continuous_at_h005() {
        let mesh = generate_mesh_for_target_h(0.05, 50, 42).unwrap();
        let ops = MimeticOperators::assemble(&mesh, |_, _| [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let cfg = LinearSolveConfig::default();
        let problem = test2();
        let u = mesh.interpolate_scalar(&problem.initial_u).unwrap();
        let v = mesh.interpolate_scalar(&problem.initial_v).unwrap();
        let h = discrete_hamiltonian(&u, &v, &problem, &ops, &cfg).unwrap();
        assert!((h - 0.125).abs() < 2e-3, "H = {h}");
    }

    #[test]
    fn target_h_generation_hits_the_window() {
        // the 100-iteration relaxed mesh targeted at h = 0.05 lands within
        // [0.03, 0.08]
        let mesh = generate_mesh_for_target_h(0.05, 100, 7).unwrap();
        assert!(
            mesh.h() >= 0.03 && mesh.h() <= 0.08,
            "measured h = {}",
            mesh.h()
        );
        mesh.validate().unwrap();
    }

    #[test]
    fn seed_formula_is_monotone() {
        assert!(seed_count_for_target_h(0.2) < seed_count_for_target_h(0.1));
        assert!(seed_count_for_target_h(0.1) < seed_count_for_target_h(0.05));
        assert_eq!(seed_count_for_target_h(1e9), 1);
    }
}
