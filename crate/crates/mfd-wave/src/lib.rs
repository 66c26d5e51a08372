//! Mimetic finite difference (MFD) discretization of the 2D nonlinear
//! Hamiltonian wave equation
//!
//! ```text
//! u_tt = div K grad u - f'(u)   in Ω x (0,T),   u = 0 on ∂Ω,
//! ```
//!
//! on general polygonal meshes, coupled with the symplectic implicit
//! midpoint rule in time.
//!
//! The building blocks mirror the mixed mimetic framework:
//!
//! * [`mesh`]: polygonal meshes ([`PolyMesh`]) with oriented faces,
//!   bounded Voronoi generation with Lloyd relaxation, and quality checks;
//! * [`spaces`]: cell fields (one value per cell) and flux fields (one
//!   normal component per face) with interpolation and discrete norms;
//! * [`operators`]: the flux mass matrix, the divergence as primary
//!   operator, the gradient as its dual, the discrete Laplacian and the
//!   elliptic energy projection;
//! * [`dynamics`]: the wave problem data and the discrete Hamiltonian /
//!   energy-density / energy-flux diagnostics;
//! * [`integrator`]: the implicit midpoint stepper with a Newton inner
//!   loop and conjugate-gradient linear solves.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature when building without `std`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("either the `std` or the `libm` feature must be enabled");

pub mod dynamics;
pub mod error;
mod fmath;
pub mod integrator;
pub mod mesh;
pub mod operators;
mod smallmat;
pub mod spaces;
pub mod sparse;
pub mod voronoi;

pub use error::Error;
pub use mesh::{MeshQualityReport, PolyMesh, Rect};
pub use operators::{LinearSolveConfig, MimeticOperators, SolverKind};
pub use spaces::{CellField, FluxField};
