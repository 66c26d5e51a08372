//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Everything that can go wrong while building meshes, assembling
/// operators or running the integrator.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A cell refers to a vertex index outside the vertex table.
    VertexIndexOutOfRange {
        cell: usize,
        index: usize,
        n_vertices: usize,
    },
    /// A cell loop has fewer than three distinct vertices.
    CellTooSmall { cell: usize, n_vertices: usize },
    /// A cell loop is clockwise or has non-positive signed area.
    NotCounterClockwise { cell: usize, signed_area: f64 },
    /// An edge is shared by more than two cells.
    EdgeOveruse {
        vertices: (usize, usize),
        n_cells: usize,
    },
    /// Mesh invariants failed; carries one message per offending cell/face.
    InvalidMesh { failures: alloc::vec::Vec<String> },
    /// Voronoi generation collapsed a cell to zero area.
    DegenerateSeed { seed: usize },
    /// Two generator seeds coincide (or nearly so).
    CoincidentSeeds { first: usize, second: usize },
    /// The requested generation parameters make no sense.
    BadGenerationParams(String),
    /// A sampled function value was not finite.
    NonFiniteSample { x: f64, y: f64 },
    /// Two fields (or a field and an operator set) belong to different meshes.
    MeshMismatch,
    /// A field has the wrong number of entries for its mesh.
    DimensionMismatch { expected: usize, got: usize },
    /// The material tensor sampled at a cell centroid is not SPD.
    TensorNotSpd { cell: usize },
    /// The local flux matrix could not be built (degenerate cell geometry).
    DegenerateCell { cell: usize },
    /// Sparse Cholesky hit a non-positive pivot.
    FactorizationFailed { index: usize, pivot: f64 },
    /// An iterative linear solve did not reach its tolerance.
    SolveFailed { iterations: usize, residual: f64 },
    /// Power/inverse iteration did not converge.
    EigenIterationFailed { iterations: usize },
    /// Invalid solver or Newton configuration.
    BadConfig(String),
    /// Newton did not converge within its iteration budget.
    NewtonFailed {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    /// The midpoint Jacobian lost positive definiteness (f'' too negative).
    IndefiniteJacobian { cell: usize, curvature: f64 },
    /// The supplied derivatives are inconsistent with the potential.
    InconsistentDerivatives {
        which: &'static str,
        at: f64,
        relative_error: f64,
    },
    /// The problem lacks data required by the requested operation.
    UnsupportedProblem(&'static str),
    /// A time step failed; wraps the underlying error with run position.
    StepFailed {
        step: usize,
        time: f64,
        source: alloc::boxed::Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::VertexIndexOutOfRange { cell, index, n_vertices } => write!(
                f,
                "cell {cell} refers to vertex {index} but the mesh has {n_vertices} vertices"
            ),
            Error::CellTooSmall { cell, n_vertices } => {
                write!(f, "cell {cell} has only {n_vertices} distinct vertices")
            }
            Error::NotCounterClockwise { cell, signed_area } => write!(
                f,
                "cell {cell} is not counter-clockwise (signed area {signed_area:e})"
            ),
            Error::EdgeOveruse { vertices: (a, b), n_cells } => {
                write!(f, "edge ({a}, {b}) is shared by {n_cells} cells")
            }
            Error::InvalidMesh { failures } => {
                write!(f, "mesh validation failed:")?;
                for msg in failures {
                    write!(f, "\n  {msg}")?;
                }
                Ok(())
            }
            Error::DegenerateSeed { seed } => {
                write!(f, "seed {seed} produced a zero-area Voronoi cell")
            }
            Error::CoincidentSeeds { first, second } => {
                write!(f, "seeds {first} and {second} coincide")
            }
            Error::BadGenerationParams(msg) => write!(f, "bad generation parameters: {msg}"),
            Error::NonFiniteSample { x, y } => {
                write!(f, "non-finite function sample at ({x}, {y})")
            }
            Error::MeshMismatch => write!(f, "fields belong to different meshes"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} entries, got {got}")
            }
            Error::TensorNotSpd { cell } => {
                write!(f, "material tensor at the centroid of cell {cell} is not SPD")
            }
            Error::DegenerateCell { cell } => write!(
                f,
                "cell {cell} has degenerate face geometry (singular normal system)"
            ),
            Error::FactorizationFailed { index, pivot } => write!(
                f,
                "sparse Cholesky failed at index {index} (pivot {pivot:e}); matrix is not SPD"
            ),
            Error::SolveFailed { iterations, residual } => write!(
                f,
                "linear solve stalled after {iterations} iterations (relative residual {residual:e})"
            ),
            Error::EigenIterationFailed { iterations } => {
                write!(f, "eigenvalue iteration did not converge in {iterations} iterations")
            }
            Error::BadConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NewtonFailed { step, iterations, residual } => write!(
                f,
                "Newton failed at step {step} after {iterations} iterations (residual {residual:e})"
            ),
            Error::IndefiniteJacobian { cell, curvature } => write!(
                f,
                "midpoint Jacobian is indefinite: f''={curvature:e} at cell {cell} (below -4/tau^2)"
            ),
            Error::InconsistentDerivatives { which, at, relative_error } => write!(
                f,
                "{which} disagrees with a centered difference at s={at} (relative error {relative_error:e})"
            ),
            Error::UnsupportedProblem(what) => write!(f, "problem data missing: {what}"),
            Error::StepFailed { step, time, source } => {
                write!(f, "time step {step} (t={time}) failed: {source}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
