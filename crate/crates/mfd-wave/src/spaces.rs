//! Discrete function spaces: cellwise-constant pressures and face-normal
//! fluxes, their interpolation operators, and the cell inner product.
//!
//! A [`CellField`] holds one value per cell (the space of piecewise
//! constants), a [`FluxField`] one signed normal component per face. Both
//! remember the identity token of the mesh they were built on so that
//! cross-mesh mixups surface as errors instead of silent garbage.

use crate::error::Error;
use crate::fmath;
use crate::mesh::PolyMesh;
use alloc::vec;
use alloc::vec::Vec;

/// Element of the cell space: one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    values: Vec<f64>,
    token: u64,
}

/// Element of the flux space: one normal component per face, measured
/// along the face's global unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    values: Vec<f64>,
    token: u64,
}

macro_rules! field_common {
    ($ty:ident) => {
        impl $ty {
            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn token(&self) -> u64 {
                self.token
            }

            pub(crate) fn from_raw(values: Vec<f64>, token: u64) -> Self {
                $ty { values, token }
            }

            /// self <- self + scale * other
            pub fn axpy(&mut self, scale: f64, other: &Self) {
                debug_assert_eq!(self.token, other.token);
                for (a, b) in self.values.iter_mut().zip(&other.values) {
                    *a += scale * b;
                }
            }

            pub fn scale(&mut self, factor: f64) {
                for a in self.values.iter_mut() {
                    *a *= factor;
                }
            }

            /// (self + other) / 2, the midpoint state.
            pub fn midpoint(&self, other: &Self) -> Self {
                debug_assert_eq!(self.token, other.token);
                let values = self
                    .values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                $ty {
                    values,
                    token: self.token,
                }
            }
        }
    };
}

field_common!(CellField);
field_common!(FluxField);

impl CellField {
    /// Applies a scalar map entrywise (used for the nonlinearity, which
    /// acts componentwise on cell values).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellField {
        CellField {
            values: self.values.iter().map(|&v| f(v)).collect(),
            token: self.token,
        }
    }
}

fn check_tokens(a: u64, b: u64) -> Result<(), Error> {
    if a == b {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

impl PolyMesh {
    /// Zero cell field on this mesh.
    pub fn zero_cell_field(&self) -> CellField {
        CellField::from_raw(vec![0.0; self.n_cells()], self.token())
    }

    /// Zero flux field on this mesh.
    pub fn zero_flux_field(&self) -> FluxField {
        FluxField::from_raw(vec![0.0; self.n_faces()], self.token())
    }

    /// Wraps raw per-cell values as a field, checking the length.
    pub fn cell_field_from(&self, values: Vec<f64>) -> Result<CellField, Error> {
        if values.len() != self.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells(),
                got: values.len(),
            });
        }
        Ok(CellField::from_raw(values, self.token()))
    }

    /// Wraps raw per-face values as a flux field, checking the length.
    pub fn flux_field_from(&self, values: Vec<f64>) -> Result<FluxField, Error> {
        if values.len() != self.n_faces() {
            return Err(Error::DimensionMismatch {
                expected: self.n_faces(),
                got: values.len(),
            });
        }
        Ok(FluxField::from_raw(values, self.token()))
    }

    /// Integrates `g` over cell `c` with the centroid-fan midpoint rule
    /// (exact for polynomials of degree <= 2).
    pub fn integrate_over_cell(
        &self,
        c: usize,
        g: &impl Fn(f64, f64) -> f64,
    ) -> Result<f64, Error> {
        let xc = self.cell_centroid(c);
        let loop_ = &self.cell_loops()[c];
        let verts = self.vertices();
        let mut acc = 0.0;
        for k in 0..loop_.len() {
            let a = verts[loop_[k]];
            let b = verts[loop_[(k + 1) % loop_.len()]];
            // signed triangle (xc, a, b); signed areas make the fan exact
            // also on non-convex cells
            let tarea = 0.5 * ((a[0] - xc[0]) * (b[1] - xc[1]) - (b[0] - xc[0]) * (a[1] - xc[1]));
            if tarea == 0.0 {
                continue;
            }
            let mids = [
                [0.5 * (xc[0] + a[0]), 0.5 * (xc[1] + a[1])],
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                [0.5 * (b[0] + xc[0]), 0.5 * (b[1] + xc[1])],
            ];
            let mut tri = 0.0;
            for m in mids {
                let v = g(m[0], m[1]);
                if !v.is_finite() {
                    return Err(Error::NonFiniteSample { x: m[0], y: m[1] });
                }
                tri += v;
            }
            acc += tarea * tri / 3.0;
        }
        Ok(acc)
    }

    /// Integrates `g` over the whole mesh with the same quadrature.
    pub fn integrate(&self, g: &impl Fn(f64, f64) -> f64) -> Result<f64, Error> {
        let mut acc = 0.0;
        for c in 0..self.n_cells() {
            acc += self.integrate_over_cell(c, g)?;
        }
        Ok(acc)
    }

    /// Interpolates a scalar function into the cell space: component `c`
    /// is the cell average of `u`, computed with the degree-2 quadrature.
    pub fn interpolate_scalar(&self, u: impl Fn(f64, f64) -> f64) -> Result<CellField, Error> {
        let mut values = Vec::with_capacity(self.n_cells());
        for c in 0..self.n_cells() {
            values.push(self.integrate_over_cell(c, &u)? / self.cell_area(c));
        }
        Ok(CellField::from_raw(values, self.token()))
    }

    /// Interpolates a vector function into the flux space: component `f`
    /// is the face average of `w . n_f`, by 2-point Gauss per face (exact
    /// for cubic normal traces).
    pub fn interpolate_flux(&self, w: impl Fn(f64, f64) -> (f64, f64)) -> Result<FluxField, Error> {
        let inv_sqrt3 = 1.0 / fmath::sqrt(3.0);
        let verts = self.vertices();
        let mut values = Vec::with_capacity(self.n_faces());
        for face in self.faces() {
            let a = verts[face.vertices[0]];
            let b = verts[face.vertices[1]];
            let mid = face.midpoint;
            let half = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
            let mut acc = 0.0;
            for s in [-inv_sqrt3, inv_sqrt3] {
                let p = [mid[0] + s * half[0], mid[1] + s * half[1]];
                let (wx, wy) = w(p[0], p[1]);
                if !(wx.is_finite() && wy.is_finite()) {
                    return Err(Error::NonFiniteSample { x: p[0], y: p[1] });
                }
                acc += wx * face.normal[0] + wy * face.normal[1];
            }
            values.push(0.5 * acc);
        }
        Ok(FluxField::from_raw(values, self.token()))
    }

    /// Cell inner product `[a, b] = sum_c |c| a_c b_c`.
    pub fn inner_cell(&self, a: &CellField, b: &CellField) -> Result<f64, Error> {
        check_tokens(a.token(), self.token())?;
        check_tokens(b.token(), self.token())?;
        let mut acc = 0.0;
        for c in 0..self.n_cells() {
            // area * (a*b) keeps the sum bit-identical under argument swap
            acc += self.cell_area(c) * (a.values()[c] * b.values()[c]);
        }
        Ok(acc)
    }

    /// Norm induced by [`PolyMesh::inner_cell`].
    pub fn norm_cell(&self, a: &CellField) -> Result<f64, Error> {
        Ok(fmath::sqrt(self.inner_cell(a, a)?))
    }

    /// `||a - b|| / ||b||` in the cell norm; falls back to the absolute
    /// norm when the reference is zero.
    pub fn relative_error_cell(&self, a: &CellField, b: &CellField) -> Result<f64, Error> {
        check_tokens(a.token(), self.token())?;
        check_tokens(b.token(), self.token())?;
        let mut diff = a.clone();
        diff.axpy(-1.0, b);
        let err = self.norm_cell(&diff)?;
        let reference = self.norm_cell(b)?;
        Ok(if reference == 0.0 {
            err
        } else {
            err / reference
        })
    }

    /// Per-cell areas (the diagonal of the cell mass matrix).
    pub fn cell_areas(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|c| self.cell_area(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::PolyMesh;

    #[test]
    fn constant_interpolates_to_one() {
        let mesh = PolyMesh::unit_square();
        let u = mesh.interpolate_scalar(|_, _| 1.0).unwrap();
        assert!((u.values()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_interpolates_to_centroid_value() {
        let mesh = PolyMesh::unit_square();
        let u = mesh.interpolate_scalar(|x, _| x).unwrap();
        assert!((u.values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_cell_average_is_exact() {
        // integral of x^2 over the unit square is 1/3
        let mesh = PolyMesh::unit_square();
        let u = mesh.interpolate_scalar(|x, _| x * x).unwrap();
        assert!((u.values()[0] - 1.0 / 3.0).abs() < 1e-14);
        let v = mesh.interpolate_scalar(|x, y| x * y).unwrap();
        assert!((v.values()[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn non_finite_sample_is_an_error() {
        let mesh = PolyMesh::unit_square();
        let err = mesh.interpolate_scalar(|x, _| 1.0 / (x - x)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { .. }));
    }

    #[test]
    fn constant_flux_on_unit_square() {
        let mesh = PolyMesh::unit_square();
        let w = mesh.interpolate_flux(|_, _| (1.0, 0.0)).unwrap();
        for (face, &v) in mesh.faces().iter().zip(w.values()) {
            let expected = face.normal[0];
            assert!((v - expected).abs() < 1e-15);
        }
        let zero = mesh.interpolate_flux(|_, _| (0.0, 0.0)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inner_cell_trivials() {
        let mesh = PolyMesh::unit_square();
        let one = mesh.interpolate_scalar(|_, _| 1.0).unwrap();
        let zero = mesh.zero_cell_field();
        assert!((mesh.inner_cell(&one, &one).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mesh.inner_cell(&one, &zero).unwrap(), 0.0);
    }

    #[test]
    fn inner_cell_is_bit_symmetric() {
        let mesh = crate::voronoi::generate_voronoi(25, 1, 9, crate::mesh::Rect::UNIT).unwrap();
        let a = mesh.interpolate_scalar(|x, y| (x * 3.1 + y).sin()).unwrap();
        let b = mesh.interpolate_scalar(|x, y| x * x - 0.3 * y).unwrap();
        let ab = mesh.inner_cell(&a, &b).unwrap();
        let ba = mesh.inner_cell(&b, &a).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
    }

    #[test]
    fn relative_error_fallback_on_zero_reference() {
        let mesh = PolyMesh::unit_square();
        let zero = mesh.zero_cell_field();
        assert_eq!(mesh.relative_error_cell(&zero, &zero).unwrap(), 0.0);
        let two = mesh.cell_field_from(vec![2.0]).unwrap();
        let one = mesh.cell_field_from(vec![1.0]).unwrap();
        assert!((mesh.relative_error_cell(&two, &one).unwrap() - 1.0).abs() < 1e-15);
        // absolute norm when the reference vanishes
        assert!((mesh.relative_error_cell(&two, &zero).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mesh_mismatch_is_detected() {
        let a = PolyMesh::unit_square();
        let b = crate::voronoi::generate_voronoi(4, 0, 3, crate::mesh::Rect::UNIT).unwrap();
        let fa = a.zero_cell_field();
        let fb = b.zero_cell_field();
        assert!(matches!(a.inner_cell(&fa, &fb), Err(Error::MeshMismatch)));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let mesh = PolyMesh::unit_square();
        assert!(matches!(
            mesh.cell_field_from(vec![1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }
}
