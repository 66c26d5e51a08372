//! Assembly and application of the mimetic operators.
//!
//! The divergence is discretized directly from the divergence theorem,
//! `(DIV w)_c = (1/|c|) sum_f alpha_{c,f} |f| w_f`, and acts as the primary
//! operator. The flux inner product is a sparse SPD matrix assembled from
//! per-cell blocks
//!
//! ```text
//! M_c = (1/|c|) R K^-1 R^T + lambda (I - N (N^T N)^-1 N^T),
//! lambda = trace((1/|c|) R K^-1 R^T) / #faces,
//! ```
//!
//! with `R` rows `alpha |f| (x_f - x_c)^T` and `N` rows `(K n_f)^T`. Each
//! block satisfies `M_c N = R` exactly (consistency) and is spectrally
//! equivalent to `|c| I` (stability). The gradient is defined by duality,
//! `GRAD = -M_F^-1 DIV^T M_C`, and the discrete Laplacian is `DIV GRAD`;
//! with homogeneous Dirichlet data no boundary unknowns are needed and the
//! Laplacian is negative definite.

use crate::error::Error;
use crate::fmath;
use crate::mesh::PolyMesh;
use crate::smallmat::{tensor_inverse, tensor_is_spd, SmallSym, Tensor2};
use crate::spaces::{CellField, FluxField};
use crate::sparse::{conjugate_gradient, CsrMatrix, SkylineCholesky};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How linear systems with the flux mass matrix are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Reuse the sparse Cholesky factorization (exact up to roundoff).
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

/// Tolerances for the linear solves behind `GRAD`, the discrete Laplacian
/// and the energy projection.
#[derive(Debug, Clone, Copy)]
pub struct LinearSolveConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub kind: SolverKind,
}

impl LinearSolveConfig {
    pub fn new(rel_tol: f64, max_iters: usize, kind: SolverKind) -> Result<Self, Error> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::BadConfig(format!(
                "relative tolerance must lie in (0, 1), got {rel_tol:e}"
            )));
        }
        if max_iters == 0 {
            return Err(Error::BadConfig("max_iters must be at least 1".into()));
        }
        Ok(LinearSolveConfig {
            rel_tol,
            max_iters,
            kind,
        })
    }

    pub fn direct() -> Self {
        LinearSolveConfig {
            rel_tol: 1e-12,
            max_iters: 20_000,
            kind: SolverKind::Direct,
        }
    }

    pub fn conjugate_gradient() -> Self {
        LinearSolveConfig {
            rel_tol: 1e-12,
            max_iters: 20_000,
            kind: SolverKind::ConjugateGradient,
        }
    }
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig::direct()
    }
}

/// Geometry of one face as seen from a cell.
#[derive(Debug, Clone, Copy)]
pub struct FaceGeometry {
    pub length: f64,
    pub midpoint: [f64; 2],
    pub normal: [f64; 2],
    /// +1 when the face normal is outward for the cell.
    pub orientation: f64,
}

/// Local flux mass block of one cell, with its global face indices.
#[derive(Debug, Clone)]
pub struct LocalFluxMatrix {
    pub faces: Vec<usize>,
    pub matrix: SmallSym,
}

/// Builds the local flux matrix of a single cell.
///
/// Fails when the face-normal system `N^T N` is singular, which only
/// happens for degenerate cell geometry (all normals parallel).
pub fn local_flux_matrix(
    cell: usize,
    area: f64,
    centroid: [f64; 2],
    faces: &[FaceGeometry],
    k: &Tensor2,
) -> Result<SmallSym, Error> {
    let m = faces.len();
    let k_inv = tensor_inverse(k);
    let mut r_rows: Vec<[f64; 2]> = Vec::with_capacity(m);
    let mut n_rows: Vec<[f64; 2]> = Vec::with_capacity(m);
    for fg in faces {
        let w = fg.orientation * fg.length;
        r_rows.push([
            w * (fg.midpoint[0] - centroid[0]),
            w * (fg.midpoint[1] - centroid[1]),
        ]);
        n_rows.push([
            k[0][0] * fg.normal[0] + k[0][1] * fg.normal[1],
            k[1][0] * fg.normal[0] + k[1][1] * fg.normal[1],
        ]);
    }

    // consistent part (1/|c|) R K^-1 R^T and its trace
    let mut mat = SmallSym::zeros(m);
    let mut trace = 0.0;
    for i in 0..m {
        let kri = [
            k_inv[0][0] * r_rows[i][0] + k_inv[0][1] * r_rows[i][1],
            k_inv[1][0] * r_rows[i][0] + k_inv[1][1] * r_rows[i][1],
        ];
        for j in 0..m {
            let v = (kri[0] * r_rows[j][0] + kri[1] * r_rows[j][1]) / area;
            mat.set(i, j, v);
        }
        trace += mat.get(i, i);
    }
    let lambda = trace / m as f64;

    // stabilization: lambda * (I - N (N^T N)^-1 N^T)
    let mut ntn = [[0.0f64; 2]; 2];
    for row in &n_rows {
        for a in 0..2 {
            for b in 0..2 {
                ntn[a][b] += row[a] * row[b];
            }
        }
    }
    let det = ntn[0][0] * ntn[1][1] - ntn[0][1] * ntn[1][0];
    let scale = ntn[0][0] + ntn[1][1];
    if !(det > 1e-14 * scale * scale) {
        return Err(Error::DegenerateCell { cell });
    }
    let ntn_inv = [
        [ntn[1][1] / det, -ntn[0][1] / det],
        [-ntn[1][0] / det, ntn[0][0] / det],
    ];
    for i in 0..m {
        let pi = [
            ntn_inv[0][0] * n_rows[i][0] + ntn_inv[0][1] * n_rows[i][1],
            ntn_inv[1][0] * n_rows[i][0] + ntn_inv[1][1] * n_rows[i][1],
        ];
        for j in 0..m {
            let nin_j = pi[0] * n_rows[j][0] + pi[1] * n_rows[j][1];
            let id = if i == j { 1.0 } else { 0.0 };
            let v = mat.get(i, j) + lambda * (id - nin_j);
            mat.set(i, j, v);
        }
    }
    Ok(mat)
}

/// The assembled mimetic operator set for one mesh and material tensor.
///
/// Immutable after assembly; the flux factorization is computed once and
/// reused by every solve.
#[derive(Debug, Clone)]
pub struct MimeticOperators {
    token: u64,
    n_cells: usize,
    n_faces: usize,
    cell_areas: Vec<f64>,
    /// Per cell: (face index, alpha * |f|).
    cell_faces: Vec<Vec<(usize, f64)>>,
    flux_mass: CsrMatrix,
    flux_chol: SkylineCholesky,
    flux_inv_diag: Vec<f64>,
    div: CsrMatrix,
    local: Vec<LocalFluxMatrix>,
    k_cells: Vec<Tensor2>,
}

impl MimeticOperators {
    /// Samples `K` at cell centroids, builds every local flux block and the
    /// global sparse matrices, and factorizes the flux mass matrix.
    pub fn assemble(mesh: &PolyMesh, k: impl Fn(f64, f64) -> Tensor2) -> Result<Self, Error> {
        let n_cells = mesh.n_cells();
        let n_faces = mesh.n_faces();

        let mut k_cells = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let xc = mesh.cell_centroid(c);
            let kc = k(xc[0], xc[1]);
            if !tensor_is_spd(&kc) {
                return Err(Error::TensorNotSpd { cell: c });
            }
            k_cells.push(kc);
        }

        let mut local = Vec::with_capacity(n_cells);
        let mut mass_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut div_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut cell_faces: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            let geom: Vec<FaceGeometry> = mesh
                .cell_faces(c)
                .iter()
                .map(|&(fid, alpha)| {
                    let face = mesh.face(fid);
                    FaceGeometry {
                        length: face.length,
                        midpoint: face.midpoint,
                        normal: face.normal,
                        orientation: alpha,
                    }
                })
                .collect();
            let block = local_flux_matrix(
                c,
                mesh.cell_area(c),
                mesh.cell_centroid(c),
                &geom,
                &k_cells[c],
            )?;
            let face_ids: Vec<usize> = mesh.cell_faces(c).iter().map(|&(f, _)| f).collect();
            for (i, &fi) in face_ids.iter().enumerate() {
                for (j, &fj) in face_ids.iter().enumerate() {
                    mass_triplets.push((fi, fj, block.get(i, j)));
                }
            }
            let area = mesh.cell_area(c);
            let mut signed = Vec::with_capacity(face_ids.len());
            for &(fid, alpha) in mesh.cell_faces(c) {
                let slen = alpha * mesh.face(fid).length;
                div_triplets.push((c, fid, slen / area));
                signed.push((fid, slen));
            }
            cell_faces.push(signed);
            local.push(LocalFluxMatrix {
                faces: face_ids,
                matrix: block,
            });
        }

        let flux_mass = CsrMatrix::from_triplets(n_faces, n_faces, &mut mass_triplets);
        let div = CsrMatrix::from_triplets(n_cells, n_faces, &mut div_triplets);
        let flux_chol = SkylineCholesky::factor(&flux_mass)?;
        let flux_inv_diag = flux_mass.inverse_diagonal();

        Ok(MimeticOperators {
            token: mesh.token(),
            n_cells,
            n_faces,
            cell_areas: mesh.cell_areas(),
            cell_faces,
            flux_mass,
            flux_chol,
            flux_inv_diag,
            div,
            local,
            k_cells,
        })
    }

    pub fn token(&self) -> u64 {
        self.token
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_faces(&self) -> usize {
        self.n_faces
    }

    /// Diagonal of the cell mass matrix (the cell areas).
    pub fn cell_areas(&self) -> &[f64] {
        &self.cell_areas
    }

    /// The assembled flux mass matrix.
    pub fn flux_mass(&self) -> &CsrMatrix {
        &self.flux_mass
    }

    /// The divergence matrix with entries `alpha_{c,f} |f| / |c|`.
    pub fn div_matrix(&self) -> &CsrMatrix {
        &self.div
    }

    /// Per-cell local flux blocks (global face indices plus dense block).
    pub fn local_matrices(&self) -> &[LocalFluxMatrix] {
        &self.local
    }

    /// Material tensor sample of cell `c`.
    pub fn tensor_at(&self, c: usize) -> &Tensor2 {
        &self.k_cells[c]
    }

    fn check_cell_field(&self, a: &CellField) -> Result<(), Error> {
        if a.token() != self.token {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    fn check_flux_field(&self, a: &FluxField) -> Result<(), Error> {
        if a.token() != self.token {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// Cell inner product `[a, b] = sum_c |c| a_c b_c` (same quadrature as
    /// the mesh-level one; duplicated here so state-space code does not
    /// need to carry the mesh around).
    pub fn inner_cell(&self, a: &CellField, b: &CellField) -> Result<f64, Error> {
        self.check_cell_field(a)?;
        self.check_cell_field(b)?;
        let mut acc = 0.0;
        for c in 0..self.n_cells {
            acc += self.cell_areas[c] * (a.values()[c] * b.values()[c]);
        }
        Ok(acc)
    }

    /// Norm induced by [`MimeticOperators::inner_cell`].
    pub fn norm_cell(&self, a: &CellField) -> Result<f64, Error> {
        Ok(fmath::sqrt(self.inner_cell(a, a)?))
    }

    /// Flux inner product `[a, b] = a^T M_F b`, evaluated over the upper
    /// triangle so the result is bit-identical under argument swap.
    pub fn inner_flux(&self, a: &FluxField, b: &FluxField) -> Result<f64, Error> {
        self.check_flux_field(a)?;
        self.check_flux_field(b)?;
        let av = a.values();
        let bv = b.values();
        let mut acc = 0.0;
        for (r, c, v) in self.flux_mass.triplets() {
            if c > r {
                acc += v * (av[r] * bv[c] + av[c] * bv[r]);
            } else if c == r {
                acc += v * (av[r] * bv[r]);
            }
        }
        Ok(acc)
    }

    /// Solves `M_F x = rhs` by the configured method.
    pub fn solve_flux_mass(&self, rhs: &[f64], cfg: &LinearSolveConfig) -> Result<Vec<f64>, Error> {
        match cfg.kind {
            SolverKind::Direct => Ok(self.flux_chol.solve(rhs)),
            SolverKind::ConjugateGradient => {
                let mut x = vec![0.0; rhs.len()];
                conjugate_gradient(
                    |v, out| {
                        self.flux_mass.mul_vec(v, out);
                        Ok(())
                    },
                    rhs,
                    &mut x,
                    None,
                    Some(&self.flux_inv_diag),
                    cfg.rel_tol,
                    cfg.max_iters,
                )?;
                Ok(x)
            }
        }
    }

    pub(crate) fn divergence_raw(&self, w: &[f64], out: &mut [f64]) {
        for c in 0..self.n_cells {
            let mut acc = 0.0;
            for &(fid, slen) in &self.cell_faces[c] {
                acc += slen * w[fid];
            }
            out[c] = acc / self.cell_areas[c];
        }
    }

    pub(crate) fn gradient_raw(
        &self,
        u: &[f64],
        cfg: &LinearSolveConfig,
    ) -> Result<Vec<f64>, Error> {
        // rhs = -DIV^T M_C u, i.e. rhs_f = -sum_c alpha |f| u_c
        let mut rhs = vec![0.0; self.n_faces];
        for c in 0..self.n_cells {
            let uc = u[c];
            for &(fid, slen) in &self.cell_faces[c] {
                rhs[fid] -= slen * uc;
            }
        }
        self.solve_flux_mass(&rhs, cfg)
    }

    pub(crate) fn laplacian_raw(
        &self,
        u: &[f64],
        cfg: &LinearSolveConfig,
    ) -> Result<Vec<f64>, Error> {
        let g = self.gradient_raw(u, cfg)?;
        let mut out = vec![0.0; self.n_cells];
        self.divergence_raw(&g, &mut out);
        Ok(out)
    }

    /// `(DIV w)_c = (1/|c|) sum_f alpha_{c,f} |f| w_f`.
    pub fn divergence(&self, w: &FluxField) -> Result<CellField, Error> {
        self.check_flux_field(w)?;
        let mut out = vec![0.0; self.n_cells];
        self.divergence_raw(w.values(), &mut out);
        Ok(CellField::from_raw(out, self.token))
    }

    /// `GRAD u = -M_F^-1 DIV^T M_C u` (duality-derived gradient).
    pub fn gradient(&self, u: &CellField, cfg: &LinearSolveConfig) -> Result<FluxField, Error> {
        self.check_cell_field(u)?;
        Ok(FluxField::from_raw(
            self.gradient_raw(u.values(), cfg)?,
            self.token,
        ))
    }

    /// Discrete Laplacian `DIV GRAD u`.
    pub fn laplacian(&self, u: &CellField, cfg: &LinearSolveConfig) -> Result<CellField, Error> {
        self.check_cell_field(u)?;
        Ok(CellField::from_raw(
            self.laplacian_raw(u.values(), cfg)?,
            self.token,
        ))
    }

    /// Solves the discrete diffusion problem `LAP p = g` by conjugate
    /// gradients in the cell inner product (the Laplacian is never
    /// assembled). With `g = (div K grad u)^I` this returns the energy
    /// projection of `u`.
    pub fn energy_projection(
        &self,
        g: &CellField,
        cfg: &LinearSolveConfig,
    ) -> Result<CellField, Error> {
        self.check_cell_field(g)?;
        // -LAP is SPD in the cell inner product; solve -LAP p = -g
        let rhs: Vec<f64> = g.values().iter().map(|&v| -v).collect();
        let mut p = vec![0.0; self.n_cells];
        conjugate_gradient(
            |x, out| {
                let lap = self.laplacian_raw(x, cfg)?;
                for (o, l) in out.iter_mut().zip(&lap) {
                    *o = -l;
                }
                Ok(())
            },
            &rhs,
            &mut p,
            Some(&self.cell_areas),
            None,
            cfg.rel_tol,
            cfg.max_iters,
        )?;
        Ok(CellField::from_raw(p, self.token))
    }

    /// Extreme eigenvalues of `-LAP`: the smallest by inverse iteration,
    /// the largest by power iteration, each to 1e-6 relative stagnation.
    pub fn spectral_extremes(&self, cfg: &LinearSolveConfig) -> Result<(f64, f64), Error> {
        const EIG_TOL: f64 = 1e-6;
        const MAX_ITERS: usize = 20_000;
        let n = self.n_cells;
        let wdot = |a: &[f64], b: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                s += self.cell_areas[i] * a[i] * b[i];
            }
            s
        };

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
        let mut start = vec![0.0; n];
        for v in start.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let nrm = fmath::sqrt(wdot(&start, &start));
        for v in start.iter_mut() {
            *v /= nrm;
        }

        // power iteration for the largest eigenvalue
        let mut x = start.clone();
        let mut lambda_max = 0.0;
        let mut converged = false;
        for _ in 0..MAX_ITERS {
            let lap = self.laplacian_raw(&x, cfg)?;
            let y: Vec<f64> = lap.iter().map(|&v| -v).collect();
            let lambda = wdot(&y, &x);
            let nrm = fmath::sqrt(wdot(&y, &y));
            if !(nrm > 0.0) {
                return Err(Error::EigenIterationFailed {
                    iterations: MAX_ITERS,
                });
            }
            x = y.iter().map(|&v| v / nrm).collect();
            if fmath::abs(lambda - lambda_max) <= EIG_TOL * fmath::abs(lambda) {
                lambda_max = lambda;
                converged = true;
                break;
            }
            lambda_max = lambda;
        }
        if !converged {
            return Err(Error::EigenIterationFailed {
                iterations: MAX_ITERS,
            });
        }

        // inverse iteration for the smallest eigenvalue
        let mut x = start;
        let mut lambda_min = 0.0;
        converged = false;
        for _ in 0..MAX_ITERS {
            let mut y = vec![0.0; n];
            conjugate_gradient(
                |v, out| {
                    let lap = self.laplacian_raw(v, cfg)?;
                    for (o, l) in out.iter_mut().zip(&lap) {
                        *o = -l;
                    }
                    Ok(())
                },
                &x,
                &mut y,
                Some(&self.cell_areas),
                None,
                cfg.rel_tol,
                cfg.max_iters,
            )?;
            // Rayleigh quotient [Ay, y]/[y, y] = [x, y]/[y, y]
            let yy = wdot(&y, &y);
            if !(yy > 0.0) {
                return Err(Error::EigenIterationFailed {
                    iterations: MAX_ITERS,
                });
            }
            let lambda = wdot(&x, &y) / yy;
            let nrm = fmath::sqrt(yy);
            x = y.iter().map(|&v| v / nrm).collect();
            if fmath::abs(lambda - lambda_min) <= EIG_TOL * fmath::abs(lambda) {
                lambda_min = lambda;
                converged = true;
                break;
            }
            lambda_min = lambda;
        }
        if !converged {
            return Err(Error::EigenIterationFailed {
                iterations: MAX_ITERS,
            });
        }

        Ok((lambda_min, lambda_max))
    }

    /// Extremes of `eig(M_c) / |c|` over all cells: the observed stability
    /// constants of the local flux family.
    pub fn stability_extremes(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (c, block) in self.local.iter().enumerate() {
            let (a, b) = block.matrix.eigen_range();
            let area = self.cell_areas[c];
            lo = lo.min(a / area);
            hi = hi.max(b / area);
        }
        (lo, hi)
    }

    /// Largest relative defects of the local algebraic identities,
    /// `max_c |M_c N - R|` and `max_c |R^T N - |c| K|`, both scaled by the
    /// magnitude of their right-hand side.
    pub fn consistency_defects(&self, mesh: &PolyMesh) -> Result<(f64, f64), Error> {
        if mesh.token() != self.token {
            return Err(Error::MeshMismatch);
        }
        let mut mn_defect = 0.0f64;
        let mut rtn_defect = 0.0f64;
        for c in 0..self.n_cells {
            let block = &self.local[c];
            let m = block.faces.len();
            let k = &self.k_cells[c];
            let xc = mesh.cell_centroid(c);
            let area = mesh.cell_area(c);
            let mut r_rows: Vec<[f64; 2]> = Vec::with_capacity(m);
            let mut n_rows: Vec<[f64; 2]> = Vec::with_capacity(m);
            for &(fid, alpha) in mesh.cell_faces(c) {
                let face = mesh.face(fid);
                let w = alpha * face.length;
                r_rows.push([
                    w * (face.midpoint[0] - xc[0]),
                    w * (face.midpoint[1] - xc[1]),
                ]);
                n_rows.push([
                    k[0][0] * face.normal[0] + k[0][1] * face.normal[1],
                    k[1][0] * face.normal[0] + k[1][1] * face.normal[1],
                ]);
            }
            let r_scale = r_rows
                .iter()
                .flat_map(|r| r.iter())
                .fold(0.0f64, |acc, &v| acc.max(fmath::abs(v)));
            for col in 0..2 {
                for i in 0..m {
                    let mut mn = 0.0;
                    for j in 0..m {
                        mn += block.matrix.get(i, j) * n_rows[j][col];
                    }
                    mn_defect = mn_defect.max(fmath::abs(mn - r_rows[i][col]) / r_scale);
                }
            }
            let k_scale = area
                * k.iter()
                    .flat_map(|row| row.iter())
                    .fold(0.0f64, |acc, &v| acc.max(fmath::abs(v)));
            for a in 0..2 {
                for b in 0..2 {
                    let mut rtn = 0.0;
                    for i in 0..m {
                        rtn += r_rows[i][a] * n_rows[i][b];
                    }
                    rtn_defect = rtn_defect.max(fmath::abs(rtn - area * k[a][b]) / k_scale);
                }
            }
        }
        Ok((mn_defect, rtn_defect))
    }
}
