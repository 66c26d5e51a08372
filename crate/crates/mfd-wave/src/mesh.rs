//! Polygonal meshes with oriented faces.
//!
//! A [`PolyMesh`] is built from a vertex table plus counter-clockwise cell
//! loops; faces, measures, centroids and orientation signs are all derived.
//! Interior face normals point from the lower-indexed to the higher-indexed
//! adjacent cell, boundary normals point outward, so the orientation sign
//! `alpha` of a face with respect to a cell is `+1` exactly when the face
//! normal is outward for that cell.

use crate::error::Error;
use crate::fmath;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Axis-aligned rectangle, the generation domain for Voronoi meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        fmath::hypot(self.width(), self.height())
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
            || !self.width().is_finite()
            || !self.height().is_finite()
    }
}

/// One mesh face (a straight edge between two vertices).
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Endpoint vertex indices.
    pub vertices: [usize; 2],
    /// Unit normal with the global sign convention.
    pub normal: [f64; 2],
    /// Midpoint of the segment.
    pub midpoint: [f64; 2],
    /// Segment length.
    pub length: f64,
    /// Adjacent cells: the cell the normal points away from, then (for
    /// interior faces) the cell it points into.
    pub cells: (usize, Option<usize>),
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

#[derive(Debug, Clone)]
struct CellGeometry {
    area: f64,
    centroid: [f64; 2],
    diameter: f64,
    /// (face index, orientation sign alpha) in loop order.
    faces: Vec<(usize, f64)>,
}

/// Immutable polygonal mesh.
#[derive(Debug, Clone)]
pub struct PolyMesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    faces: Vec<Face>,
    geometry: Vec<CellGeometry>,
    h: f64,
    token: u64,
}

/// Shape-regularity report. Ratios are relative to the cell diameter:
/// `inradius_ratio = (2|c| / perimeter) / h_c` approximates the inscribed
/// radius fraction, `separation_ratio` is the least vertex distance over
/// `h_c`. Star-shapedness is not computed exactly; a convexity flag stands
/// in for it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshQualityReport {
    pub inradius_ratio: Vec<f64>,
    pub separation_ratio: Vec<f64>,
    pub convex: Vec<bool>,
    /// Cells whose ratios fall below the thresholds.
    pub flagged: Vec<usize>,
    pub min_inradius_ratio: f64,
    pub min_separation_ratio: f64,
    pub inradius_threshold: f64,
    pub separation_threshold: f64,
}

/// Relative tolerance for the per-cell geometric exactness identity
/// `sum_f alpha |f| (x_f - x_c) n_f^T = |c| I`.
pub const GEOMETRIC_IDENTITY_TOL: f64 = 1e-12;

const DEFAULT_INRADIUS_THRESHOLD: f64 = 1e-3;
const DEFAULT_SEPARATION_THRESHOLD: f64 = 1e-3;

fn polygon_signed_area(vertices: &[[f64; 2]], loop_: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (k, &a) in loop_.iter().enumerate() {
        let b = loop_[(k + 1) % loop_.len()];
        let (pa, pb) = (vertices[a], vertices[b]);
        acc += pa[0] * pb[1] - pb[0] * pa[1];
    }
    0.5 * acc
}

fn polygon_centroid(vertices: &[[f64; 2]], loop_: &[usize], area: f64) -> [f64; 2] {
    let mut cx = 0.0;
    let mut cy = 0.0;
    for (k, &a) in loop_.iter().enumerate() {
        let b = loop_[(k + 1) % loop_.len()];
        let (pa, pb) = (vertices[a], vertices[b]);
        let cross = pa[0] * pb[1] - pb[0] * pa[1];
        cx += (pa[0] + pb[0]) * cross;
        cy += (pa[1] + pb[1]) * cross;
    }
    [cx / (6.0 * area), cy / (6.0 * area)]
}

fn mix(h: u64, v: u64) -> u64 {
    // FNV-1a style fold, good enough for a mesh identity token
    (h ^ v).wrapping_mul(0x100000001b3)
}

impl PolyMesh {
    /// Builds a mesh from vertices and counter-clockwise cell loops,
    /// deriving all face and cell geometry.
    ///
    /// Consecutive duplicate vertices in a loop are tolerated (they span no
    /// face) so that [`PolyMesh::validate`] can flag them; everything else
    /// that breaks the connectivity contract is rejected here.
    pub fn from_cells(vertices: Vec<[f64; 2]>, cells: Vec<Vec<usize>>) -> Result<Self, Error> {
        let n_vertices = vertices.len();
        for (ci, loop_) in cells.iter().enumerate() {
            for &v in loop_ {
                if v >= n_vertices {
                    return Err(Error::VertexIndexOutOfRange {
                        cell: ci,
                        index: v,
                        n_vertices,
                    });
                }
            }
            let mut distinct: Vec<usize> = loop_.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() < 3 {
                return Err(Error::CellTooSmall {
                    cell: ci,
                    n_vertices: distinct.len(),
                });
            }
            let area = polygon_signed_area(&vertices, loop_);
            if !(area > 0.0) {
                return Err(Error::NotCounterClockwise {
                    cell: ci,
                    signed_area: area,
                });
            }
        }

        // face table keyed by the sorted endpoint pair
        let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut cell_face_lists: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
        for (ci, loop_) in cells.iter().enumerate() {
            for (k, &a) in loop_.iter().enumerate() {
                let b = loop_[(k + 1) % loop_.len()];
                if a == b {
                    continue; // zero-length edge; validate() flags the cell
                }
                let key = (a.min(b), a.max(b));
                match table.get(&key) {
                    None => {
                        let id = faces.len();
                        table.insert(key, id);
                        let (pa, pb) = (vertices[a], vertices[b]);
                        let dx = pb[0] - pa[0];
                        let dy = pb[1] - pa[1];
                        let length = fmath::hypot(dx, dy);
                        // CCW loop: outward normal of this cell
                        let normal = [dy / length, -dx / length];
                        faces.push(Face {
                            vertices: [a, b],
                            normal,
                            midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                            length,
                            cells: (ci, None),
                        });
                        cell_face_lists[ci].push(id);
                    }
                    Some(&id) => {
                        let face = &mut faces[id];
                        if face.cells.1.is_some() || face.cells.0 == ci {
                            return Err(Error::EdgeOveruse {
                                vertices: key,
                                n_cells: 3,
                            });
                        }
                        face.cells.1 = Some(ci);
                        cell_face_lists[ci].push(id);
                    }
                }
            }
        }

        // normal convention: from lower-indexed towards higher-indexed cell
        for face in faces.iter_mut() {
            if let (c0, Some(c1)) = face.cells {
                if c0 > c1 {
                    face.normal = [-face.normal[0], -face.normal[1]];
                    face.cells = (c1, Some(c0));
                }
            }
        }

        let mut geometry = Vec::with_capacity(cells.len());
        let mut h = 0.0f64;
        for (ci, loop_) in cells.iter().enumerate() {
            let area = polygon_signed_area(&vertices, loop_);
            let centroid = polygon_centroid(&vertices, loop_, area);
            let mut diameter = 0.0f64;
            for i in 0..loop_.len() {
                for j in (i + 1)..loop_.len() {
                    let (p, q) = (vertices[loop_[i]], vertices[loop_[j]]);
                    diameter = diameter.max(fmath::hypot(q[0] - p[0], q[1] - p[1]));
                }
            }
            h = h.max(diameter);
            let face_signs = cell_face_lists[ci]
                .iter()
                .map(|&fid| {
                    let sign = if faces[fid].cells.0 == ci { 1.0 } else { -1.0 };
                    (fid, sign)
                })
                .collect();
            geometry.push(CellGeometry {
                area,
                centroid,
                diameter,
                faces: face_signs,
            });
        }

        let mut token = 0xcbf29ce484222325u64;
        token = mix(token, vertices.len() as u64);
        token = mix(token, cells.len() as u64);
        token = mix(token, faces.len() as u64);
        token = mix(token, h.to_bits());
        if let Some(first) = vertices.first() {
            token = mix(token, first[0].to_bits());
            token = mix(token, first[1].to_bits());
        }
        if let Some(last) = vertices.last() {
            token = mix(token, last[0].to_bits());
            token = mix(token, last[1].to_bits());
        }

        Ok(PolyMesh {
            vertices,
            cells,
            faces,
            geometry,
            h,
            token,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Mesh size: the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Cheap identity token used to detect cross-mesh field mixups.
    pub fn token(&self) -> u64 {
        self.token
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cell_loops(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        self.geometry[c].area
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        self.geometry[c].centroid
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        self.geometry[c].diameter
    }

    /// Faces bounding cell `c` as `(face index, alpha)` pairs.
    pub fn cell_faces(&self, c: usize) -> &[(usize, f64)] {
        &self.geometry[c].faces
    }

    /// Sum of all cell areas (the measure of the meshed domain).
    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Per-cell geometric exactness defect: the largest entry of
    /// `sum_f alpha |f| (x_f - x_c) n_f^T - |c| I`, relative to `|c|`.
    pub fn geometric_identity_defect(&self, c: usize) -> f64 {
        let geom = &self.geometry[c];
        let xc = geom.centroid;
        let mut m = [[0.0f64; 2]; 2];
        for &(fid, alpha) in &geom.faces {
            let face = &self.faces[fid];
            let d = [face.midpoint[0] - xc[0], face.midpoint[1] - xc[1]];
            let w = alpha * face.length;
            for r in 0..2 {
                for s in 0..2 {
                    m[r][s] += w * d[r] * face.normal[s];
                }
            }
        }
        m[0][0] -= geom.area;
        m[1][1] -= geom.area;
        let mut defect = 0.0f64;
        for row in &m {
            for &v in row {
                defect = defect.max(fmath::abs(v));
            }
        }
        defect / geom.area
    }

    /// Checks every structural invariant and produces the quality report.
    ///
    /// Fails with one message per offending cell or face when an invariant
    /// is violated; duplicate vertices and poor shape regularity are
    /// reported through the `flagged` list instead.
    pub fn validate(&self) -> Result<MeshQualityReport, Error> {
        let mut failures: Vec<String> = Vec::new();
        for (ci, geom) in self.geometry.iter().enumerate() {
            if !(geom.area > 0.0) {
                failures.push(format!("cell {ci}: non-positive area {:e}", geom.area));
            }
            let defect = self.geometric_identity_defect(ci);
            if defect > GEOMETRIC_IDENTITY_TOL {
                failures.push(format!(
                    "cell {ci}: geometric exactness identity defect {defect:e}"
                ));
            }
        }
        for (fi, face) in self.faces.iter().enumerate() {
            if !(face.length > 0.0) {
                failures.push(format!("face {fi}: non-positive length {:e}", face.length));
            }
            let n2 = face.normal[0] * face.normal[0] + face.normal[1] * face.normal[1];
            if fmath::abs(n2 - 1.0) > 1e-12 {
                failures.push(format!("face {fi}: normal is not unit ({n2:e})"));
            }
        }
        // orientation consistency across each interior face
        for (fi, face) in self.faces.iter().enumerate() {
            let (c0, c1) = face.cells;
            let a0 = self.alpha(c0, fi);
            match c1 {
                Some(c1) => {
                    let a1 = self.alpha(c1, fi);
                    if a0 * a1 != -1.0 {
                        failures.push(format!("face {fi}: interior orientation signs {a0} / {a1}"));
                    }
                }
                None => {
                    if a0 != 1.0 {
                        failures.push(format!("face {fi}: boundary sign {a0} is not +1"));
                    }
                }
            }
        }
        if !failures.is_empty() {
            return Err(Error::InvalidMesh { failures });
        }

        let n = self.n_cells();
        let mut inradius_ratio = Vec::with_capacity(n);
        let mut separation_ratio = Vec::with_capacity(n);
        let mut convex = Vec::with_capacity(n);
        let mut flagged = Vec::new();
        for ci in 0..n {
            let geom = &self.geometry[ci];
            let loop_ = &self.cells[ci];
            let perimeter: f64 = geom.faces.iter().map(|&(f, _)| self.faces[f].length).sum();
            let inr = (2.0 * geom.area / perimeter) / geom.diameter;
            let mut min_sep = f64::INFINITY;
            for i in 0..loop_.len() {
                for j in (i + 1)..loop_.len() {
                    if loop_[i] == loop_[j] {
                        min_sep = 0.0;
                        continue;
                    }
                    let (p, q) = (self.vertices[loop_[i]], self.vertices[loop_[j]]);
                    min_sep = min_sep.min(fmath::hypot(q[0] - p[0], q[1] - p[1]));
                }
            }
            let sep = min_sep / geom.diameter;
            let mut is_convex = true;
            let m = loop_.len();
            for k in 0..m {
                let p0 = self.vertices[loop_[k]];
                let p1 = self.vertices[loop_[(k + 1) % m]];
                let p2 = self.vertices[loop_[(k + 2) % m]];
                let cross = (p1[0] - p0[0]) * (p2[1] - p1[1]) - (p1[1] - p0[1]) * (p2[0] - p1[0]);
                if cross < -1e-12 * geom.diameter * geom.diameter {
                    is_convex = false;
                }
            }
            if inr < DEFAULT_INRADIUS_THRESHOLD || sep < DEFAULT_SEPARATION_THRESHOLD {
                flagged.push(ci);
            }
            inradius_ratio.push(inr);
            separation_ratio.push(sep);
            convex.push(is_convex);
        }
        let min_inradius_ratio = inradius_ratio.iter().copied().fold(f64::INFINITY, f64::min);
        let min_separation_ratio = separation_ratio
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Ok(MeshQualityReport {
            inradius_ratio,
            separation_ratio,
            convex,
            flagged,
            min_inradius_ratio,
            min_separation_ratio,
            inradius_threshold: DEFAULT_INRADIUS_THRESHOLD,
            separation_threshold: DEFAULT_SEPARATION_THRESHOLD,
        })
    }

    /// Orientation sign of face `f` with respect to cell `c` (`+1` when the
    /// face normal is outward for `c`).
    pub fn alpha(&self, c: usize, f: usize) -> f64 {
        self.geometry[c]
            .faces
            .iter()
            .find(|&&(fid, _)| fid == f)
            .map(|&(_, s)| s)
            .unwrap_or(0.0)
    }

    /// Unit-square single-cell mesh, handy in tests and docs.
    pub fn unit_square() -> Self {
        PolyMesh::from_cells(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![vec![0, 1, 2, 3]],
        )
        .expect("unit square is a valid mesh")
    }
}
