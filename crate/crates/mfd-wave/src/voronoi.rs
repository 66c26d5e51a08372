//! Bounded Voronoi tessellation of a rectangle with Lloyd relaxation.
//!
//! Each cell starts as the whole rectangle and is cut by the bisector
//! half-planes of nearby seeds, in order of increasing seed distance, until
//! no further seed can reach the cell; a seed farther than twice the cell's
//! current vertex radius cannot contribute. The boundary cut produced this
//! way coincides with the seed-reflection construction on a rectangle.
//!
//! Every final vertex is the meet of two lines (rectangle edges or seed
//! bisectors). Positions are recomputed from those labels with index-sorted
//! canonical formulas, so the cells adjacent to a vertex reproduce it
//! bit-for-bit and the tessellation is conforming without tolerance-based
//! stitching. A tiny snapping pass then collapses the near-degenerate faces
//! left by (almost) cocircular seed quadruples.

use crate::error::Error;
use crate::fmath;
use crate::mesh::{PolyMesh, Rect};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generates a clipped Voronoi tessellation of `domain` from `n_seeds`
/// uniformly sampled seeds, after `lloyd_iters` Lloyd relaxation steps
/// (each step moves every seed to its cell centroid). Deterministic for
/// fixed `(n_seeds, lloyd_iters, rng_seed)`.
pub fn generate_voronoi(
    n_seeds: usize,
    lloyd_iters: usize,
    rng_seed: u64,
    domain: Rect,
) -> Result<PolyMesh, Error> {
    check_domain(&domain)?;
    if n_seeds == 0 {
        return Err(Error::BadGenerationParams(format!(
            "n_seeds must be at least 1, got {n_seeds}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds: Vec<[f64; 2]> = (0..n_seeds)
        .map(|_| {
            [
                rng.random_range(domain.x0..domain.x1),
                rng.random_range(domain.y0..domain.y1),
            ]
        })
        .collect();

    let mut clipper = CellClipper::new();
    for _ in 0..lloyd_iters {
        let mut next = Vec::with_capacity(n_seeds);
        for i in 0..n_seeds {
            let poly = clipper.clip(i, &seeds, &domain)?;
            match poly_centroid(poly) {
                Some(c) => next.push(c),
                None => return Err(Error::DegenerateSeed { seed: i }),
            }
        }
        seeds = next;
    }
    assemble(&mut clipper, &seeds, &domain)
}

/// Tessellates `domain` around explicitly given seed positions (no
/// sampling, no relaxation). Useful for structured meshes such as regular
/// grids of quadrants.
pub fn voronoi_of_seeds(seeds: &[[f64; 2]], domain: Rect) -> Result<PolyMesh, Error> {
    check_domain(&domain)?;
    if seeds.is_empty() {
        return Err(Error::BadGenerationParams("need at least one seed".into()));
    }
    let mut clipper = CellClipper::new();
    assemble(&mut clipper, seeds, &domain)
}

fn check_domain(domain: &Rect) -> Result<(), Error> {
    if domain.is_degenerate() {
        return Err(Error::BadGenerationParams(format!(
            "degenerate domain [{}, {}] x [{}, {}]",
            domain.x0, domain.x1, domain.y0, domain.y1
        )));
    }
    Ok(())
}

/// Supporting line of a clip-polygon edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    /// Rectangle edge: 0 bottom, 1 right, 2 top, 3 left.
    Rect(u8),
    /// Bisector against this seed.
    Seed(u32),
}

#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    pos: [f64; 2],
    /// Label of the edge leaving this vertex (counter-clockwise).
    edge: Label,
}

fn rect_polygon(rect: &Rect) -> [ClipVertex; 4] {
    [
        ClipVertex {
            pos: [rect.x0, rect.y0],
            edge: Label::Rect(0),
        },
        ClipVertex {
            pos: [rect.x1, rect.y0],
            edge: Label::Rect(1),
        },
        ClipVertex {
            pos: [rect.x1, rect.y1],
            edge: Label::Rect(2),
        },
        ClipVertex {
            pos: [rect.x0, rect.y1],
            edge: Label::Rect(3),
        },
    ]
}

fn poly_area(poly: &[ClipVertex]) -> f64 {
    let mut acc = 0.0;
    for k in 0..poly.len() {
        let p = poly[k].pos;
        let q = poly[(k + 1) % poly.len()].pos;
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc
}

fn poly_centroid(poly: &[ClipVertex]) -> Option<[f64; 2]> {
    let area = poly_area(poly);
    if !(area > 0.0) {
        return None;
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..poly.len() {
        let p = poly[k].pos;
        let q = poly[(k + 1) % poly.len()].pos;
        let cross = p[0] * q[1] - q[0] * p[1];
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    Some([cx / (6.0 * area), cy / (6.0 * area)])
}

/// Cuts `poly` by the half-plane `n . (x - m) <= 0`; returns whether the
/// polygon changed. Intersection vertices inherit the correct edge labels.
fn clip_halfplane(
    poly: &mut Vec<ClipVertex>,
    scratch: &mut Vec<ClipVertex>,
    n: [f64; 2],
    m: [f64; 2],
    label: Label,
) -> bool {
    let side = |p: [f64; 2]| n[0] * (p[0] - m[0]) + n[1] * (p[1] - m[1]);
    if poly.iter().all(|v| side(v.pos) <= 0.0) {
        return false;
    }
    scratch.clear();
    let len = poly.len();
    for k in 0..len {
        let p = poly[k];
        let q = poly[(k + 1) % len];
        let sp = side(p.pos);
        let sq = side(q.pos);
        let p_in = sp <= 0.0;
        let q_in = sq <= 0.0;
        if p_in {
            scratch.push(p);
        }
        if p_in != q_in {
            let t = sp / (sp - sq);
            let x = [
                p.pos[0] + t * (q.pos[0] - p.pos[0]),
                p.pos[1] + t * (q.pos[1] - p.pos[1]),
            ];
            // leaving the half-plane: the cut edge runs along the clip line;
            // entering: it continues the original edge
            let edge = if p_in { label } else { p.edge };
            scratch.push(ClipVertex { pos: x, edge });
        }
    }
    core::mem::swap(poly, scratch);
    true
}

fn circumcenter(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 2]> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d == 0.0 {
        return None;
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    Some([ux, uy])
}

/// Intersection of the bisector of seeds `(a, b)` (indices already sorted)
/// with a rectangle edge; the fixed coordinate is set exactly.
fn bisector_edge_point(sa: [f64; 2], sb: [f64; 2], edge: u8, rect: &Rect) -> Option<[f64; 2]> {
    let n = [sb[0] - sa[0], sb[1] - sa[1]];
    let m = [0.5 * (sa[0] + sb[0]), 0.5 * (sa[1] + sb[1])];
    match edge {
        0 | 2 => {
            let y = if edge == 0 { rect.y0 } else { rect.y1 };
            if n[0] == 0.0 {
                return None;
            }
            Some([m[0] - n[1] * (y - m[1]) / n[0], y])
        }
        1 | 3 => {
            let x = if edge == 1 { rect.x1 } else { rect.x0 };
            if n[1] == 0.0 {
                return None;
            }
            Some([x, m[1] - n[0] * (x - m[0]) / n[1]])
        }
        _ => None,
    }
}

fn rect_corner(a: u8, b: u8, rect: &Rect) -> Option<[f64; 2]> {
    match (a.min(b), a.max(b)) {
        (0, 1) => Some([rect.x1, rect.y0]),
        (1, 2) => Some([rect.x1, rect.y1]),
        (2, 3) => Some([rect.x0, rect.y1]),
        (0, 3) => Some([rect.x0, rect.y0]),
        _ => None, // parallel edges never meet
    }
}

/// Recomputes a vertex from its two defining lines in a form that is
/// identical for every cell incident to the vertex. Falls back to the
/// numeric position when the lines are (nearly) parallel.
fn canonical_position(
    cell_seed: u32,
    incoming: Label,
    outgoing: Label,
    numeric: [f64; 2],
    seeds: &[[f64; 2]],
    rect: &Rect,
    guard: f64,
) -> [f64; 2] {
    let candidate = match (incoming, outgoing) {
        (Label::Rect(a), Label::Rect(b)) => rect_corner(a, b, rect),
        (Label::Rect(e), Label::Seed(j)) | (Label::Seed(j), Label::Rect(e)) => {
            let (a, b) = sort_pair(cell_seed, j);
            bisector_edge_point(seeds[a as usize], seeds[b as usize], e, rect)
        }
        (Label::Seed(j), Label::Seed(k)) => {
            let mut ids = [cell_seed, j, k];
            ids.sort_unstable();
            circumcenter(
                seeds[ids[0] as usize],
                seeds[ids[1] as usize],
                seeds[ids[2] as usize],
            )
        }
    };
    match candidate {
        Some(p)
            if p[0].is_finite()
                && p[1].is_finite()
                && fmath::hypot(p[0] - numeric[0], p[1] - numeric[1]) <= guard =>
        {
            p
        }
        _ => numeric,
    }
}

fn sort_pair(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

struct CellClipper {
    poly: Vec<ClipVertex>,
    scratch: Vec<ClipVertex>,
    dist: Vec<(f64, u32)>,
}

impl CellClipper {
    fn new() -> Self {
        CellClipper {
            poly: Vec::new(),
            scratch: Vec::new(),
            dist: Vec::new(),
        }
    }

    /// Clips the Voronoi cell of seed `i` against the rectangle and the
    /// bisectors of every seed that can reach it.
    fn clip(&mut self, i: usize, seeds: &[[f64; 2]], rect: &Rect) -> Result<&[ClipVertex], Error> {
        const PREFIX: usize = 32;
        let si = seeds[i];
        self.poly.clear();
        self.poly.extend_from_slice(&rect_polygon(rect));
        self.dist.clear();
        for (j, s) in seeds.iter().enumerate() {
            if j == i {
                continue;
            }
            let d2 = (s[0] - si[0]) * (s[0] - si[0]) + (s[1] - si[1]) * (s[1] - si[1]);
            self.dist.push((d2, j as u32));
        }
        // only nearby seeds matter: sort a prefix first, extend on demand
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let mut sorted = if self.dist.len() > PREFIX {
            self.dist.select_nth_unstable_by(PREFIX - 1, cmp);
            self.dist[..PREFIX].sort_unstable_by(cmp);
            PREFIX
        } else {
            self.dist.sort_unstable_by(cmp);
            self.dist.len()
        };

        let radius2 = |poly: &[ClipVertex]| {
            poly.iter()
                .map(|v| {
                    (v.pos[0] - si[0]) * (v.pos[0] - si[0])
                        + (v.pos[1] - si[1]) * (v.pos[1] - si[1])
                })
                .fold(0.0f64, f64::max)
        };
        let mut max_d2 = radius2(&self.poly);
        let mut idx = 0;
        while idx < self.dist.len() {
            if idx == sorted {
                self.dist[sorted..].sort_unstable_by(cmp);
                sorted = self.dist.len();
            }
            let (d2, j) = self.dist[idx];
            idx += 1;
            if d2 <= 0.0 {
                return Err(Error::CoincidentSeeds {
                    first: i.min(j as usize),
                    second: i.max(j as usize),
                });
            }
            if d2 > 4.0 * max_d2 * (1.0 + 1e-12) {
                break;
            }
            let sj = seeds[j as usize];
            let n = [sj[0] - si[0], sj[1] - si[1]];
            let m = [0.5 * (si[0] + sj[0]), 0.5 * (si[1] + sj[1])];
            if clip_halfplane(&mut self.poly, &mut self.scratch, n, m, Label::Seed(j)) {
                if self.poly.len() < 3 {
                    return Err(Error::DegenerateSeed { seed: i });
                }
                max_d2 = radius2(&self.poly);
            }
        }
        Ok(&self.poly)
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut v: u32) -> u32 {
        while self.parent[v as usize] != v {
            let up = self.parent[self.parent[v as usize] as usize];
            self.parent[v as usize] = up;
            v = up;
        }
        v
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller id wins, for determinism
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
        }
    }
}

/// Clips every cell, canonicalizes and merges vertices, and builds the
/// final conforming mesh.
fn assemble(
    clipper: &mut CellClipper,
    seeds: &[[f64; 2]],
    domain: &Rect,
) -> Result<PolyMesh, Error> {
    let n_seeds = seeds.len();
    let guard = 1e-6 * domain.diagonal();
    // collapse threshold for nearly-degenerate faces, relative to the
    // expected cell size
    let cell_scale = fmath::sqrt(domain.area() / n_seeds as f64);
    let snap_tol = 1e-10 * cell_scale;

    let mut positions: Vec<[f64; 2]> = Vec::new();
    let mut pool: BTreeMap<(u64, u64), u32> = BTreeMap::new();
    let mut loops: Vec<Vec<u32>> = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let poly = clipper.clip(i, seeds, domain)?;
        if !(poly_area(poly) > 0.0) {
            return Err(Error::DegenerateSeed { seed: i });
        }
        let len = poly.len();
        let mut loop_ids = Vec::with_capacity(len);
        for k in 0..len {
            let incoming = poly[(k + len - 1) % len].edge;
            let outgoing = poly[k].edge;
            let p = canonical_position(
                i as u32,
                incoming,
                outgoing,
                poly[k].pos,
                seeds,
                domain,
                guard,
            );
            // normalize -0.0 so bit-keys match
            let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
            let id = *pool.entry(key).or_insert_with(|| {
                positions.push(p);
                (positions.len() - 1) as u32
            });
            loop_ids.push(id);
        }
        loops.push(loop_ids);
    }

    // proximity merge: collapse vertices closer than snap_tol
    let mut uf = UnionFind::new(positions.len());
    let mut by_x: Vec<u32> = (0..positions.len() as u32).collect();
    by_x.sort_unstable_by(|&a, &b| {
        positions[a as usize][0]
            .total_cmp(&positions[b as usize][0])
            .then(positions[a as usize][1].total_cmp(&positions[b as usize][1]))
    });
    for (w, &a) in by_x.iter().enumerate() {
        for &b in by_x[(w + 1)..].iter() {
            let dx = positions[b as usize][0] - positions[a as usize][0];
            if dx > snap_tol {
                break;
            }
            if fmath::abs(positions[b as usize][1] - positions[a as usize][1]) <= snap_tol {
                uf.union(a, b);
            }
        }
    }

    // compact representatives into the final vertex table
    let mut remap: Vec<u32> = vec![u32::MAX; positions.len()];
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(n_seeds);
    for (i, loop_ids) in loops.iter().enumerate() {
        let mut cell: Vec<usize> = Vec::with_capacity(loop_ids.len());
        for &raw in loop_ids {
            let root = uf.find(raw);
            if remap[root as usize] == u32::MAX {
                vertices.push(positions[root as usize]);
                remap[root as usize] = (vertices.len() - 1) as u32;
            }
            let id = remap[root as usize] as usize;
            if cell.last() != Some(&id) {
                cell.push(id);
            }
        }
        while cell.len() > 1 && cell.first() == cell.last() {
            cell.pop();
        }
        if cell.len() < 3 {
            return Err(Error::DegenerateSeed { seed: i });
        }
        cells.push(cell);
    }

    let mesh = PolyMesh::from_cells(vertices, cells)?;
    let defect = fmath::abs(mesh.total_area() - domain.area()) / domain.area();
    if defect > 1e-12 {
        return Err(Error::InvalidMesh {
            failures: vec![format!(
                "cell areas cover {:e} of the domain instead of 1 (defect {defect:e})",
                mesh.total_area() / domain.area()
            )],
        });
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_seed_gives_the_domain() {
        let mesh = generate_voronoi(1, 0, 42, Rect::UNIT).unwrap();
        assert_eq!(mesh.n_cells(), 1);
        assert_eq!(mesh.n_faces(), 4);
        assert!((mesh.cell_area(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_seeds_is_rejected() {
        assert!(matches!(
            generate_voronoi(0, 0, 1, Rect::UNIT),
            Err(Error::BadGenerationParams(_))
        ));
    }

    #[test]
    fn degenerate_domain_is_rejected() {
        let bad = Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 0.0,
            y1: 1.0,
        };
        assert!(matches!(
            generate_voronoi(4, 0, 1, bad),
            Err(Error::BadGenerationParams(_))
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_voronoi(37, 3, 1234, Rect::UNIT).unwrap();
        let b = generate_voronoi(37, 3, 1234, Rect::UNIT).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.cell_loops(), b.cell_loops());
        let c = generate_voronoi(37, 3, 1235, Rect::UNIT).unwrap();
        assert_ne!(a.vertices(), c.vertices());
    }

    #[test]
    fn area_partition_and_validity_on_random_meshes() {
        for seed in 0..8u64 {
            let mesh = generate_voronoi(60, 2, seed, Rect::UNIT).unwrap();
            assert!((mesh.total_area() - 1.0).abs() < 1e-12);
            mesh.validate().unwrap();
        }
    }

    #[test]
    fn four_symmetric_seeds_give_quadrants() {
        // seeds at (1/2 +- 1/4, 1/2 +- 1/4) tessellate into four squares
        let seeds = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
        let mesh = voronoi_of_seeds(&seeds, Rect::UNIT).unwrap();
        assert_eq!(mesh.n_cells(), 4);
        for c in 0..4 {
            assert!((mesh.cell_area(c) - 0.25).abs() < 1e-14);
            assert_eq!(mesh.cell_loops()[c].len(), 4);
        }
        assert_eq!(mesh.n_faces(), 12);
        mesh.validate().unwrap();
    }

    #[test]
    fn coincident_seeds_error() {
        let seeds = [[0.5, 0.5], [0.5, 0.5]];
        assert!(matches!(
            voronoi_of_seeds(&seeds, Rect::UNIT),
            Err(Error::CoincidentSeeds {
                first: 0,
                second: 1
            })
        ));
    }

    #[test]
    fn lloyd_relaxation_keeps_partition_exact() {
        let mesh = generate_voronoi(
            100,
            10,
            7,
            Rect {
                x0: -1.0,
                y0: 0.5,
                x1: 2.0,
                y1: 2.5,
            },
        )
        .unwrap();
        assert!((mesh.total_area() - 6.0).abs() < 6.0 * 1e-12);
        mesh.validate().unwrap();
    }
}
