//! Minimal sparse toolkit: CSR storage, reverse Cuthill-McKee ordering, a
//! profile (skyline) Cholesky factorization and preconditioned conjugate
//! gradients with a weighted inner product.
//!
//! The flux mass matrix couples only faces sharing a cell, so after RCM the
//! profile stays narrow and one factorization per mesh amortizes over the
//! whole time integration.

use crate::error::Error;
use crate::fmath;
use alloc::vec;
use alloc::vec::Vec;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from coordinate triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &mut Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut counts = vec![0usize; n_rows];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last = None;
        for &(r, c, v) in triplets.iter() {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for r in 0..n_rows {
            row_ptr[r + 1] = row_ptr[r] + counts[r];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    /// Iterates over stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Inverse diagonal, for Jacobi preconditioning.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for (r, c, v) in self.triplets() {
            if r == c {
                d[r] += v;
            }
        }
        for v in d.iter_mut() {
            *v = if *v != 0.0 { 1.0 / *v } else { 1.0 };
        }
        d
    }

    /// max_ij |a_ij - a_ji| over the stored pattern.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for (r, c, v) in self.triplets() {
            if c < r {
                continue;
            }
            let (cols, vals) = self.row(c);
            let mirror = match cols.binary_search(&r) {
                Ok(k) => vals[k],
                Err(_) => 0.0,
            };
            defect = defect.max(fmath::abs(v - mirror));
        }
        defect
    }
}

/// Reverse Cuthill-McKee ordering of a square sparse pattern.
///
/// Returns `order` with `order[k]` = original index placed at position `k`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let degree = |v: usize| a.row(v).0.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = Vec::new();
    let mut next_level = Vec::new();

    while order.len() < n {
        // pseudo-peripheral start: min-degree unvisited, then walk to the
        // far end of its BFS tree a couple of times
        let mut root = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree(v), v))
            .expect("unvisited vertex exists");
        let mut ecc = 0usize;
        for _ in 0..4 {
            let mut seen = vec![false; n];
            seen[root] = true;
            level.clear();
            level.push(root);
            let mut depth = 0;
            let mut last = level.clone();
            while !level.is_empty() {
                next_level.clear();
                for &v in level.iter() {
                    for &w in a.row(v).0 {
                        if w != v && !visited[w] && !seen[w] {
                            seen[w] = true;
                            next_level.push(w);
                        }
                    }
                }
                if next_level.is_empty() {
                    break;
                }
                depth += 1;
                last.clone_from(&next_level);
                core::mem::swap(&mut level, &mut next_level);
            }
            if depth > ecc {
                ecc = depth;
                root = *last
                    .iter()
                    .min_by_key(|&&v| (degree(v), v))
                    .expect("nonempty level");
            } else {
                break;
            }
        }

        // Cuthill-McKee BFS from the chosen root
        let start = order.len();
        visited[root] = true;
        order.push(root);
        let mut head = start;
        let mut neigh = Vec::new();
        while head < order.len() {
            let v = order[head];
            head += 1;
            neigh.clear();
            for &w in a.row(v).0 {
                if w != v && !visited[w] {
                    visited[w] = true;
                    neigh.push(w);
                }
            }
            neigh.sort_unstable_by_key(|&w| (degree(w), w));
            order.extend_from_slice(&neigh);
        }
        order[start..].reverse();
    }
    order
}

/// Profile (skyline) Cholesky factorization of an SPD matrix, with RCM
/// preordering. Fill stays inside the envelope, so storage is one
/// contiguous slab of row segments.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    order: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, Error> {
        assert_eq!(a.n_rows(), a.n_cols(), "matrix must be square");
        let n = a.n_rows();
        let order = reverse_cuthill_mckee(a);
        let mut pos = vec![0usize; n];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (r, c, _) in a.triplets() {
            let (pr, pc) = (pos[r], pos[c]);
            if pc < pr && pc < first[pr] {
                first[pr] = pc;
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (r, c, v) in a.triplets() {
            let (pr, pc) = (pos[r], pos[c]);
            if pc <= pr {
                data[offset[pr] + (pc - first[pr])] = v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (done, cur) = data.split_at_mut(offset[i]);
            let row_i = &mut cur[..(i - fi + 1)];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_j = &done[offset[j]..offset[j + 1]];
                let mut s = row_i[j - fi];
                for k in lo..j {
                    s -= row_i[k - fi] * row_j[k - fj];
                }
                row_i[j - fi] = s / row_j[j - fj];
            }
            let mut s = row_i[i - fi];
            for k in fi..i {
                let l = row_i[k - fi];
                s -= l * l;
            }
            if !(s > 0.0) {
                return Err(Error::FactorizationFailed {
                    index: order[i],
                    pivot: s,
                });
            }
            row_i[i - fi] = fmath::sqrt(s);
        }

        Ok(SkylineCholesky {
            n,
            order,
            first,
            offset,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Stored profile size (lower triangle including diagonal).
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    /// Solves A x = b.
    pub fn solve_into(&self, b: &[f64], x: &mut [f64], work: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(x.len(), self.n);
        assert_eq!(work.len(), self.n);
        let w = work;
        for k in 0..self.n {
            w[k] = b[self.order[k]];
        }
        // forward L y = P b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = w[i];
            for k in fi..i {
                s -= row[k - fi] * w[k];
            }
            w[i] = s / row[i - fi];
        }
        // backward L^T x = y
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let xi = w[i] / row[i - fi];
            w[i] = xi;
            for k in fi..i {
                w[k] -= row[k - fi] * xi;
            }
        }
        for k in 0..self.n {
            x[self.order[k]] = w[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let mut work = vec![0.0; self.n];
        self.solve_into(b, &mut x, &mut work);
        x
    }
}

/// Outcome of a converged conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients in the inner product
/// `<a, b> = sum_i weights[i] a_i b_i` (Euclidean when `weights` is None).
///
/// `apply` must be self-adjoint and positive definite with respect to that
/// inner product. `precond_inv_diag`, when given, is applied entrywise.
/// `x` provides the initial guess and receives the solution.
pub fn conjugate_gradient<A>(
    mut apply: A,
    b: &[f64],
    x: &mut [f64],
    weights: Option<&[f64]>,
    precond_inv_diag: Option<&[f64]>,
    rel_tol: f64,
    max_iters: usize,
) -> Result<CgStats, Error>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<(), Error>,
{
    let n = b.len();
    assert_eq!(x.len(), n);
    if let Some(w) = weights {
        assert_eq!(w.len(), n);
    }
    let wdot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        match weights {
            Some(w) => {
                for i in 0..n {
                    s += w[i] * a[i] * b[i];
                }
            }
            None => {
                for i in 0..n {
                    s += a[i] * b[i];
                }
            }
        }
        s
    };
    let b_norm = fmath::sqrt(wdot(b, b));
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap)?;
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut z = r.clone();
    if let Some(d) = precond_inv_diag {
        for i in 0..n {
            z[i] = d[i] * r[i];
        }
    }
    let mut p = z.clone();
    let mut rz = wdot(&r, &z);
    let mut res = fmath::sqrt(wdot(&r, &r)) / b_norm;
    if res <= rel_tol {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: res,
        });
    }

    for it in 1..=max_iters {
        apply(&p, &mut ap)?;
        let p_ap = wdot(&p, &ap);
        if !(p_ap > 0.0) {
            return Err(Error::SolveFailed {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = fmath::sqrt(wdot(&r, &r)) / b_norm;
        if res <= rel_tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: res,
            });
        }
        if let Some(d) = precond_inv_diag {
            for i in 0..n {
                z[i] = d[i] * r[i];
            }
        } else {
            z.copy_from_slice(&r);
        }
        let rz_new = wdot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolveFailed {
        iterations: max_iters,
        residual: res,
    })
}
