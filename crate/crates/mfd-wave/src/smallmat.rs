//! Small dense helpers: 2x2 tensors and Jacobi eigenvalues for the local
//! flux matrices (a handful of faces per cell, so dense is the right tool).

use crate::fmath;
use alloc::vec;
use alloc::vec::Vec;

/// Symmetric 2x2 tensor, row-major `[[xx, xy], [yx, yy]]`.
pub type Tensor2 = [[f64; 2]; 2];

pub(crate) fn tensor_is_spd(k: &Tensor2) -> bool {
    let scale = fmath::abs(k[0][0]) + fmath::abs(k[1][1]) + fmath::abs(k[0][1]);
    let symmetric = fmath::abs(k[0][1] - k[1][0]) <= 1e-12 * scale.max(1e-300);
    symmetric && k[0][0] > 0.0 && k[0][0] * k[1][1] - k[0][1] * k[1][0] > 0.0
}

pub(crate) fn tensor_inverse(k: &Tensor2) -> Tensor2 {
    let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    [
        [k[1][1] / det, -k[0][1] / det],
        [-k[1][0] / det, k[0][0] / det],
    ]
}

/// Dense symmetric matrix of small order, row-major full storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSym {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SmallSym {
    pub fn zeros(n: usize) -> Self {
        SmallSym {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Quadratic form x^T A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.get(i, j) * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Bilinear form x^T A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.get(i, j) * y[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Eigenvalue range via cyclic Jacobi rotations.
    pub fn eigen_range(&self) -> (f64, f64) {
        let n = self.n;
        let mut a = self.clone();
        if n == 1 {
            return (a.get(0, 0), a.get(0, 0));
        }
        let fro: f64 = fmath::sqrt(a.data.iter().map(|v| v * v).sum());
        let tol = 1e-15 * fro.max(1e-300);
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
            if fmath::sqrt(off) <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if fmath::abs(apq) <= tol / (n as f64) {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + fmath::sqrt(1.0 + theta * theta))
                    } else {
                        -1.0 / (-theta + fmath::sqrt(1.0 + theta * theta))
                    };
                    let c = 1.0 / fmath::sqrt(1.0 + t * t);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        let mut lo = a.get(0, 0);
        let mut hi = lo;
        for i in 1..n {
            lo = lo.min(a.get(i, i));
            hi = hi.max(a.get(i, i));
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_eigen_matches_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut a = SmallSym::zeros(2);
        a.set(0, 0, 2.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 2.0);
        let (lo, hi) = a.eigen_range();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn spd_check_rejects_indefinite_tensor() {
        assert!(tensor_is_spd(&[[2.0, 0.5], [0.5, 1.0]]));
        assert!(!tensor_is_spd(&[[1.0, 2.0], [2.0, 1.0]]));
        assert!(!tensor_is_spd(&[[1.0, 0.3], [0.2, 1.0]]));
    }

    #[test]
    fn tensor_inverse_roundtrip() {
        let k = [[2.0, 0.5], [0.5, 1.0]];
        let ki = tensor_inverse(&k);
        let prod00 = k[0][0] * ki[0][0] + k[0][1] * ki[1][0];
        let prod01 = k[0][0] * ki[0][1] + k[0][1] * ki[1][1];
        assert!((prod00 - 1.0).abs() < 1e-14);
        assert!(prod01.abs() < 1e-14);
    }
}
