//! Implicit-shift QL eigensolver for real symmetric tridiagonal matrices.

use crate::error::{Error, Result};
use crate::num::Real;

/// Eigen-decomposition of a real symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagEigen<T> {
    /// Ascending eigenvalues.
    pub values: Vec<T>,
    /// `vectors[j]` is the unit eigenvector for `values[j]`, with its first
    /// component made non-negative.
    pub vectors: Vec<Vec<T>>,
}

const MAX_SWEEPS: usize = 200;

/// Diagonalizes the matrix with main diagonal `diag` and sub/super-diagonal
/// `off` (`off.len() == diag.len() - 1`).
pub fn symmetric_tridiagonal_eigen<T: Real>(diag: &[T], off: &[T]) -> Result<TridiagEigen<T>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::invalid("empty tridiagonal matrix"));
    }
    if off.len() + 1 != n {
        return Err(Error::DimensionMismatch { expected: n - 1, found: off.len() });
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(T::zero());
    // z[k * n + i]: component k of eigenvector i
    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    let two = T::lit(2.0);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(Error::Convergence {
                    reason: "tridiagonal QL iteration exceeded sweep limit".into(),
                    estimate: e[l].abs().to_f64_lossy(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zf = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * zf;
                    z[k * n + i] = c * z[k * n + i] - s * zf;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<T> = (0..n).map(|k| z[k * n + i]).collect();
            let pivot = v.iter().copied().find(|x| x.abs() > T::epsilon()).unwrap_or(T::one());
            if pivot < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(TridiagEigen { values, vectors })
}
