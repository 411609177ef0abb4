//! Dense row-major matrices and a one-sided Jacobi singular value decomposition.
//!
//! Everything here is plain `f64` at desk scale (a few thousand rows/columns);
//! no BLAS, no parallelism, fully deterministic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data; `data.len()` must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(r);
                for c in 0..other.cols {
                    dst[c] += a * src[c];
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a dense vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| dot(self.row(r), x))
            .collect())
    }

    /// `self^T * x` for a dense vector `x` of length `rows`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for c in 0..self.cols {
                out[c] += xr * row[c];
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Truncated singular value decomposition `A ~ U * diag(sigma) * V^T`.
///
/// `u` is `rows x k`, `v` is `cols x k`, `sigma` is descending and strictly
/// positive. The sign of each `u` column is fixed so its largest-magnitude
/// entry is positive.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;

/// One-sided Jacobi SVD, truncated to the top `k` singular triplets.
///
/// Errors if `k` is out of range, the input is not finite, or the numerical
/// rank of `a` is below `k`.
pub fn svd_truncated(a: &Matrix, k: usize) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let min_dim = a.rows().min(a.cols());
    if k == 0 || k > min_dim {
        return Err(Error::InvalidInput(format!(
            "k = {k} out of range 1..={min_dim}"
        )));
    }

    // One-sided Jacobi orthogonalizes the columns of the working matrix; run
    // it on the side with fewer columns and swap the roles of U and V back.
    let transposed = a.cols() > a.rows();
    let work_src = if transposed { a.transpose() } else { a.clone() };
    let (q, sigma, p) = one_sided_jacobi(work_src);

    // q: rows x n (orthonormal columns where sigma > 0), p: n x n rotations.
    let (mut u_full, mut v_full) = if transposed { (p, q) } else { (q, p) };

    // Order by descending singular value; stable on ties for determinism.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));

    let scale = sigma[order[0]];
    let rank = order
        .iter()
        .take_while(|&&i| sigma[i] > scale * 1e-12 && sigma[i] > 0.0)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }

    let mut u = Matrix::zeros(u_full.rows(), k);
    let mut v = Matrix::zeros(v_full.rows(), k);
    let mut s = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        s.push(sigma[src]);
        // Sign convention: largest-magnitude entry of the U column positive.
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for r in 0..u_full.rows() {
            let abs = u_full.get(r, src).abs();
            if abs > best_abs {
                best_abs = abs;
                best = r;
            }
        }
        let flip = u_full.get(best, src) < 0.0;
        if flip {
            for r in 0..u_full.rows() {
                let val = u_full.get(r, src);
                u_full.set(r, src, -val);
            }
            for r in 0..v_full.rows() {
                let val = v_full.get(r, src);
                v_full.set(r, src, -val);
            }
        }
        for r in 0..u_full.rows() {
            u.set(r, col, u_full.get(r, src));
        }
        for r in 0..v_full.rows() {
            v.set(r, col, v_full.get(r, src));
        }
    }

    Ok(Svd { u, sigma: s, v })
}

/// Returns `(q, sigma, p)` with `work = q * diag(sigma) * p^T` where `q`'s
/// nonzero columns are orthonormal and `p` is orthogonal.
fn one_sided_jacobi(mut work: Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let n = work.cols();
    let m = work.rows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        p.set(i, i, 1.0);
    }

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..m {
                    let a = work.get(r, i);
                    let b = work.get(r, j);
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let a = work.get(r, i);
                    let b = work.get(r, j);
                    work.set(r, i, c * a - s * b);
                    work.set(r, j, s * a + c * b);
                }
                for r in 0..n {
                    let a = p.get(r, i);
                    let b = p.get(r, j);
                    p.set(r, i, c * a - s * b);
                    p.set(r, j, s * a + c * b);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = vec![0.0; n];
    for c in 0..n {
        let mut sq = 0.0;
        for r in 0..m {
            let v = work.get(r, c);
            sq += v * v;
        }
        let s = sq.sqrt();
        sigma[c] = s;
        if s > 0.0 {
            for r in 0..m {
                let v = work.get(r, c);
                work.set(r, c, v / s);
            }
        }
    }
    (work, sigma, p)
}

impl Svd {
    /// Reconstruct `U * diag(sigma) * V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.sigma.len();
        let mut out = Matrix::zeros(self.u.rows(), self.v.rows());
        for r in 0..self.u.rows() {
            for c in 0..self.v.rows() {
                let mut acc = 0.0;
                for i in 0..k {
                    acc += self.u.get(r, i) * self.sigma[i] * self.v.get(c, i);
                }
                out.set(r, c, acc);
            }
        }
        out
    }
}
