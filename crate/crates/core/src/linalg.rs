//! Minimal dense linear algebra for the detectors.
//!
//! The matrices involved are small (windows x templates), so everything is
//! plain row-major `Vec<f64>` with no BLAS. The singular value decomposition
//! uses one-sided Jacobi rotations: it orthogonalizes the columns of the data
//! matrix directly, which is numerically gentler than forming and
//! eigendecomposing the covariance matrix.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("matrix with no rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data: rows.concat(),
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// self^T * self scaled by 1/(n-1); the covariance of pre-centered rows.
    pub fn gram_scaled(&self, denom: f64) -> Mat {
        let mut out = Mat::zeros(self.cols, self.cols);
        for i in 0..self.cols {
            for j in i..self.cols {
                let mut acc = 0.0;
                for r in 0..self.rows {
                    acc += self.get(r, i) * self.get(r, j);
                }
                acc /= denom;
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }

    /// Row vector times this matrix: y = x * self.
    pub fn vec_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::Shape(format!(
                "vector length {} does not match {} rows",
                x.len(),
                self.rows
            )));
        }
        let mut y = vec![0.0; self.cols];
        for (r, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (c, &m) in row.iter().enumerate() {
                y[c] += xv * m;
            }
        }
        Ok(y)
    }
}

/// Right singular structure of an n x d matrix: singular values in descending
/// order and the matching right singular vectors as columns of a d x d
/// orthonormal matrix.
pub struct RightSvd {
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_EPS: f64 = 1e-14;

/// One-sided Jacobi SVD. Rotates column pairs of a working copy of `a` until
/// all columns are mutually orthogonal, accumulating the rotations into V.
pub fn right_svd(a: &Mat) -> RightSvd {
    let d = a.cols();
    let mut work = a.clone();
    let mut v = Mat::identity(d);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..work.rows() {
                    let x = work.get(r, p);
                    let y = work.get(r, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= JACOBI_EPS * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..work.rows() {
                    let x = work.get(r, p);
                    let y = work.get(r, q);
                    work.set(r, p, c * x - s * y);
                    work.set(r, q, s * x + c * y);
                }
                for r in 0..d {
                    let x = v.get(r, p);
                    let y = v.get(r, q);
                    v.set(r, p, c * x - s * y);
                    v.set(r, q, s * x + c * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..d)
        .map(|c| {
            (0..work.rows())
                .map(|r| work.get(r, c) * work.get(r, c))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    // Sort descending by singular value, carrying V columns along.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let mut v_sorted = Mat::zeros(d, d);
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..d {
            v_sorted.set(r, new_c, v.get(r, old_c));
        }
    }
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());

    RightSvd {
        singular_values: sigma,
        v: v_sorted,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}
