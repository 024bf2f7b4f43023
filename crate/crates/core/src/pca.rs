//! PCA subspace detector.
//!
//! Healthy window-count vectors are mean-centered and decomposed with an SVD
//! of the data matrix; singular values relate to covariance eigenvalues by
//! lambda = sigma^2 / (n - 1). A window's anomaly score is its squared
//! reconstruction residual outside the retained subspace (the SPE /
//! Q-statistic), so "distance from the normal class" is literal distance
//! from the learned normal subspace.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::WindowMatrix;
use crate::linalg::{self, Mat};
use crate::score::ScoreSeries;

/// Eigenvalues below this are clamped to zero; rank decisions use it too.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct PcaModel {
    /// Per-template mean of the training windows.
    pub mean: Vec<f64>,
    /// Right singular vectors as columns, unit norm, eigenvalue-descending.
    pub eigenvectors: Mat,
    /// Covariance eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Retained component count.
    pub k: usize,
    /// Number of training observations.
    pub train_dim: usize,
    /// Set when the training data had no variance at all.
    pub degenerate: bool,
}

/// Covariance of an already-centered data matrix: C = L^T L / (n - 1).
pub fn covariance(centered: &Mat, n: usize) -> Result<Mat> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 observations, got {n}"
        )));
    }
    if centered.rows() != n {
        return Err(Error::Shape(format!(
            "centered matrix has {} rows but n = {n}",
            centered.rows()
        )));
    }
    Ok(centered.gram_scaled((n - 1) as f64))
}

fn center(matrix: &WindowMatrix) -> (Vec<f64>, Mat) {
    let n = matrix.rows();
    let d = matrix.num_templates();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (j, &c) in matrix.row(r).iter().enumerate() {
            mean[j] += c as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = Mat::zeros(n, d);
    for r in 0..n {
        for (j, &c) in matrix.row(r).iter().enumerate() {
            centered.set(r, j, c as f64 - mean[j]);
        }
    }
    (mean, centered)
}

/// Fix eigenvector signs so persistence and projections are reproducible:
/// the largest-magnitude component of each column is made positive.
fn canonicalize_signs(v: &mut Mat) {
    for c in 0..v.cols() {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for r in 0..v.rows() {
            let a = v.get(r, c).abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if v.get(best, c) < 0.0 {
            for r in 0..v.rows() {
                let x = v.get(r, c);
                v.set(r, c, -x);
            }
        }
    }
}

impl PcaModel {
    /// Fit on healthy windows. `variance_fraction` in (0, 1] picks the
    /// smallest k whose cumulative eigenvalue fraction reaches it.
    pub fn fit(healthy: &WindowMatrix, variance_fraction: f64) -> Result<PcaModel> {
        if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "variance fraction {variance_fraction} outside (0, 1]"
            )));
        }
        let n = healthy.rows();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "PCA fit needs at least 2 windows, got {n}"
            )));
        }
        if healthy.num_templates() == 0 {
            return Err(Error::InsufficientData("no template columns".into()));
        }

        let (mean, centered) = center(healthy);
        let svd = linalg::right_svd(&centered);
        let mut eigenvectors = svd.v;
        canonicalize_signs(&mut eigenvectors);
        let eigenvalues: Vec<f64> = svd
            .singular_values
            .iter()
            .map(|&s| {
                let lambda = s * s / (n as f64 - 1.0);
                if lambda < EIGEN_FLOOR {
                    0.0
                } else {
                    lambda
                }
            })
            .collect();

        let total: f64 = eigenvalues.iter().sum();
        let degenerate = total <= 0.0;
        let k = if degenerate {
            1
        } else {
            let mut acc = 0.0;
            let mut k = eigenvalues.len();
            for (i, &l) in eigenvalues.iter().enumerate() {
                acc += l;
                if acc / total >= variance_fraction {
                    k = i + 1;
                    break;
                }
            }
            k
        };

        Ok(PcaModel {
            mean,
            eigenvectors,
            eigenvalues,
            k,
            train_dim: n,
            degenerate,
        })
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.mean.len() {
            return Err(Error::Shape(format!(
                "input has {d} columns but model was fit on {}",
                self.mean.len()
            )));
        }
        Ok(())
    }

    /// Project one row onto the k retained components.
    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(row.len())?;
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let mut out = vec![0.0; self.k];
        for (c, o) in out.iter_mut().enumerate() {
            *o = linalg::dot(&centered, &self.eigenvectors.col(c));
        }
        Ok(out)
    }

    /// Project every window: Y = (W - mean) * V_k.
    pub fn project(&self, matrix: &WindowMatrix) -> Result<Mat> {
        self.check_dim(matrix.num_templates())?;
        let mut out = Mat::zeros(matrix.rows(), self.k);
        for r in 0..matrix.rows() {
            let y = self.project_row(&matrix.row_f64(r))?;
            for (c, v) in y.into_iter().enumerate() {
                out.set(r, c, v);
            }
        }
        Ok(out)
    }

    /// Squared residual of one row outside the retained subspace.
    pub fn spe_row(&self, row: &[f64]) -> Result<f64> {
        self.check_dim(row.len())?;
        let mut residual: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for c in 0..self.k {
            let col = self.eigenvectors.col(c);
            let coeff = linalg::dot(&residual, &col);
            for (res, v) in residual.iter_mut().zip(&col) {
                *res -= coeff * v;
            }
        }
        Ok(linalg::norm_sq(&residual))
    }

    /// Score every window; the threshold is left unset for later calibration.
    pub fn score(&self, matrix: &WindowMatrix) -> Result<ScoreSeries> {
        self.check_dim(matrix.num_templates())?;
        let mut scores = Vec::with_capacity(matrix.rows());
        for r in 0..matrix.rows() {
            scores.push(self.spe_row(&matrix.row_f64(r))?);
        }
        Ok(ScoreSeries::new(matrix.start_epoch, scores))
    }

    pub fn num_templates(&self) -> usize {
        self.mean.len()
    }

    // --- persistence: versioned flat text ---

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "logsift-pca v1")?;
        writeln!(
            w,
            "dims {} k {} n {} degenerate {}",
            self.mean.len(),
            self.k,
            self.train_dim,
            u8::from(self.degenerate)
        )?;
        writeln!(w, "mean {}", join_floats(&self.mean))?;
        writeln!(w, "eigenvalues {}", join_floats(&self.eigenvalues))?;
        for r in 0..self.eigenvectors.rows() {
            writeln!(w, "v {}", join_floats(self.eigenvectors.row(r)))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<PcaModel> {
        let mut lines = r.lines();
        let header = next_line(&mut lines)?;
        if header.trim() != "logsift-pca v1" {
            return Err(Error::artifact("<pca model>", "unknown header/version"));
        }
        let meta = next_line(&mut lines)?;
        let tokens: Vec<&str> = meta.split_whitespace().collect();
        if tokens.len() != 8 || tokens[0] != "dims" || tokens[2] != "k" || tokens[4] != "n" {
            return Err(Error::artifact("<pca model>", "bad meta line"));
        }
        let dims: usize = parse_num(tokens[1])?;
        let k: usize = parse_num(tokens[3])?;
        let n: usize = parse_num(tokens[5])?;
        let degenerate = tokens[7] == "1";

        let mean = parse_float_line(&next_line(&mut lines)?, "mean", dims)?;
        let eigenvalues = parse_float_line(&next_line(&mut lines)?, "eigenvalues", dims)?;
        let mut eigenvectors = Mat::zeros(dims, dims);
        for row in 0..dims {
            let vals = parse_float_line(&next_line(&mut lines)?, "v", dims)?;
            for (c, v) in vals.into_iter().enumerate() {
                eigenvectors.set(row, c, v);
            }
        }
        if k == 0 || k > dims {
            return Err(Error::artifact("<pca model>", "k out of range"));
        }
        Ok(PcaModel {
            mean,
            eigenvectors,
            eigenvalues,
            k,
            train_dim: n,
            degenerate,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write(&mut f)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<PcaModel> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read(BufReader::new(f))
    }
}

fn join_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn next_line<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I) -> Result<String> {
    lines
        .next()
        .ok_or_else(|| Error::artifact("<pca model>", "unexpected end of file"))?
        .map_err(|e| Error::io("<pca model>", e))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::artifact("<pca model>", format!("bad number {s:?}")))
}

fn parse_float_line(line: &str, tag: &str, expect: usize) -> Result<Vec<f64>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::artifact("<pca model>", format!("expected {tag} line")));
    }
    let vals: Vec<f64> = parts
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::artifact("<pca model>", format!("bad float in {tag} line")))?;
    if vals.len() != expect {
        return Err(Error::artifact(
            "<pca model>",
            format!("{tag} line has {} values, expected {expect}", vals.len()),
        ));
    }
    Ok(vals)
}
