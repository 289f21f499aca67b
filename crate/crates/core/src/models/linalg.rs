//! Small dense helpers: a row-major matrix, a Cholesky solver and
//! centered ridge regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Solves `a x = b` in place for symmetric positive definite `a` (n x n) and
/// `b` (n x m). Fails with [`Error::Singular`] when a pivot collapses.
pub fn cholesky_solve(a: &Matrix, b: &mut Matrix) -> Result<()> {
    let n = a.rows;
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > tol) {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = b.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * b.get(k, c);
            }
            b.set(i, c, s / l.get(i, i));
        }
        for i in (0..n).rev() {
            let mut s = b.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * b.get(k, c);
            }
            b.set(i, c, s / l.get(i, i));
        }
    }
    Ok(())
}

/// Affine least squares `target ~ W input + bias` with penalty
/// `lambda * |W|^2` on `W` only.
pub struct RidgeFit {
    /// targets x inputs
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

pub fn ridge_regression(inputs: &[&[f64]], targets: &[&[f64]], lambda: f64) -> Result<RidgeFit> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::invalid("train", "need a non-empty, aligned set of rows"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be finite and non-negative, got {lambda}")));
    }
    let s = inputs[0].len();
    let v = targets[0].len();
    let n = inputs.len() as f64;
    let mut e_mean = vec![0.0; s];
    let mut x_mean = vec![0.0; v];
    for (e, x) in inputs.iter().zip(targets) {
        e_mean.iter_mut().zip(e.iter()).for_each(|(m, a)| *m += a / n);
        x_mean.iter_mut().zip(x.iter()).for_each(|(m, a)| *m += a / n);
    }
    let mut gram = Matrix::zeros(s, s);
    let mut cross = Matrix::zeros(s, v);
    let mut ec = vec![0.0; s];
    for (e, x) in inputs.iter().zip(targets) {
        ec.iter_mut().zip(e.iter().zip(&e_mean)).for_each(|(c, (a, m))| *c = a - m);
        for i in 0..s {
            let gi = gram.row_mut(i);
            for j in 0..s {
                gi[j] += ec[i] * ec[j];
            }
            let ci = cross.row_mut(i);
            for (j, (xj, mj)) in x.iter().zip(&x_mean).enumerate() {
                ci[j] += ec[i] * (xj - mj);
            }
        }
    }
    for i in 0..s {
        gram.set(i, i, gram.get(i, i) + lambda);
    }
    cholesky_solve(&gram, &mut cross)?;
    let mut weights = Matrix::zeros(v, s);
    for i in 0..s {
        for j in 0..v {
            weights.set(j, i, cross.get(i, j));
        }
    }
    let projected = weights.mul_vec(&e_mean);
    let bias = x_mean.iter().zip(projected).map(|(m, p)| m - p).collect();
    Ok(RidgeFit { weights, bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let mut b = Matrix::from_rows(&[vec![2.0], vec![1.0]]);
        cholesky_solve(&a, &mut b).unwrap();
        assert!((b.get(0, 0) - 0.5).abs() < 1e-12);
        assert!(b.get(1, 0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let mut b = Matrix::from_rows(&[vec![1.0], vec![1.0]]);
        assert!(matches!(cholesky_solve(&a, &mut b), Err(Error::Singular)));
    }
}
