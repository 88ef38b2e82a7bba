//! Small dense linear algebra on row-major square matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dag, NodeSet};

/// Pivots smaller than this in absolute value mark a matrix as singular.
pub const SINGULAR_PIVOT: f64 = 1e-10;

/// Square matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Matrix {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        Ok(Matrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Matrix {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).take(self.n).collect()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        Matrix::from_fn(self.n, |i, j| (0..self.n).map(|k| self.get(i, k) * other.get(k, j)).sum())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|k| self.get(i, k) * v[k]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self.get(j, i))
    }

    /// Rows and columns reordered so that entry `(k, l)` of the result is
    /// entry `(perm[k], perm[l])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Matrix {
        Matrix::from_fn(self.n, |k, l| self.get(perm[k], perm[l]))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Inverse via LU with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            // first row with the largest magnitude, so ties keep the order
            let mut p = k;
            for r in k + 1..n {
                if lu[r * n + k].abs() > lu[p * n + k].abs() {
                    p = r;
                }
            }
            let pivot = lu[p * n + k];
            min_pivot = min_pivot.min(pivot.abs());
            if pivot.abs() < SINGULAR_PIVOT {
                return Err(Error::Singular(pivot.abs()));
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            for r in k + 1..n {
                let f = lu[r * n + k] / pivot;
                lu[r * n + k] = f;
                for c in k + 1..n {
                    lu[r * n + c] -= f * lu[k * n + c];
                }
            }
        }
        debug_assert!(n == 0 || min_pivot >= SINGULAR_PIVOT);
        let mut inv = Matrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            // solve L U x = P e_j
            for i in 0..n {
                col[i] = if perm[i] == j { 1.0 } else { 0.0 };
            }
            for i in 0..n {
                let s: f64 = (0..i).map(|k| lu[i * n + k] * col[k]).sum();
                col[i] -= s;
            }
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|k| lu[i * n + k] * col[k]).sum();
                col[i] = (col[i] - s) / lu[i * n + i];
            }
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        Ok(inv)
    }

    /// Off-diagonal support as parent sets: row `j` lists the `i` with a
    /// nonzero entry `(j, i)`.
    pub fn support(&self, tol: f64) -> Vec<NodeSet> {
        (0..self.n)
            .map(|j| (0..self.n).filter(|&i| i != j && self.get(j, i).abs() > tol).collect())
            .collect()
    }

    /// The DAG whose edges `i -> j` are the nonzero entries `(j, i)`, if it is
    /// acyclic and the diagonal vanishes.
    pub fn implied_dag(&self, names: &[String], tol: f64) -> Option<Dag> {
        if (0..self.n).any(|i| self.get(i, i).abs() > tol) {
            return None;
        }
        Dag::from_parent_sets(names.to_vec(), &self.support(tol)).ok()
    }

    pub fn is_strictly_lower(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (i..self.n).all(|j| self.get(i, j).abs() <= tol))
    }
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// Ordinary least squares with intercept: returns `(intercept, slopes)` and
/// the maximum absolute residual. Uses an SVD, so rank-deficient designs get
/// the minimum-norm solution.
pub fn affine_fit(xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>, f64) {
    let m = ys.len();
    let k = xs.first().map_or(0, Vec::len);
    let design = DMatrix::from_fn(m, k + 1, |r, c| if c == 0 { 1.0 } else { xs[r][c - 1] });
    let target = DVector::from_column_slice(ys);
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&target, 1e-10)
        .unwrap_or_else(|_| DVector::zeros(k + 1));
    let resid = &target - &design * &coef;
    let max_res = resid.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    (coef[0], coef.iter().skip(1).copied().collect(), max_res)
}

/// Least-squares coefficients of `y` on the columns `xs` (no intercept).
pub fn least_squares(xs: &[&[f64]], y: &[f64]) -> Vec<f64> {
    let k = xs.len();
    if k == 0 {
        return Vec::new();
    }
    let mut gram = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for a in 0..k {
        rhs[a] = dot(xs[a], y);
        for b in a..k {
            let v = dot(xs[a], xs[b]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let svd = gram.svd(true, true);
    svd.solve(&rhs, 1e-12)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; k])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Centered and scaled to unit population variance; constant columns map to
/// zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let sd = variance(x).sqrt();
    if sd == 0.0 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - m) / sd).collect()
    }
}
