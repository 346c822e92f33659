//! Dense symmetric linear algebra.
//!
//! [`SymMatrix`] is the value type for every Gram matrix in the crate. The
//! eigen and Cholesky routines are delegated to `nalgebra`; this module owns
//! the symmetry/finiteness contract and the ascending eigenvalue ordering.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted by [`solve_spd`].
pub const SPD_MIN_EIGENVALUE: f64 = 1e-12;

/// A dense real symmetric matrix, stored row-major.
///
/// Construction symmetrizes the input as `(A + Aᵀ)/2`, so `get(i, j) ==
/// get(j, i)` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = scale;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self::from_row_major(n, data)
    }

    /// Builds a matrix from row-major entries, symmetrizing in place.
    pub fn from_row_major(n: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::input(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite entry at ({}, {})",
                pos / n,
                pos % n
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Ok(SymMatrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::input(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::from_row_major(n, data)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_same_order(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(SymMatrix { n: self.n, data })
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn divided(&self, s: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v / s).collect(),
        }
    }

    /// `A·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::input(format!(
                "vector length {} does not match matrix order {}",
                v.len(),
                self.n
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `A²`, which is `A·Aᵀ` for symmetric `A`.
    pub fn square(&self) -> SymMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let ri = &self.data[i * n..(i + 1) * n];
            for j in i..n {
                let rj = &self.data[j * n..(j + 1) * n];
                let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymMatrix { n, data }
    }

    /// Applies the same permutation to rows and columns: `B[i][j] = A[p[i]][p[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SymMatrix> {
        if perm.len() != self.n {
            return Err(Error::input("permutation length mismatch"));
        }
        SymMatrix::from_fn(self.n, |i, j| self.get(perm[i], perm[j]))
    }

    /// n×n numeric grid, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn add_assign(&mut self, other: &SymMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn check_same_order(&self, other: &SymMatrix) -> Result<()> {
        if self.n != other.n {
            return Err(Error::input(format!(
                "matrix orders differ: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::input("matrix has non-finite entries"))
        }
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// `Σ λ_i v_i v_iᵀ`.
    pub fn reconstruct(&self) -> Result<SymMatrix> {
        let n = self.values.len();
        let mut data = vec![0.0; n * n];
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            for i in 0..n {
                for j in 0..n {
                    data[i * n + j] += lam * v[i] * v[j];
                }
            }
        }
        SymMatrix::from_row_major(n, data)
    }
}

pub fn sym_eig(a: &SymMatrix) -> Result<EigenSystem> {
    a.check_finite()?;
    let n = a.order();
    if n == 0 {
        return Ok(EigenSystem {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let eig = SymmetricEigen::new(a.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok(EigenSystem { values, vectors })
}

/// Eigenvalues only, ascending. Cheaper than [`sym_eig`].
pub fn sym_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    a.check_finite()?;
    if a.order() == 0 {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = a.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `max_i |λ_i|`.
pub fn spectral_norm(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eigenvalues(a)?
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs())))
}

pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    sym_eigenvalues(a)?
        .first()
        .copied()
        .ok_or_else(|| Error::input("empty matrix has no eigenvalues"))
}

pub fn max_eigenvalue(a: &SymMatrix) -> Result<f64> {
    sym_eigenvalues(a)?
        .last()
        .copied()
        .ok_or_else(|| Error::input("empty matrix has no eigenvalues"))
}

/// Solves `A x = b` for positive definite `A`.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.order();
    if b.len() != n {
        return Err(Error::input(format!(
            "right-hand side has length {}, matrix order is {n}",
            b.len()
        )));
    }
    let min = min_eigenvalue(a)?;
    if min <= SPD_MIN_EIGENVALUE {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    let chol = Cholesky::new(a.to_nalgebra()).ok_or(Error::Singular {
        min_eigenvalue: min,
    })?;
    let x = chol.solve(&DVector::from_column_slice(b));
    Ok(x.iter().copied().collect())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
