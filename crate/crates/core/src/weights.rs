use rand::Rng;
use rayon::prelude::*;

use crate::data::{gaussian_vec, Dataset};
use crate::error::{Error, Result};
use crate::spectral::dot;

/// First-layer weights: `m` rows `w_r ∈ R^d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    m: usize,
    d: usize,
    data: Vec<f64>,
}

impl Weights {
    pub fn new(m: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * d {
            return Err(Error::input(format!(
                "{} weight entries do not form a {m}x{d} matrix",
                data.len()
            )));
        }
        Ok(Weights { m, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("weight rows have differing lengths"));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Weights {
            m,
            d,
            data: vec![0.0; m * d],
        }
    }

    /// Rows i.i.d. `N(0, scale² I_d)`, drawn row by row from `rng`.
    pub fn gaussian(m: usize, d: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Weights {
            m,
            d,
            data: gaussian_vec(rng, m * d, scale),
        }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, c: f64) -> Weights {
        Weights {
            m: self.m,
            d: self.d,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Reorders rows: new row `r` is old row `perm[r]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Weights> {
        if perm.len() != self.m {
            return Err(Error::input("permutation length mismatch"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Ok(Weights {
            m: self.m,
            d: self.d,
            data,
        })
    }

    pub fn check_shape(&self, other: &Weights) -> Result<()> {
        if self.m != other.m || self.d != other.d {
            return Err(Error::input(format!(
                "weight shapes differ: {}x{} vs {}x{}",
                self.m, self.d, other.m, other.d
            )));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, ds: &Dataset) -> Result<()> {
        if self.d != ds.d() {
            return Err(Error::input(format!(
                "weight dimension {} does not match data dimension {}",
                self.d,
                ds.d()
            )));
        }
        Ok(())
    }

    /// Pre-activations `w_rᵀx_i` as an `m×n` row-major matrix.
    pub fn preactivations(&self, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_data(ds)?;
        let n = ds.n();
        let mut out = vec![0.0; self.m * n];
        if n == 0 {
            return Ok(out);
        }
        out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            let w = self.row(r);
            for (i, v) in row.iter_mut().enumerate() {
                *v = dot(w, ds.row(i));
            }
        });
        Ok(out)
    }
}
