//! Datasets, seeded generators and CSV I/O.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::dot;

/// Every stored row satisfies `|‖x_i‖₂ − 1| ≤ UNIT_TOL`.
pub const UNIT_TOL: f64 = 1e-10;
/// Rows further than this from unit norm are rejected by [`load_csv`] unless
/// normalization is requested.
pub const LOAD_NORM_TOL: f64 = 1e-6;
/// Labels above this magnitude are accepted with a warning.
pub const LABEL_WARN: f64 = 10.0;

/// Key for every random draw: `seed` picks the experiment, `stream` the trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        RngSeed { stream, ..self }
    }

    /// A seed for an unrelated purpose (e.g. weights vs data) that keeps the stream.
    pub fn derive(self, tag: u64) -> Self {
        RngSeed {
            seed: splitmix64(self.seed ^ splitmix64(tag)),
            stream: self.stream,
        }
    }

    /// Counter-based generator keyed by `(seed, stream)`.
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn gaussian_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub(crate) fn sign_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// How labels are assigned to generated inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(into = "String", try_from = "String")]
pub enum LabelMode {
    /// Independent fair ±1 coin flips.
    #[default]
    Random,
    /// Every label is 1.
    Ones,
    /// `√n · v_j` where `v_j` is the eigenvector of H^cts with the j-th
    /// largest eigenvalue (`eigvec:0` is the top one).
    Eigvec(usize),
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(LabelMode::Random),
            "ones" => Ok(LabelMode::Ones),
            _ => match s.strip_prefix("eigvec:") {
                Some(j) => j
                    .parse()
                    .map(LabelMode::Eigvec)
                    .map_err(|_| Error::input(format!("bad eigenvector index in {s:?}"))),
                None => Err(Error::input(format!(
                    "unknown label mode {s:?} (expected random, ones or eigvec:<j>)"
                ))),
            },
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelMode::Random => f.write_str("random"),
            LabelMode::Ones => f.write_str("ones"),
            LabelMode::Eigvec(j) => write!(f, "eigvec:{j}"),
        }
    }
}

impl From<LabelMode> for String {
    fn from(m: LabelMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for LabelMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `n` unit-norm inputs in `R^d` with real labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// `x` is row-major `n×d`; every row must already be unit norm.
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::input("dimension d must be at least 1"));
        }
        if x.len() != y.len() * d {
            return Err(Error::input(format!(
                "{} input values do not form {} rows of dimension {d}",
                x.len(),
                y.len()
            )));
        }
        let ds = Dataset {
            n: y.len(),
            d,
            x,
            y,
        };
        for i in 0..ds.n {
            let row = ds.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("row {i} has non-finite entries")));
            }
            let norm = dot(row, row).sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::validation(format!(
                    "row {i} has norm {norm}, expected 1"
                )));
            }
        }
        check_labels(&ds.y)?;
        Ok(ds)
    }

    /// Scales each row to unit norm first. Zero rows are rejected.
    pub fn normalized(d: usize, mut x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::input("dimension d must be at least 1"));
        }
        for (i, row) in x.chunks_mut(d).enumerate() {
            normalize_row(row).map_err(|_| {
                Error::validation(format!("row {i} is zero and cannot be normalized"))
            })?;
        }
        Self::new(d, x, y)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Row-major inputs.
    pub fn inputs(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn inner(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j))
    }

    pub fn with_labels(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n {
            return Err(Error::input(format!(
                "{} labels for {} samples",
                y.len(),
                self.n
            )));
        }
        check_labels(&y)?;
        self.y = y;
        Ok(self)
    }

    /// Reorders samples: new sample `i` is old sample `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::input("permutation length mismatch"));
        }
        let mut x = Vec::with_capacity(self.x.len());
        for &p in perm {
            x.extend_from_slice(self.row(p));
        }
        let y = perm.iter().map(|&p| self.y[p]).collect();
        Ok(Dataset {
            n: self.n,
            d: self.d,
            x,
            y,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.d {
            let _ = write!(out, "x{j},");
        }
        out.push_str("y\n");
        for i in 0..self.n {
            for v in self.row(i) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.y[i]);
        }
        out
    }
}

fn normalize_row(row: &mut [f64]) -> std::result::Result<(), ()> {
    let norm = dot(row, row).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(());
    }
    row.iter_mut().for_each(|v| *v /= norm);
    Ok(())
}

fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("label {i} is not finite")));
    }
    if let Some(i) = y.iter().position(|v| v.abs() > LABEL_WARN) {
        log::warn!(
            "label {i} = {} exceeds |y| <= {LABEL_WARN}; bounds assume O(1) labels",
            y[i]
        );
    }
    Ok(())
}

/// `n` mutually orthogonal unit vectors in `R^n` with ±1 labels.
///
/// The inputs are the standard basis mapped through a random signed
/// permutation, an orthogonal map whose image is exactly representable, so
/// inner products are exactly 0 or 1.
pub fn gen_orthogonal(n: usize, seed: RngSeed) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let mut rng = seed.rng();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let signs = sign_vec(&mut rng, n);
    let y = sign_vec(&mut rng, n);
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        x[i * n + perm[i]] = signs[i];
    }
    Dataset::new(n, x, y)
}

/// `x_i = g_i/‖g_i‖₂` with `g_i ~ N(0, I_d)`, labels ±1.
pub fn gen_gaussian_sphere(n: usize, d: usize, seed: RngSeed) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::input("dimension d must be at least 1"));
    }
    let mut rng = seed.rng();
    let mut x = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut g = gaussian_vec(&mut rng, d, 1.0);
        // a zero draw has probability zero; redraw rather than fail
        while normalize_row(&mut g).is_err() {
            g = gaussian_vec(&mut rng, d, 1.0);
        }
        x.extend(g);
    }
    let y = sign_vec(&mut rng, n);
    Dataset::normalized(d, x, y)
}

/// `√n · max_{i≠j} |x_iᵀx_j|`, the smallest θ with `|x_iᵀx_j| ≤ θ/√n`.
pub fn theta(ds: &Dataset) -> Result<f64> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::input("theta needs at least two samples"));
    }
    let mut max = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            max = max.max(ds.inner(i, j).abs());
        }
    }
    Ok((n as f64).sqrt() * max)
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, ds.to_csv()).map_err(|e| Error::io(path, e))
}

/// Reads `x0,...,x{d-1},y` rows. With `normalize` unset, rows more than
/// [`LOAD_NORM_TOL`] from unit norm are rejected.
pub fn load_csv(path: &Path, normalize: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path, normalize)
}

fn parse_csv(text: &str, path: &Path, normalize: bool) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(1);
    let header_ok = d >= 1
        && cols.last() == Some(&"y")
        && cols[..d]
            .iter()
            .enumerate()
            .all(|(j, c)| *c == format!("x{j}"));
    if !header_ok {
        return Err(parse_err(
            1,
            format!("header must be x0,...,x{{d-1}},y, got {header:?}"),
        ));
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", d + 1, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(
                f.parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad number {f:?}: {e}")))?,
            );
        }
        let label: f64 = fields[d]
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad label {:?}: {e}", fields[d])))?;

        let norm = dot(&row, &row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::validation(format!(
                "line {lineno}: row has norm {norm} and cannot be normalized"
            )));
        }
        let dev = (norm - 1.0).abs();
        if dev > LOAD_NORM_TOL && !normalize {
            return Err(Error::validation(format!(
                "line {lineno}: row norm {norm} is not 1 (pass --normalize to rescale)"
            )));
        }
        if dev > UNIT_TOL {
            row.iter_mut().for_each(|v| *v /= norm);
        }
        x.extend(row);
        y.push(label);
    }
    Dataset::new(d, x, y)
}
