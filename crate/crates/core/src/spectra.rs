//! Eigenvalue spectra of `AᵀA`.
//!
//! A [`Spectrum`] holds `λ(1) ≥ λ(2) ≥ … ≥ λ(n) > 0`. Spectra are generated
//! from closed forms ([`Spectrum::polynomial`], [`Spectrum::exponential`]),
//! read from CSV, or obtained from a small dense design matrix through
//! [`decompose`], which runs cyclic Jacobi rotations on `AᵀA`.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::numeric::csum;

/// Smallest admissible `λ(n)/λ(1)`. Keeps `λ^{-2}(k)` representable in f64.
pub const UNDERFLOW_GUARD: f64 = 1e-150;

/// Eigenvalues below this fraction of `λ(1)` trigger a conditioning warning
/// in [`decompose`].
pub const CONDITIONING_WARNING: f64 = 1e-14;

/// Largest `n` accepted by [`decompose`].
pub const MAX_DECOMPOSE_DIM: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("spectrum is empty")]
    Empty,
    #[error("eigenvalue at k={k} is not finite ({value})")]
    NotFinite { k: usize, value: f64 },
    #[error("eigenvalue at k={k} is not strictly positive ({value})")]
    NotPositive { k: usize, value: f64 },
    #[error("eigenvalues not nonincreasing at k={k}: {value} exceeds the previous eigenvalue {prev}")]
    NotMonotone { k: usize, value: f64, prev: f64 },
    #[error("eigenvalue at k={k} is below the underflow guard: λ({k})/λ(1) = {ratio:e} < {UNDERFLOW_GUARD:e}")]
    Guard { k: usize, ratio: f64 },
    #[error("invalid spectrum parameter: {0}")]
    Parameter(String),
    #[error("matrix dimension {n} exceeds the dense limit {max}")]
    TooLarge { n: usize, max: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    MatrixNotFinite { row: usize, col: usize },
    #[error("AᵀA is numerically singular: λ({k}) = {value:e} relative to λ(1) = {lambda1:e}")]
    Singular { k: usize, value: f64, lambda1: f64 },
    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

/// Decreasing positive eigenvalues of `AᵀA`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    lambda: Vec<f64>,
}

impl Spectrum {
    /// Validates and wraps a vector of eigenvalues.
    pub fn new(lambda: Vec<f64>) -> Result<Self, SpectrumError> {
        validate(&lambda)?;
        Ok(Self { lambda })
    }

    /// `λ(k) = k^{-β}`, the mildly ill-posed profile.
    pub fn polynomial(n: usize, beta: f64) -> Result<Self, SpectrumError> {
        if n == 0 {
            return Err(SpectrumError::Parameter("n must be at least 1".into()));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(SpectrumError::Parameter(format!(
                "polynomial exponent must be finite and nonnegative, got {beta}"
            )));
        }
        Self::new((1..=n).map(|k| (k as f64).powf(-beta)).collect())
    }

    /// `λ(k) = exp(-βk)`, the severely ill-posed profile.
    pub fn exponential(n: usize, beta: f64) -> Result<Self, SpectrumError> {
        if n == 0 {
            return Err(SpectrumError::Parameter("n must be at least 1".into()));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SpectrumError::Parameter(format!(
                "exponential rate must be finite and positive, got {beta}"
            )));
        }
        Self::new((1..=n).map(|k| (-beta * k as f64).exp()).collect())
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    /// `λ(k)` for the 1-based coordinate `k`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambda[k - 1]
    }

    pub fn largest(&self) -> f64 {
        self.lambda[0]
    }

    pub fn smallest(&self) -> f64 {
        self.lambda[self.lambda.len() - 1]
    }

    /// `cond(A) = λ(1)/λ(n)`.
    pub fn condition_number(&self) -> f64 {
        self.largest() / self.smallest()
    }

    /// Every eigenvalue multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, SpectrumError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(SpectrumError::Parameter(format!("scale must be positive, got {c}")));
        }
        Self::new(self.lambda.iter().map(|l| l * c).collect())
    }

    pub fn validate(&self) -> Result<(), SpectrumError> {
        validate(&self.lambda)
    }
}

/// Checks the spectrum invariants, reporting the first offending coordinate
/// (1-based).
pub fn validate(lambda: &[f64]) -> Result<(), SpectrumError> {
    if lambda.is_empty() {
        return Err(SpectrumError::Empty);
    }
    let first = lambda[0];
    for (i, &value) in lambda.iter().enumerate() {
        let k = i + 1;
        if !value.is_finite() {
            return Err(SpectrumError::NotFinite { k, value });
        }
        if value <= 0.0 {
            return Err(SpectrumError::NotPositive { k, value });
        }
        if i > 0 && value > lambda[i - 1] {
            return Err(SpectrumError::NotMonotone { k, value, prev: lambda[i - 1] });
        }
        let ratio = value / first;
        if ratio < UNDERFLOW_GUARD {
            return Err(SpectrumError::Guard { k, ratio });
        }
    }
    Ok(())
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpectrumError> {
        let m = rows.len();
        if m == 0 || rows[0].is_empty() {
            return Err(SpectrumError::Parameter("matrix must have at least one row and column".into()));
        }
        let n = rows[0].len();
        let mut data = Vec::with_capacity(m * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SpectrumError::Parameter(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(SpectrumError::MatrixNotFinite { row: i + 1, col: j + 1 });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: m, cols: n, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// `AᵀA`, accumulated with compensated sums.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = csum((0..self.rows).map(|r| self[(r, i)] * self[(r, j)]));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        csum(self.data.iter().map(|x| x * x)).sqrt()
    }

    pub fn trace(&self) -> f64 {
        csum((0..self.rows.min(self.cols)).map(|i| self[(i, i)]))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Result of [`decompose`].
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub spectrum: Spectrum,
    /// Orthonormal eigenvectors of `AᵀA`; column `j` pairs with `λ(j+1)`.
    pub basis: DenseMatrix,
    /// First coordinate (1-based) whose eigenvalue fell below
    /// [`CONDITIONING_WARNING`]`·λ(1)`. The value is kept as computed.
    pub conditioning_warning: Option<usize>,
}

impl Decomposition {
    /// `‖AᵀA − ΨΛΨᵀ‖_F`.
    pub fn reconstruction_error(&self, gram: &DenseMatrix) -> f64 {
        let n = gram.rows();
        let lam = self.spectrum.values();
        let mut acc = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let r = csum((0..n).map(|k| self.basis[(i, k)] * lam[k] * self.basis[(j, k)]));
                let d = gram[(i, j)] - r;
                acc.push(d * d);
            }
        }
        csum(acc).sqrt()
    }
}

/// Eigendecomposition of `AᵀA` for a small dense design matrix.
pub fn decompose(a: &DenseMatrix) -> Result<Decomposition, SpectrumError> {
    let n = a.cols();
    if n > MAX_DECOMPOSE_DIM {
        return Err(SpectrumError::TooLarge { n, max: MAX_DECOMPOSE_DIM });
    }
    for i in 0..a.rows() {
        for j in 0..n {
            if !a[(i, j)].is_finite() {
                return Err(SpectrumError::MatrixNotFinite { row: i + 1, col: j + 1 });
            }
        }
    }
    let gram = a.gram();
    let (values, vectors) = jacobi_eigen(&gram);

    // stable sort keeps ties in original index order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let lambda: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut basis = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            basis[(r, dst)] = vectors[(r, src)];
        }
    }

    let lambda1 = lambda[0];
    for (i, &value) in lambda.iter().enumerate() {
        if !(value > 0.0) || value < UNDERFLOW_GUARD * lambda1 {
            return Err(SpectrumError::Singular { k: i + 1, value, lambda1 });
        }
    }
    let conditioning_warning = lambda
        .iter()
        .position(|&l| l < CONDITIONING_WARNING * lambda1)
        .map(|i| i + 1);
    let spectrum = Spectrum::new(lambda)?;
    Ok(Decomposition { spectrum, basis, conditioning_warning })
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// Returns unsorted eigenvalues and the matrix whose columns are the
/// matching eigenvectors.
pub fn jacobi_eigen(sym: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    const MAX_SWEEPS: usize = 100;
    let n = sym.rows();
    let mut a = sym.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return ((0..n).map(|i| a[(i, i)]).collect(), v);
    }
    let tol = f64::EPSILON * scale;

    for _ in 0..MAX_SWEEPS {
        let off = csum((0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| {
            let x = a[(i, j)];
            2.0 * x * x
        }))
        .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // rotation annihilating a[p][q]
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn csv_error(line: usize, message: impl Into<String>) -> SpectrumError {
    SpectrumError::Csv { line, message: message.into() }
}

/// Reads a dense matrix: one row per line, comma-separated decimals, no
/// header.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DenseMatrix, SpectrumError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| csv_error(line, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| csv_error(line, format!("not a number: {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(csv_error(line, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

/// Reads a spectrum from CSV with header `k,lambda`.
pub fn read_spectrum_csv<R: Read>(reader: R) -> Result<Spectrum, SpectrumError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(1, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "k" || &headers[1] != "lambda" {
        return Err(csv_error(1, "expected header `k,lambda`"));
    }
    let mut lambda = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(line, e.to_string()))?;
        let k: usize = rec[0].parse().map_err(|_| csv_error(line, format!("bad index {:?}", &rec[0])))?;
        if k != lambda.len() + 1 {
            return Err(csv_error(line, format!("expected k = {}, found {k}", lambda.len() + 1)));
        }
        let value: f64 = rec[1].parse().map_err(|_| csv_error(line, format!("bad value {:?}", &rec[1])))?;
        lambda.push(value);
    }
    Spectrum::new(lambda)
}

/// Writes a spectrum as CSV with header `k,lambda`, 17 significant digits.
pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, mut out: W) -> Result<(), SpectrumError> {
    let io = |e: std::io::Error| SpectrumError::Io(e.to_string());
    writeln!(out, "k,lambda").map_err(io)?;
    for (i, l) in spectrum.values().iter().enumerate() {
        writeln!(out, "{},{:.16e}", i + 1, l).map_err(io)?;
    }
    Ok(())
}
