//! Ordered smoother families and their weight grids.
//!
//! A [`SmootherGrid`] evaluates one family `h_α(k) = H_α(λ(k))` on a finite
//! α-grid. Rows are stored so that row 0 is `ᾱ`, the maximal-smoothing end,
//! and smoothing decreases with the row index.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectra::Spectrum;

/// Default number of points on a geometric α-grid.
pub const DEFAULT_GRID_POINTS: usize = 100;

/// Default number of Landweber iterations on the natural grid.
pub const DEFAULT_LANDWEBER_ITERATIONS: usize = 100;

/// Landweber step used when none is configured, relative to `λ(1)`.
pub const DEFAULT_LANDWEBER_MARGIN: f64 = 1.1;

/// Slack used by [`SmootherGrid::verify_ordered`].
pub const ORDER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmootherError {
    #[error("tikhonov order must be a positive integer")]
    TikhonovOrder,
    #[error("landweber step a = {step} must exceed λ(1) = {lambda1}")]
    LandweberStep { step: f64, lambda1: f64 },
    #[error("pinsker exponent must be positive, got {0}")]
    PinskerExponent(f64),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("weight h[g={g}][k={k}] = {value} lies outside [0, 1]")]
    WeightOutOfRange { g: usize, k: usize, value: f64 },
    #[error("row {row} out of range for a grid with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
}

/// Spectral regularization family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmootherFamily {
    /// `H_α(λ) = 1{λ ≥ α}`.
    Cutoff,
    /// `H_α(λ) = λ^q/(λ+α)^q`; `order = 1` is classical Tikhonov–Phillips.
    Tikhonov { order: u32 },
    /// `H_k(λ) = 1 − (1 − λ/a)^{k+1}` with `α = 1/k`. The step defaults to
    /// `1.1·λ(1)`.
    Landweber {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<f64>,
    },
    /// `h_α(k) = [1 − α·b(λ^{-1}(k))]₊` with `b(x) = x^ν`.
    Pinsker { nu: f64 },
}

impl SmootherFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SmootherFamily::Cutoff => "cutoff",
            SmootherFamily::Tikhonov { .. } => "tikhonov",
            SmootherFamily::Landweber { .. } => "landweber",
            SmootherFamily::Pinsker { .. } => "pinsker",
        }
    }

    /// Checks the family parameters against a spectrum.
    pub fn validate(&self, spectrum: &Spectrum) -> Result<(), SmootherError> {
        match *self {
            SmootherFamily::Cutoff => Ok(()),
            SmootherFamily::Tikhonov { order } => {
                if order == 0 {
                    Err(SmootherError::TikhonovOrder)
                } else {
                    Ok(())
                }
            }
            SmootherFamily::Landweber { .. } => {
                let step = self.landweber_step(spectrum);
                let lambda1 = spectrum.largest();
                if step.is_finite() && step > lambda1 {
                    Ok(())
                } else {
                    Err(SmootherError::LandweberStep { step, lambda1 })
                }
            }
            SmootherFamily::Pinsker { nu } => {
                if nu.is_finite() && nu > 0.0 {
                    Ok(())
                } else {
                    Err(SmootherError::PinskerExponent(nu))
                }
            }
        }
    }

    /// Landweber step `a`, resolved against the spectrum when unset.
    pub fn landweber_step(&self, spectrum: &Spectrum) -> f64 {
        match *self {
            SmootherFamily::Landweber { step } => step.unwrap_or(DEFAULT_LANDWEBER_MARGIN * spectrum.largest()),
            _ => f64::NAN,
        }
    }

    /// Default `[α_min, ᾱ]` for geometric grids; `None` for families whose
    /// parameter is an iteration count.
    pub fn default_alpha_range(&self, spectrum: &Spectrum) -> Option<(f64, f64)> {
        let (l1, ln) = (spectrum.largest(), spectrum.smallest());
        match *self {
            SmootherFamily::Cutoff => Some((ln, l1)),
            SmootherFamily::Tikhonov { .. } => Some((1e-2 * ln, 10.0 * l1)),
            SmootherFamily::Pinsker { nu } => Some((1e-2 * ln.powf(nu), 0.5 * l1.powf(nu))),
            SmootherFamily::Landweber { .. } => None,
        }
    }
}

/// Spectral cut-off weight.
pub fn cutoff_weight(lambda: f64, alpha: f64) -> f64 {
    if lambda >= alpha {
        1.0
    } else {
        0.0
    }
}

/// Order-`q` Tikhonov weight `(λ/(λ+α))^q`.
pub fn tikhonov_weight(lambda: f64, alpha: f64, order: u32) -> f64 {
    (lambda / (lambda + alpha)).powi(order as i32)
}

/// Landweber weight after `iterations` steps of size `1/a`:
/// `1 − (1 − λ/a)^{iterations+1}`.
pub fn landweber_weight(lambda: f64, step: f64, iterations: u64) -> f64 {
    let x = lambda / step;
    if x >= 1.0 {
        // only reachable when a ≤ λ, outside the convergent regime
        return 1.0 - (1.0 - x).powf(iterations as f64 + 1.0);
    }
    // 1 − (1−x)^{m} without cancellation for small x
    -((iterations as f64 + 1.0) * (-x).ln_1p()).exp_m1()
}

/// Pinsker-type weight `[1 − α·λ^{-ν}]₊`.
pub fn pinsker_weight(lambda: f64, alpha: f64, nu: f64) -> f64 {
    (1.0 - alpha * lambda.powf(-nu)).max(0.0)
}

/// How the α-grid is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// `count` geometrically spaced values in `[alpha_min, alpha_max]`;
    /// missing bounds come from [`SmootherFamily::default_alpha_range`].
    Geometric {
        #[serde(default = "default_grid_points")]
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_max: Option<f64>,
    },
    /// Explicit α values (any order; stored decreasing). Landweber values
    /// must be reciprocals of iteration counts.
    Explicit { alphas: Vec<f64> },
    /// Cut-off: eigenvalue thresholds (all `n`, or `count` log-spaced
    /// threshold indices). Landweber: iteration counts `1..=count`.
    Natural {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
    /// Hand-specified weight rows, row 0 being `ᾱ`. Used to inject grids
    /// that need not be ordered.
    Weights { alphas: Vec<f64>, weights: Vec<Vec<f64>> },
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Geometric { count: DEFAULT_GRID_POINTS, alpha_min: None, alpha_max: None }
    }
}

/// Witness that a grid is not an ordered smoother. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderViolation {
    /// Row `g` is not monotone in `k`: it rises at `k_up` and falls at
    /// `k_down`.
    NotMonotone { g: usize, k_up: usize, k_down: usize },
    /// `h[g1][k_prime] < h[g2][k_prime]` but `h[g1][k] > h[g2][k]`.
    Crossing { g1: usize, g2: usize, k_prime: usize, k: usize },
}

impl std::fmt::Display for OrderViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderViolation::NotMonotone { g, k_up, k_down } => {
                write!(f, "row g={g} is not monotone (rises at k={k_up}, falls at k={k_down})")
            }
            OrderViolation::Crossing { g1, g2, k_prime, k } => write!(
                f,
                "rows g={g1} and g={g2} cross: h[{g1}][{k_prime}] < h[{g2}][{k_prime}] but h[{g1}][{k}] > h[{g2}][{k}]"
            ),
        }
    }
}

/// An ordered family evaluated on a finite α-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherGrid {
    family: Option<SmootherFamily>,
    spectrum: Spectrum,
    alphas: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl SmootherGrid {
    /// Wraps hand-built weight rows. Only shape and the `[0, 1]` range are
    /// checked; ordering is left to [`SmootherGrid::verify_ordered`].
    pub fn from_weights(spectrum: Spectrum, alphas: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self, SmootherError> {
        if weights.is_empty() {
            return Err(SmootherError::EmptyGrid);
        }
        if alphas.len() != weights.len() {
            return Err(SmootherError::InvalidGrid(format!(
                "{} alphas for {} weight rows",
                alphas.len(),
                weights.len()
            )));
        }
        let n = spectrum.len();
        for (g, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(SmootherError::InvalidGrid(format!(
                    "row g={} has {} weights, spectrum has {n}",
                    g + 1,
                    row.len()
                )));
            }
        }
        check_range(&weights)?;
        Ok(Self { family: None, spectrum, alphas, weights })
    }

    pub fn family(&self) -> Option<&SmootherFamily> {
        self.family.as_ref()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Number of grid rows `G`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Weights of the 0-based `row`; row 0 is `ᾱ`.
    pub fn weights_at(&self, row: usize) -> Result<&[f64], SmootherError> {
        self.weights
            .get(row)
            .map(Vec::as_slice)
            .ok_or(SmootherError::RowOutOfRange { row, rows: self.weights.len() })
    }

    /// Checks both conditions of an ordered smoother: every row monotone in
    /// `k`, and no two rows crossing. Comparisons allow
    /// [`ORDER_TOLERANCE`] of slack.
    pub fn verify_ordered(&self) -> Result<(), OrderViolation> {
        for (g, row) in self.weights.iter().enumerate() {
            let up = row.windows(2).position(|w| w[1] > w[0] + ORDER_TOLERANCE);
            let down = row.windows(2).position(|w| w[1] < w[0] - ORDER_TOLERANCE);
            if let (Some(u), Some(d)) = (up, down) {
                return Err(OrderViolation::NotMonotone { g: g + 1, k_up: u + 2, k_down: d + 2 });
            }
        }
        for (g1, a) in self.weights.iter().enumerate() {
            for (g2, b) in self.weights.iter().enumerate() {
                if g1 == g2 {
                    continue;
                }
                let Some(kp) = a.iter().zip(b).position(|(x, y)| x < y) else {
                    continue;
                };
                if let Some(k) = a.iter().zip(b).position(|(x, y)| *x > y + ORDER_TOLERANCE) {
                    return Err(OrderViolation::Crossing { g1: g1 + 1, g2: g2 + 1, k_prime: kp + 1, k: k + 1 });
                }
            }
        }
        Ok(())
    }

    /// Writes the grid as long-format CSV `g,alpha,k,h` (1-based indices).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "g,alpha,k,h")?;
        for (g, (alpha, row)) in self.alphas.iter().zip(&self.weights).enumerate() {
            for (k, h) in row.iter().enumerate() {
                writeln!(out, "{},{:.16e},{},{:.16e}", g + 1, alpha, k + 1, h)?;
            }
        }
        Ok(())
    }
}

fn check_range(weights: &[Vec<f64>]) -> Result<(), SmootherError> {
    for (g, row) in weights.iter().enumerate() {
        for (k, &value) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(SmootherError::WeightOutOfRange { g: g + 1, k: k + 1, value });
            }
        }
    }
    Ok(())
}

fn geometric(count: usize, lo: f64, hi: f64) -> Result<Vec<f64>, SmootherError> {
    if count == 0 {
        return Err(SmootherError::EmptyGrid);
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(SmootherError::InvalidGrid(format!(
            "geometric grid needs 0 < alpha_min ≤ alpha_max, got [{lo}, {hi}]"
        )));
    }
    if count == 1 {
        return Ok(vec![hi]);
    }
    let ratio = (lo / hi).ln();
    let mut alphas: Vec<f64> = (0..count)
        .map(|i| hi * (ratio * i as f64 / (count - 1) as f64).exp())
        .collect();
    alphas[count - 1] = lo;
    Ok(alphas)
}

/// Threshold indices `j` (1-based) for a cut-off natural grid.
fn cutoff_thresholds(n: usize, count: Option<usize>) -> Result<Vec<usize>, SmootherError> {
    match count {
        None => Ok((1..=n).collect()),
        Some(0) => Err(SmootherError::EmptyGrid),
        Some(c) if c >= n => Ok((1..=n).collect()),
        Some(1) => Ok(vec![1]),
        Some(c) => {
            let mut js: Vec<usize> = (0..c)
                .map(|i| ((n as f64).powf(i as f64 / (c - 1) as f64).round() as usize).clamp(1, n))
                .collect();
            js.dedup();
            Ok(js)
        }
    }
}

/// Evaluates `family` on the grid described by `grid_spec`.
pub fn build_grid(family: &SmootherFamily, spectrum: &Spectrum, grid_spec: &GridSpec) -> Result<SmootherGrid, SmootherError> {
    if let GridSpec::Weights { alphas, weights } = grid_spec {
        return SmootherGrid::from_weights(spectrum.clone(), alphas.clone(), weights.clone());
    }
    family.validate(spectrum)?;
    let lambda = spectrum.values();

    let (alphas, weights): (Vec<f64>, Vec<Vec<f64>>) = match (family, grid_spec) {
        (SmootherFamily::Cutoff, GridSpec::Natural { count }) => {
            // row j keeps the top j coordinates, threshold λ(j)
            let js = cutoff_thresholds(lambda.len(), *count)?;
            let alphas = js.iter().map(|&j| lambda[j - 1]).collect();
            let weights = js
                .iter()
                .map(|&j| (1..=lambda.len()).map(|k| if k <= j { 1.0 } else { 0.0 }).collect())
                .collect();
            (alphas, weights)
        }
        (SmootherFamily::Landweber { .. }, GridSpec::Natural { count }) => {
            let iterations = count.unwrap_or(DEFAULT_LANDWEBER_ITERATIONS);
            if iterations == 0 {
                return Err(SmootherError::EmptyGrid);
            }
            landweber_rows(family.landweber_step(spectrum), lambda, (1..=iterations as u64).collect())
        }
        (SmootherFamily::Landweber { .. }, GridSpec::Explicit { alphas }) => {
            let mut iters = Vec::with_capacity(alphas.len());
            for &a in alphas {
                let k = (1.0 / a).round();
                if !(a > 0.0 && k >= 1.0 && (k * a - 1.0).abs() <= 1e-9) {
                    return Err(SmootherError::InvalidGrid(format!(
                        "landweber α = {a} is not the reciprocal of an iteration count"
                    )));
                }
                iters.push(k as u64);
            }
            iters.sort_unstable();
            iters.dedup();
            landweber_rows(family.landweber_step(spectrum), lambda, iters)
        }
        (SmootherFamily::Landweber { .. }, GridSpec::Geometric { .. }) => {
            return Err(SmootherError::InvalidGrid(
                "landweber is indexed by iteration counts; use a natural or explicit grid".into(),
            ));
        }
        (SmootherFamily::Tikhonov { .. } | SmootherFamily::Pinsker { .. }, GridSpec::Natural { .. }) => {
            return Err(SmootherError::InvalidGrid(format!("{} has no natural grid", family.name())));
        }
        (_, GridSpec::Geometric { count, alpha_min, alpha_max }) => {
            let (dlo, dhi) = family
                .default_alpha_range(spectrum)
                .expect("continuous families have a default α-range");
            let alphas = geometric(*count, alpha_min.unwrap_or(dlo), alpha_max.unwrap_or(dhi))?;
            continuous_rows(family, lambda, alphas)
        }
        (_, GridSpec::Explicit { alphas }) => {
            if alphas.is_empty() {
                return Err(SmootherError::EmptyGrid);
            }
            if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                return Err(SmootherError::InvalidGrid(format!("α must be positive and finite, got {a}")));
            }
            let mut sorted = alphas.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.dedup();
            continuous_rows(family, lambda, sorted)
        }
        (_, GridSpec::Weights { .. }) => unreachable!("handled above"),
    };

    if weights.is_empty() {
        return Err(SmootherError::EmptyGrid);
    }
    check_range(&weights)?;
    Ok(SmootherGrid { family: Some(family.clone()), spectrum: spectrum.clone(), alphas, weights })
}

fn continuous_rows(family: &SmootherFamily, lambda: &[f64], alphas: Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let weights = alphas
        .iter()
        .map(|&alpha| {
            lambda
                .iter()
                .map(|&l| match *family {
                    SmootherFamily::Cutoff => cutoff_weight(l, alpha),
                    SmootherFamily::Tikhonov { order } => tikhonov_weight(l, alpha, order),
                    SmootherFamily::Pinsker { nu } => pinsker_weight(l, alpha, nu),
                    SmootherFamily::Landweber { .. } => unreachable!("landweber uses iteration grids"),
                })
                .collect()
        })
        .collect();
    (alphas, weights)
}

/// Rows for increasing iteration counts, i.e. decreasing `α = 1/k`.
fn landweber_rows(step: f64, lambda: &[f64], iterations: Vec<u64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let alphas = iterations.iter().map(|&k| 1.0 / k as f64).collect();
    let weights = iterations
        .iter()
        .map(|&k| lambda.iter().map(|&l| landweber_weight(l, step, k)).collect())
        .collect();
    (alphas, weights)
}
