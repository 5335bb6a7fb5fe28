//! Empirical risk minimization over a smoother grid.

use serde::Serialize;
use thiserror::Error;

use crate::numeric::csum;
use crate::penalty::PenaltyTable;
use crate::smoothers::SmootherGrid;
use crate::spectra::Spectrum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("observation coefficient y({k}) is not finite")]
    NotFinite { k: usize },
    #[error("noise level must be finite and nonnegative, got {0}")]
    Sigma(f64),
    #[error("grid and penalty table disagree: {0}")]
    Mismatch(String),
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), SelectionError> {
    if got == expected {
        Ok(())
    } else {
        Err(SelectionError::Length { what, got, expected })
    }
}

/// Data in spectral coordinates: `y(k) = ⟨Y, ψ_k⟩/λ(k) = θ(k) + σλ^{-1/2}(k)ξ(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralObservation {
    y: Vec<f64>,
    sigma: f64,
    spectrum: Spectrum,
}

impl SpectralObservation {
    pub fn new(y: Vec<f64>, sigma: f64, spectrum: Spectrum) -> Result<Self, SelectionError> {
        check_len("observation", y.len(), spectrum.len())?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(SelectionError::NotFinite { k: i + 1 });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(SelectionError::Sigma(sigma));
        }
        Ok(Self { y, sigma, spectrum })
    }

    /// Builds `y(k) = θ(k) + σλ^{-1/2}(k)ξ(k)`.
    pub fn synthesize(theta: &[f64], xi: &[f64], sigma: f64, spectrum: &Spectrum) -> Result<Self, SelectionError> {
        check_len("signal", theta.len(), spectrum.len())?;
        check_len("noise", xi.len(), spectrum.len())?;
        let y = theta
            .iter()
            .zip(xi)
            .zip(spectrum.values())
            .map(|((t, x), l)| t + sigma * x / l.sqrt())
            .collect();
        Self::new(y, sigma, spectrum.clone())
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Same data scaled by `c`: `(c·y, c·σ)`.
    pub fn scaled(&self, c: f64) -> Result<Self, SelectionError> {
        Self::new(self.y.iter().map(|v| c * v).collect(), c * self.sigma, self.spectrum.clone())
    }
}

/// `Σ_k (1 − h(k))² y²(k) + σ² pen`.
pub fn empirical_risk(obs: &SpectralObservation, h: &[f64], pen: f64) -> Result<f64, SelectionError> {
    check_len("weights", h.len(), obs.y.len())?;
    Ok(residual(obs.y(), h) + obs.sigma * obs.sigma * pen)
}

fn residual(y: &[f64], h: &[f64]) -> f64 {
    csum(y.iter().zip(h).map(|(y, h)| {
        let r = (1.0 - h) * y;
        r * r
    }))
}

/// `R_α − ‖y‖² = Σ_k (h²(k) − 2h(k)) y²(k) + σ² pen`.
///
/// Has the same argmin as [`empirical_risk`] but avoids cancelling the
/// large `y²(k)` of coordinates with small weight.
pub fn centered_risk(obs: &SpectralObservation, h: &[f64], pen: f64) -> Result<f64, SelectionError> {
    check_len("weights", h.len(), obs.y.len())?;
    let fit = csum(obs.y.iter().zip(h).map(|(y, h)| h * (h - 2.0) * y * y));
    Ok(fit + obs.sigma * obs.sigma * pen)
}

/// `θ̂_α(k) = h(k) y(k)`.
pub fn estimate_at(obs: &SpectralObservation, h: &[f64]) -> Result<Vec<f64>, SelectionError> {
    check_len("weights", h.len(), obs.y.len())?;
    Ok(obs.y.iter().zip(h).map(|(y, h)| h * y).collect())
}

/// Index of the smallest value; ties go to the smaller index.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Outcome of [`select`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Selected 0-based grid row.
    pub row_hat: usize,
    pub alpha_hat: f64,
    /// `R_α[Y, Pen]` for every row.
    pub r_values: Vec<f64>,
    pub estimate: Vec<f64>,
}

/// `α̂ = argmin_α R_α[Y, Pen]` over the grid, ties toward more smoothing.
pub fn select(obs: &SpectralObservation, grid: &SmootherGrid, table: &PenaltyTable) -> Result<SelectionResult, SelectionError> {
    if grid.len() != table.len() {
        return Err(SelectionError::Mismatch(format!(
            "{} grid rows but {} table rows",
            grid.len(),
            table.len()
        )));
    }
    if grid.spectrum() != obs.spectrum() {
        return Err(SelectionError::Mismatch("observation and grid use different spectra".into()));
    }
    let centered = grid
        .rows()
        .iter()
        .zip(&table.rows)
        .map(|(h, row)| centered_risk(obs, h, row.pen))
        .collect::<Result<Vec<_>, _>>()?;
    let row_hat = argmin_first(&centered);
    let norm = csum(obs.y.iter().map(|y| y * y));
    let r_values = centered.iter().map(|c| norm + c).collect();
    let estimate = estimate_at(obs, &grid.rows()[row_hat])?;
    Ok(SelectionResult { row_hat, alpha_hat: grid.alphas()[row_hat], r_values, estimate })
}
