//! The excess-risk-balancing penalty.
//!
//! For a weight row `h` the excess-risk noise process is
//! `η = Σ λ^{-1}(k)[2h(k) − h²(k)](ξ²(k) − 1)` with standard deviation
//! `D = {2 Σ λ^{-2}(k)[2h(k) − h²(k)]²}^{1/2}`. With `ρ(k)` the normalized
//! coefficients (`Σ ρ² = 1`), the root `μ` of
//!
//! ```text
//! Σ_k F(μ ρ(k)) = log(D / D̄),   F(x) = ½ log(1 − 2x) + x + 2x²/(1 − 2x)
//! ```
//!
//! gives `Q° = 2 D μ Σ_k ρ²(k) / (1 − 2μρ(k))`, and the full penalty is
//! `Pen = 2 Σ λ^{-1}(k) h(k) + (1 + γ) Q°`. `D̄` is the value at the
//! maximal-smoothing row of the grid, where `μ = Q° = 0`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numeric::{csum, scaled_sum_squares};
use crate::smoothers::SmootherGrid;
use crate::spectra::Spectrum;

/// Distance kept between the bisection bracket and the pole of `F`.
pub const POLE_MARGIN: f64 = 1e-9;

/// Iteration cap for the bisection on `μ`.
pub const MAX_BISECTION_STEPS: usize = 200;

/// Relative residual accepted for the root of the `μ` equation.
pub const ROOT_TOLERANCE: f64 = 1e-12;

/// Below this argument `F` is evaluated from its power series.
const SERIES_CUTOVER: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PenaltyError {
    #[error("F(x) is defined for 0 ≤ x < 1/2, got {0}")]
    Domain(f64),
    #[error("weights are identically zero, so D = 0 and ρ is undefined")]
    ZeroVariance,
    #[error("γ must be positive, got {0}")]
    Gamma(f64),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("target log(D/D̄) must be finite and nonnegative, got {0}")]
    Target(f64),
    #[error("μ·max ρ = {0} violates μ·max ρ < 1/2")]
    Pole(f64),
    #[error("no root bracket: Σ F at the bracket end is {at_end}, below the target {target}")]
    Bracket { at_end: f64, target: f64 },
    #[error("row g={g} has D = {d:e} below D̄ = {dbar:e}; row 1 must be the maximal-smoothing end")]
    RowBelowDbar { g: usize, d: f64, dbar: f64 },
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), PenaltyError> {
    if got == expected {
        Ok(())
    } else {
        Err(PenaltyError::Length { what, got, expected })
    }
}

/// `λ^{-1}(k)[2h(k) − h²(k)]`, the coefficients of `η`.
pub fn excess_coefficients(h: &[f64], spectrum: &Spectrum) -> Vec<f64> {
    h.iter()
        .zip(spectrum.values())
        .map(|(&h, &l)| (2.0 * h - h * h) / l)
        .collect()
}

/// `D = {2 Σ λ^{-2}(k)[2h(k) − h²(k)]²}^{1/2}`.
pub fn variance_scale(h: &[f64], spectrum: &Spectrum) -> Result<f64, PenaltyError> {
    check_len("weights", h.len(), spectrum.len())?;
    let (ss, scale) = scaled_sum_squares(&excess_coefficients(h, spectrum));
    Ok(scale * (2.0 * ss).sqrt())
}

fn f_series(x: f64) -> f64 {
    // F(x) = Σ_{j≥2} (2x)^j (j − 1)/(2j)
    let t = 2.0 * x;
    let mut power = t * t;
    let mut sum = 0.0;
    let mut j = 2.0;
    loop {
        let term = power * (j - 1.0) / (2.0 * j);
        sum += term;
        if term <= sum * 1e-17 || j > 200.0 {
            return sum;
        }
        power *= t;
        j += 1.0;
    }
}

#[inline]
fn f_unchecked(x: f64) -> f64 {
    if x < SERIES_CUTOVER {
        f_series(x)
    } else {
        let d = 1.0 - 2.0 * x;
        0.5 * (-2.0 * x).ln_1p() + x + 2.0 * x * x / d
    }
}

/// `F(x) = ½ log(1 − 2x) + x + 2x²/(1 − 2x)` on `[0, 1/2)`.
pub fn f_of_x(x: f64) -> Result<f64, PenaltyError> {
    if !(0.0..0.5).contains(&x) {
        return Err(PenaltyError::Domain(x));
    }
    Ok(f_unchecked(x))
}

/// `ρ(k) = √2 λ^{-1}(k)[2h(k) − h²(k)] / D`.
pub fn rho(h: &[f64], spectrum: &Spectrum, d: f64) -> Result<Vec<f64>, PenaltyError> {
    check_len("weights", h.len(), spectrum.len())?;
    if !(d > 0.0) {
        return Err(PenaltyError::ZeroVariance);
    }
    Ok(excess_coefficients(h, spectrum)
        .into_iter()
        .map(|v| std::f64::consts::SQRT_2 * (v / d))
        .collect())
}

/// `μ ↦ Σ_k F(μ ρ(k))`. Requires `μ·max ρ < 1/2`.
pub fn objective(rho: &[f64], mu: f64) -> f64 {
    csum(rho.iter().map(|&r| f_unchecked(mu * r)))
}

fn max_rho(rho: &[f64]) -> f64 {
    rho.iter().fold(0.0_f64, |m, &r| m.max(r))
}

/// Upper end of the bisection bracket, `(1/2 − margin)/max ρ`.
pub fn bracket_end(rho: &[f64]) -> f64 {
    (0.5 - POLE_MARGIN) / max_rho(rho)
}

/// Root `μ ≥ 0` of `Σ F(μ ρ(k)) = target` by bisection.
///
/// The objective is strictly increasing from 0 and blows up at the pole, so
/// the bracket `[0, (1/2 − 1e-9)/max ρ]` always contains the root.
pub fn solve_mu(rho: &[f64], target: f64) -> Result<f64, PenaltyError> {
    if !(target.is_finite() && target >= 0.0) {
        return Err(PenaltyError::Target(target));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if max_rho(rho) <= 0.0 {
        return Err(PenaltyError::ZeroVariance);
    }
    let tol = ROOT_TOLERANCE * target.max(1.0);
    let (mut lo, mut hi) = (0.0, bracket_end(rho));
    let at_end = objective(rho, hi);
    if at_end < target {
        return Err(PenaltyError::Bracket { at_end, target });
    }
    let (mut r_lo, mut r_hi) = (-target, at_end - target);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = objective(rho, mid) - target;
        if r.abs() <= tol {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
            r_hi = r;
        }
    }
    Ok(if r_lo.abs() <= r_hi.abs() { lo } else { hi })
}

/// `Q° = 2 D μ Σ_k ρ²(k)/(1 − 2μρ(k))`.
pub fn q_circ(d: f64, mu: f64, rho: &[f64]) -> Result<f64, PenaltyError> {
    let edge = mu * max_rho(rho);
    if !(edge < 0.5) || mu < 0.0 {
        return Err(PenaltyError::Pole(edge));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let s = csum(rho.iter().map(|&r| r * r / (1.0 - 2.0 * mu * r)));
    Ok(2.0 * d * mu * s)
}

/// `Σ λ^{-1}(k) h(k)`, half the unbiased-risk part of the penalty.
pub fn trace_term(h: &[f64], spectrum: &Spectrum) -> f64 {
    csum(h.iter().zip(spectrum.values()).map(|(h, l)| h / l))
}

/// `Pen = 2 Σ λ^{-1}(k) h(k) + (1 + γ) Q°`.
pub fn penalty_value(h: &[f64], spectrum: &Spectrum, qcirc: f64, gamma: f64) -> Result<f64, PenaltyError> {
    check_len("weights", h.len(), spectrum.len())?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(PenaltyError::Gamma(gamma));
    }
    Ok(2.0 * trace_term(h, spectrum) + (1.0 + gamma) * qcirc)
}

/// Per-row penalty quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyRow {
    pub alpha: f64,
    /// `D(α)`.
    pub d: f64,
    /// `log(D(α)/D̄)`, the right-hand side of the `μ` equation.
    pub target: f64,
    pub mu: f64,
    pub qcirc: f64,
    pub pen: f64,
}

/// Penalty quantities for every row of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyTable {
    pub gamma: f64,
    /// `D(ᾱ)`, read from row 0.
    pub dbar: f64,
    pub rows: Vec<PenaltyRow>,
}

impl PenaltyTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn qcirc(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.qcirc)
    }

    /// CSV `g,alpha,D,mu,qcirc,pen`, 17 significant digits, 1-based `g`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "g,alpha,D,mu,qcirc,pen")?;
        for (g, r) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                g + 1,
                r.alpha,
                r.d,
                r.mu,
                r.qcirc,
                r.pen
            )?;
        }
        Ok(())
    }
}

/// Computes the penalty table for an ordered grid.
///
/// Rows are independent given `D̄` and are evaluated in parallel; the
/// result does not depend on scheduling.
pub fn build_table(grid: &SmootherGrid, gamma: f64) -> Result<PenaltyTable, PenaltyError> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(PenaltyError::Gamma(gamma));
    }
    let spectrum = grid.spectrum();
    let ds = grid
        .rows()
        .par_iter()
        .map(|h| variance_scale(h, spectrum))
        .collect::<Result<Vec<_>, _>>()?;
    let dbar = ds[0];
    if !(dbar > 0.0) {
        return Err(PenaltyError::ZeroVariance);
    }
    if let Some(g) = ds.iter().position(|&d| d < dbar) {
        return Err(PenaltyError::RowBelowDbar { g: g + 1, d: ds[g], dbar });
    }

    let rows = grid
        .rows()
        .par_iter()
        .zip(grid.alphas().par_iter())
        .zip(ds.par_iter())
        .map(|((h, &alpha), &d)| {
            let (target, mu, qcirc) = if d == dbar {
                (0.0, 0.0, 0.0)
            } else {
                let r = rho(h, spectrum, d)?;
                let target = (d / dbar).ln();
                let mu = solve_mu(&r, target)?;
                (target, mu, q_circ(d, mu, &r)?)
            };
            let pen = penalty_value(h, spectrum, qcirc, gamma)?;
            Ok(PenaltyRow { alpha, d, target, mu, qcirc, pen })
        })
        .collect::<Result<Vec<_>, PenaltyError>>()?;
    Ok(PenaltyTable { gamma, dbar, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothers::{build_grid, GridSpec, SmootherFamily};

    fn ones(n: usize) -> Spectrum {
        Spectrum::polynomial(n, 0.0).unwrap()
    }

    #[test]
    fn variance_scale_examples() {
        let s = ones(4);
        assert_eq!(variance_scale(&[0.0; 4], &s).unwrap(), 0.0);
        let h = [1.0, 1.0, 1.0, 0.0];
        assert!((variance_scale(&h, &s).unwrap() - 6f64.sqrt()).abs() < 1e-15);
        // sqrt(2)·(3/4) = 1.0606601717798212
        let d = variance_scale(&[0.5], &ones(1)).unwrap();
        assert!((d - 1.060_660_171_779_821_2).abs() < 1e-15);
        assert!(variance_scale(&[0.5], &s).is_err());
    }

    #[test]
    fn f_examples() {
        assert_eq!(f_of_x(0.0).unwrap(), 0.0);
        // ½ln(1/2) + 1/4 + 1/4 = 0.15342640972002734
        assert!((f_of_x(0.25).unwrap() - 0.153_426_409_720_027_34).abs() < 1e-15);
        assert!(f_of_x(0.499).unwrap() > 200.0);
        assert!(matches!(f_of_x(0.5), Err(PenaltyError::Domain(_))));
        assert!(matches!(f_of_x(-0.1), Err(PenaltyError::Domain(_))));
    }

    #[test]
    fn f_series_and_closed_form_agree_at_cutover() {
        for x in [0.01_f64, 0.03, 0.049, 0.05, 0.051, 0.07] {
            let closed = 0.5 * (-2.0 * x).ln_1p() + x + 2.0 * x * x / (1.0 - 2.0 * x);
            let series = f_series(x);
            assert!((closed - series).abs() <= 1e-14 * series, "x={x}: {closed} vs {series}");
        }
        // leading term x² for tiny x, where the closed form cancels badly
        let x = 1e-6;
        assert!((f_series(x) / (x * x) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rho_examples() {
        let s = ones(4);
        let h = [1.0, 0.0, 0.0, 0.0];
        let d = variance_scale(&h, &s).unwrap();
        assert_eq!(rho(&h, &s, d).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let h = [1.0, 1.0, 1.0, 1.0];
        let d = variance_scale(&h, &s).unwrap();
        for r in rho(&h, &s, d).unwrap() {
            assert!((r - 0.5).abs() < 1e-15);
        }
        assert_eq!(rho(&[0.0; 4], &s, 0.0), Err(PenaltyError::ZeroVariance));
    }

    #[test]
    fn solve_mu_examples() {
        assert_eq!(solve_mu(&[1.0], 0.0).unwrap(), 0.0);
        let mu = solve_mu(&[1.0], 0.153_426_409_720_027_34).unwrap();
        assert!((mu - 0.25).abs() < 1e-11, "{mu}");
        assert!(matches!(solve_mu(&[1.0], -1.0), Err(PenaltyError::Target(_))));
    }

    #[test]
    fn q_circ_examples() {
        assert_eq!(q_circ(3.0, 0.0, &[1.0]).unwrap(), 0.0);
        assert!(matches!(q_circ(1.0, 0.6, &[1.0]), Err(PenaltyError::Pole(_))));
        let q = q_circ(2.0, 0.25, &[1.0]).unwrap();
        assert!((q - 2.0).abs() < 1e-15);
    }

    #[test]
    fn penalty_value_examples() {
        let s = ones(3);
        assert_eq!(penalty_value(&[0.0; 3], &s, 0.0, 0.5).unwrap(), 0.0);
        assert_eq!(penalty_value(&[1.0, 0.0, 0.0], &s, 0.0, 0.5).unwrap(), 2.0);
        assert_eq!(penalty_value(&[1.0; 3], &s, 2.0, 0.5).unwrap(), 6.0 + 3.0);
        assert!(matches!(penalty_value(&[1.0; 3], &s, 0.0, 0.0), Err(PenaltyError::Gamma(_))));
    }

    #[test]
    fn table_on_natural_cutoff_identity() {
        let s = ones(3);
        let grid = build_grid(&SmootherFamily::Cutoff, &s, &GridSpec::Natural { count: None }).unwrap();
        let t = build_table(&grid, 0.5).unwrap();
        for (g, row) in t.rows.iter().enumerate() {
            assert!((row.d - (2.0 * (g + 1) as f64).sqrt()).abs() < 1e-15);
        }
        assert_eq!(t.dbar, t.rows[0].d);
        assert_eq!((t.rows[0].mu, t.rows[0].qcirc), (0.0, 0.0));
        assert!(t.rows[2].qcirc > t.rows[1].qcirc);
    }

    #[test]
    fn single_row_table() {
        let s = ones(2);
        let grid = build_grid(&SmootherFamily::Tikhonov { order: 1 }, &s, &GridSpec::Explicit { alphas: vec![1.0] }).unwrap();
        let t = build_table(&grid, 0.5).unwrap();
        assert_eq!(t.qcirc().collect::<Vec<_>>(), vec![0.0]);
    }

    #[test]
    fn table_rejects_bad_first_row() {
        let s = ones(2);
        let grid = SmootherGrid::from_weights(s.clone(), vec![2.0, 1.0], vec![vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(build_table(&grid, 0.5), Err(PenaltyError::RowBelowDbar { g: 2, .. })));
        let grid = SmootherGrid::from_weights(s, vec![2.0], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(build_table(&grid, 0.5), Err(PenaltyError::ZeroVariance));
    }

    #[test]
    fn tied_rows_share_values() {
        let s = ones(3);
        let grid = SmootherGrid::from_weights(
            s,
            vec![3.0, 2.0, 1.0],
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]],
        )
        .unwrap();
        let t = build_table(&grid, 1.0).unwrap();
        assert_eq!(t.rows[1].qcirc, t.rows[2].qcirc);
        assert_eq!(t.rows[1].mu, t.rows[2].mu);
    }

    #[test]
    fn penalty_csv_header_and_precision() {
        let s = ones(3);
        let grid = build_grid(&SmootherFamily::Cutoff, &s, &GridSpec::Natural { count: None }).unwrap();
        let t = build_table(&grid, 0.5).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("g,alpha,D,mu,qcirc,pen"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[2].parse::<f64>().unwrap(), 2f64.sqrt());
        assert_eq!(first[4], "0.0000000000000000e0");
    }
}
