//! Exact risks, the excess-risk identity, the penalized oracle, and the
//! Monte Carlo engine used to check the oracle inequalities empirically.
//!
//! Everything is in spectral coordinates. Since the eigenbasis is
//! orthonormal, `‖θ − θ̂‖²` there equals the loss in the original space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{csum, mean_and_se};
use crate::penalty::{excess_coefficients, PenaltyTable};
use crate::selection::{argmin_first, empirical_risk, select, SelectionError, SpectralObservation};
use crate::smoothers::SmootherGrid;
use crate::spectra::Spectrum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("invalid signal: {0}")]
    Signal(String),
    #[error("grid and penalty table disagree: {0}")]
    Mismatch(String),
    #[error("replication count must be at least 1")]
    NoReplications,
    #[error("noise level must be finite and nonnegative, got {0}")]
    Sigma(f64),
    #[error("replication {rep}: non-finite {what}")]
    NonFinite { rep: usize, what: &'static str },
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), EvaluationError> {
    if got == expected {
        Ok(())
    } else {
        Err(EvaluationError::Length { what, got, expected })
    }
}

/// The true signal `θ(k) = ⟨θ, ψ_k⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// `θ(k) = k^{-s}`.
    Power { s: f64 },
    /// `θ = w·e_j`, `j` 1-based.
    Spike { j: usize, w: f64 },
    /// Random point on the boundary of `{Σ θ²(k) b²(λ^{-1}(k)) ≤ radius}`
    /// with `b(x) = x^ν`.
    Ellipsoid { radius: f64, nu: f64, seed: u64 },
    Zero,
    Explicit { values: Vec<f64> },
}

impl SignalSpec {
    pub fn realize(&self, spectrum: &Spectrum) -> Result<Vec<f64>, EvaluationError> {
        let n = spectrum.len();
        let theta = match self {
            SignalSpec::Power { s } => (1..=n).map(|k| (k as f64).powf(-s)).collect(),
            SignalSpec::Spike { j, w } => {
                if *j == 0 || *j > n {
                    return Err(EvaluationError::Signal(format!("spike index {j} outside 1..={n}")));
                }
                let mut t = vec![0.0; n];
                t[j - 1] = *w;
                t
            }
            SignalSpec::Ellipsoid { radius, nu, seed } => {
                if !(*radius >= 0.0 && radius.is_finite() && *nu > 0.0) {
                    return Err(EvaluationError::Signal("ellipsoid needs radius ≥ 0 and ν > 0".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                // θ(k) b(λ^{-1}(k)) = c z(k)
                let norm2 = csum(z.iter().map(|x| x * x));
                let c = if norm2 > 0.0 { (radius / norm2).sqrt() * (1.0 - 1e-12) } else { 0.0 };
                z.iter().zip(spectrum.values()).map(|(z, l)| c * z * l.powf(*nu)).collect()
            }
            SignalSpec::Zero => vec![0.0; n],
            SignalSpec::Explicit { values } => {
                check_len("signal", values.len(), n)?;
                values.clone()
            }
        };
        if let Some(i) = theta.iter().position(|t: &f64| !t.is_finite()) {
            return Err(EvaluationError::Signal(format!("θ({}) is not finite", i + 1)));
        }
        Ok(theta)
    }
}

/// `Σ θ²(k) b²(λ^{-1}(k))` with `b(x) = x^ν`.
pub fn ellipsoid_norm(theta: &[f64], spectrum: &Spectrum, nu: f64) -> f64 {
    csum(theta.iter().zip(spectrum.values()).map(|(t, l)| {
        let v = t * l.powf(-nu);
        v * v
    }))
}

/// Mean square risk `L_α(θ) = Σ(1 − h)²θ² + σ² Σ λ^{-1} h²`.
pub fn oracle_risk(theta: &[f64], h: &[f64], spectrum: &Spectrum, sigma: f64) -> Result<f64, EvaluationError> {
    let n = spectrum.len();
    check_len("signal", theta.len(), n)?;
    check_len("weights", h.len(), n)?;
    let bias = csum(theta.iter().zip(h).map(|(t, h)| {
        let b = (1.0 - h) * t;
        b * b
    }));
    let var = csum(h.iter().zip(spectrum.values()).map(|(h, l)| h * h / l));
    Ok(bias + sigma * sigma * var)
}

/// `η = Σ λ^{-1}(k)[2h(k) − h²(k)](ξ²(k) − 1)`.
pub fn eta(h: &[f64], spectrum: &Spectrum, xi: &[f64]) -> Result<f64, EvaluationError> {
    check_len("weights", h.len(), spectrum.len())?;
    check_len("noise", xi.len(), spectrum.len())?;
    Ok(eta_from_coefficients(&excess_coefficients(h, spectrum), xi))
}

fn eta_from_coefficients(coef: &[f64], xi: &[f64]) -> f64 {
    csum(coef.iter().zip(xi).map(|(c, x)| c * (x * x - 1.0)))
}

/// Both sides of the excess-risk decomposition
///
/// ```text
/// L_α − R_α[Y, Pen] − 𝒞 = σ²η_α − (1+γ)σ²Q° − 2σ Σ λ^{-1/2}(1 − h)² ξ θ
/// ```
///
/// with `𝒞 = −σ² Σ λ^{-1} ξ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessIdentity {
    /// Left side from the definitions of `L`, `R` and `𝒞`.
    pub lhs: f64,
    /// Right side from the decomposition.
    pub rhs: f64,
    /// `|L| + |R| + |𝒞|`: the magnitude the left side is cancelled from.
    pub scale: f64,
}

impl ExcessIdentity {
    /// `|lhs − rhs| ≤ tol·(1 + scale)`.
    pub fn agrees(&self, tol: f64) -> bool {
        (self.lhs - self.rhs).abs() <= tol * (1.0 + self.scale)
    }
}

/// Evaluates both sides of the excess-risk identity independently.
pub fn excess_identity_check(
    theta: &[f64],
    h: &[f64],
    spectrum: &Spectrum,
    sigma: f64,
    xi: &[f64],
    qcirc: f64,
    gamma: f64,
) -> Result<ExcessIdentity, EvaluationError> {
    let n = spectrum.len();
    check_len("signal", theta.len(), n)?;
    check_len("weights", h.len(), n)?;
    check_len("noise", xi.len(), n)?;
    let lambda = spectrum.values();

    // left: definitions
    let obs = SpectralObservation::synthesize(theta, xi, sigma, spectrum)?;
    let trace = csum(h.iter().zip(lambda).map(|(h, l)| h / l));
    let pen = 2.0 * trace + (1.0 + gamma) * qcirc;
    let l = oracle_risk(theta, h, spectrum, sigma)?;
    let r = empirical_risk(&obs, h, pen)?;
    let c = -sigma * sigma * csum(xi.iter().zip(lambda).map(|(x, l)| x * x / l));
    let lhs = l - r - c;

    // right: decomposition
    let eta = eta(h, spectrum, xi)?;
    let cross = csum(
        theta
            .iter()
            .zip(h)
            .zip(xi)
            .zip(lambda)
            .map(|(((t, h), x), l)| (1.0 - h) * (1.0 - h) * x * t / l.sqrt()),
    );
    let rhs = sigma * sigma * eta - (1.0 + gamma) * sigma * sigma * qcirc - 2.0 * sigma * cross;

    Ok(ExcessIdentity { lhs, rhs, scale: l.abs() + r.abs() + c.abs() })
}

/// True and penalized risks along the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskCurve {
    /// `L_α(θ)` per row.
    pub l_alpha: Vec<f64>,
    /// `R̄_α(θ) = L_α(θ) + (1+γ)σ²Q°(α)` per row.
    pub rbar: Vec<f64>,
    /// Row minimizing `L_α` (ideal oracle).
    pub ideal_row: usize,
    /// Row minimizing `R̄_α` (penalized oracle).
    pub penalized_row: usize,
}

impl RiskCurve {
    /// Penalized oracle risk `r(θ) = min_α R̄_α(θ)`.
    pub fn penalized_oracle(&self) -> f64 {
        self.rbar[self.penalized_row]
    }

    /// Ideal oracle risk `min_α L_α(θ)`.
    pub fn ideal_oracle(&self) -> f64 {
        self.l_alpha[self.ideal_row]
    }

    /// `r(θ) / min_α L_α(θ)`, how much the penalty inflates the benchmark.
    pub fn inflation(&self) -> f64 {
        self.penalized_oracle() / self.ideal_oracle()
    }
}

fn check_grid_table(grid: &SmootherGrid, table: &PenaltyTable) -> Result<(), EvaluationError> {
    if grid.len() != table.len() {
        return Err(EvaluationError::Mismatch(format!(
            "{} grid rows but {} table rows",
            grid.len(),
            table.len()
        )));
    }
    Ok(())
}

pub fn risk_curve(theta: &[f64], grid: &SmootherGrid, table: &PenaltyTable, sigma: f64) -> Result<RiskCurve, EvaluationError> {
    check_grid_table(grid, table)?;
    let spectrum = grid.spectrum();
    let l_alpha = grid
        .rows()
        .iter()
        .map(|h| oracle_risk(theta, h, spectrum, sigma))
        .collect::<Result<Vec<_>, _>>()?;
    let inflate = (1.0 + table.gamma) * sigma * sigma;
    let rbar: Vec<f64> = l_alpha.iter().zip(&table.rows).map(|(l, row)| l + inflate * row.qcirc).collect();
    Ok(RiskCurve { ideal_row: argmin_first(&l_alpha), penalized_row: argmin_first(&rbar), l_alpha, rbar })
}

/// Replication scheduling. Both produce bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Everything a Monte Carlo run needs, already validated.
#[derive(Debug, Clone)]
pub struct MonteCarlo<'a> {
    pub grid: &'a SmootherGrid,
    pub table: &'a PenaltyTable,
    pub theta: &'a [f64],
    pub sigma: f64,
    pub n_reps: usize,
    pub seed: u64,
}

/// Random stream of replication `rep`, independent of all others.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Standard normal noise vector for replication `rep`.
pub fn replication_noise(seed: u64, rep: usize, n: usize) -> Vec<f64> {
    let mut rng = replication_rng(seed, rep);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// One replication's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Replication {
    pub loss: f64,
    /// `sup_g [η_g − (1+γ)Q°_g]₊`.
    pub excess_sup: f64,
    pub row_hat: usize,
}

/// Aggregates over replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub n_reps: usize,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub excess_sup_mean: f64,
    pub excess_sup_se: f64,
    /// How often each row was selected.
    pub selection_counts: Vec<usize>,
}

pub fn run_replication(mc: &MonteCarlo<'_>, coefficients: &[Vec<f64>], rep: usize) -> Result<Replication, EvaluationError> {
    let spectrum = mc.grid.spectrum();
    let xi = replication_noise(mc.seed, rep, spectrum.len());
    let obs = SpectralObservation::synthesize(mc.theta, &xi, mc.sigma, spectrum)?;
    let sel = select(&obs, mc.grid, mc.table)?;
    let loss = csum(mc.theta.iter().zip(&sel.estimate).map(|(t, e)| (t - e) * (t - e)));
    let inflate = 1.0 + mc.table.gamma;
    let excess_sup = coefficients
        .iter()
        .zip(&mc.table.rows)
        .map(|(coef, row)| (eta_from_coefficients(coef, &xi) - inflate * row.qcirc).max(0.0))
        .fold(0.0, f64::max);
    if !loss.is_finite() {
        return Err(EvaluationError::NonFinite { rep, what: "loss" });
    }
    if !excess_sup.is_finite() {
        return Err(EvaluationError::NonFinite { rep, what: "excess supremum" });
    }
    Ok(Replication { loss, excess_sup, row_hat: sel.row_hat })
}

/// Runs `n_reps` independent replications and reduces them in index order.
pub fn run_monte_carlo(mc: &MonteCarlo<'_>, execution: Execution) -> Result<MonteCarloSummary, EvaluationError> {
    if mc.n_reps == 0 {
        return Err(EvaluationError::NoReplications);
    }
    if !(mc.sigma.is_finite() && mc.sigma >= 0.0) {
        return Err(EvaluationError::Sigma(mc.sigma));
    }
    check_grid_table(mc.grid, mc.table)?;
    check_len("signal", mc.theta.len(), mc.grid.spectrum().len())?;
    let spectrum = mc.grid.spectrum();
    let coefficients: Vec<Vec<f64>> = mc.grid.rows().iter().map(|h| excess_coefficients(h, spectrum)).collect();

    let reps: Vec<Replication> = match execution {
        Execution::Serial => (0..mc.n_reps)
            .map(|rep| run_replication(mc, &coefficients, rep))
            .collect::<Result<_, _>>()?,
        Execution::Parallel => (0..mc.n_reps)
            .into_par_iter()
            .map(|rep| run_replication(mc, &coefficients, rep))
            .collect::<Result<_, _>>()?,
    };

    let losses: Vec<f64> = reps.iter().map(|r| r.loss).collect();
    let sups: Vec<f64> = reps.iter().map(|r| r.excess_sup).collect();
    let (mean_loss, se_loss) = mean_and_se(&losses);
    let (excess_sup_mean, excess_sup_se) = mean_and_se(&sups);
    let mut selection_counts = vec![0; mc.grid.len()];
    for r in &reps {
        selection_counts[r.row_hat] += 1;
    }
    Ok(MonteCarloSummary { n_reps: mc.n_reps, mean_loss, se_loss, excess_sup_mean, excess_sup_se, selection_counts })
}

/// Full experiment report: configuration echo plus Monte Carlo aggregates
/// and the exact risk benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub seed: u64,
    pub n_reps: usize,
    pub mean_loss: f64,
    pub se_loss: f64,
    /// Penalized oracle risk `r(θ)`.
    pub oracle_risk: f64,
    /// 1-based row attaining `r(θ)`.
    pub oracle_g: usize,
    /// `min_α L_α(θ)`.
    pub ideal_oracle: f64,
    pub ideal_g: usize,
    /// `mean_loss / r(θ)`.
    pub ratio: f64,
    pub ratio_se: f64,
    /// `r(θ) / min_α L_α(θ)`.
    pub inflation: f64,
    pub excess_sup_mean: f64,
    pub excess_sup_se: f64,
    pub dbar: f64,
    pub grid_points: usize,
    /// Largest ratio between consecutive α values on the grid.
    pub grid_resolution: f64,
    pub selection_counts: Vec<usize>,
}

impl ExperimentReport {
    pub fn assemble(config: serde_json::Value, seed: u64, grid: &SmootherGrid, table: &PenaltyTable, curve: &RiskCurve, mc: &MonteCarloSummary) -> Self {
        let r = curve.penalized_oracle();
        let alphas = grid.alphas();
        let grid_resolution = alphas
            .windows(2)
            .map(|w| (w[0] / w[1]).max(w[1] / w[0]))
            .fold(1.0, f64::max);
        Self {
            config,
            seed,
            n_reps: mc.n_reps,
            mean_loss: mc.mean_loss,
            se_loss: mc.se_loss,
            oracle_risk: r,
            oracle_g: curve.penalized_row + 1,
            ideal_oracle: curve.ideal_oracle(),
            ideal_g: curve.ideal_row + 1,
            ratio: if r > 0.0 { mc.mean_loss / r } else { f64::NAN },
            ratio_se: if r > 0.0 { mc.se_loss / r } else { f64::NAN },
            inflation: curve.inflation(),
            excess_sup_mean: mc.excess_sup_mean,
            excess_sup_se: mc.excess_sup_se,
            dbar: table.dbar,
            grid_points: grid.len(),
            grid_resolution,
            selection_counts: mc.selection_counts.clone(),
        }
    }
}

/// Writes per-row risk curves as CSV `g,alpha,l_alpha,rbar,qcirc,pen`.
pub fn write_risk_curve_csv<W: std::io::Write>(grid: &SmootherGrid, table: &PenaltyTable, curve: &RiskCurve, mut out: W) -> std::io::Result<()> {
    writeln!(out, "g,alpha,l_alpha,rbar,qcirc,pen")?;
    for g in 0..grid.len() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            g + 1,
            grid.alphas()[g],
            curve.l_alpha[g],
            curve.rbar[g],
            table.rows[g].qcirc,
            table.rows[g].pen
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::build_table;
    use crate::smoothers::{build_grid, GridSpec, SmootherFamily};

    fn poly(n: usize) -> Spectrum {
        Spectrum::polynomial(n, 1.0).unwrap()
    }

    #[test]
    fn oracle_risk_examples() {
        let s = poly(3);
        let theta = [1.0, 2.0, -1.0];
        // h ≡ 1: maximum-likelihood risk σ² Σ λ^{-1} = 0.25·6
        assert_eq!(oracle_risk(&theta, &[1.0; 3], &s, 0.5).unwrap(), 1.5);
        assert_eq!(oracle_risk(&theta, &[0.0; 3], &s, 0.5).unwrap(), 6.0);
        assert_eq!(oracle_risk(&[0.0; 3], &[0.5; 3], &s, 1.0).unwrap(), 0.25 * 6.0);
    }

    #[test]
    fn eta_examples() {
        let s = poly(3);
        assert_eq!(eta(&[0.3, 0.7, 1.0], &s, &[1.0, -1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(eta(&[0.0; 3], &s, &[3.0, 0.2, 1.5]).unwrap(), 0.0);
        assert!(eta(&[0.0; 2], &s, &[0.0; 3]).is_err());
    }

    #[test]
    fn identity_degenerate_cases() {
        let s = poly(4);
        let theta = [1.0, -2.0, 0.5, 0.1];
        let h = [1.0, 0.6, 0.2, 0.0];
        let id = excess_identity_check(&theta, &h, &s, 0.0, &[0.3, -1.0, 2.0, 0.5], 3.0, 0.5).unwrap();
        assert_eq!(id.lhs, 0.0);
        assert_eq!(id.rhs, 0.0);
        let id = excess_identity_check(&theta, &h, &s, 0.7, &[0.0; 4], 3.0, 0.5).unwrap();
        assert!((id.lhs - id.rhs).abs() <= 1e-12 * (1.0 + id.lhs.abs()));
    }

    #[test]
    fn identity_random_instance() {
        let s = poly(30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
            let xi: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
            let h: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let id = excess_identity_check(&theta, &h, &s, 0.3, &xi, 2.5, 0.8).unwrap();
            assert!(id.agrees(1e-10), "{id:?}");
        }
    }

    #[test]
    fn signals() {
        let s = poly(4);
        assert_eq!(SignalSpec::Power { s: 1.0 }.realize(&s).unwrap(), vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
        assert_eq!(SignalSpec::Spike { j: 2, w: 3.0 }.realize(&s).unwrap(), vec![0.0, 3.0, 0.0, 0.0]);
        assert!(SignalSpec::Spike { j: 5, w: 3.0 }.realize(&s).is_err());
        assert!(SignalSpec::Explicit { values: vec![1.0] }.realize(&s).is_err());
        let theta = SignalSpec::Ellipsoid { radius: 2.0, nu: 1.0, seed: 9 }.realize(&s).unwrap();
        let norm = ellipsoid_norm(&theta, &s, 1.0);
        assert!(norm <= 2.0 && norm > 2.0 * (1.0 - 1e-10));
    }

    #[test]
    fn risk_curve_zero_case() {
        let s = poly(5);
        let grid = build_grid(&SmootherFamily::Cutoff, &s, &GridSpec::Natural { count: None }).unwrap();
        let table = build_table(&grid, 0.5).unwrap();
        let c = risk_curve(&[0.0; 5], &grid, &table, 0.0).unwrap();
        assert!(c.l_alpha.iter().chain(&c.rbar).all(|v| *v == 0.0));
        assert_eq!(c.penalized_oracle(), 0.0);
        assert_eq!(c.penalized_row, 0);
    }

    #[test]
    fn monte_carlo_serial_equals_parallel() {
        let s = poly(40);
        let grid = build_grid(&SmootherFamily::Tikhonov { order: 2 }, &s, &GridSpec::default()).unwrap();
        let table = build_table(&grid, 0.5).unwrap();
        let theta = SignalSpec::Power { s: 1.0 }.realize(&s).unwrap();
        let mc = MonteCarlo { grid: &grid, table: &table, theta: &theta, sigma: 0.1, n_reps: 64, seed: 11 };
        let a = run_monte_carlo(&mc, Execution::Serial).unwrap();
        let b = run_monte_carlo(&mc, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selection_counts.iter().sum::<usize>(), 64);
    }

    #[test]
    fn monte_carlo_noiseless_is_exact() {
        let s = poly(10);
        let grid = build_grid(&SmootherFamily::Cutoff, &s, &GridSpec::Natural { count: None }).unwrap();
        let table = build_table(&grid, 0.5).unwrap();
        let theta = SignalSpec::Power { s: 1.0 }.realize(&s).unwrap();
        let mc = MonteCarlo { grid: &grid, table: &table, theta: &theta, sigma: 0.0, n_reps: 3, seed: 1 };
        let out = run_monte_carlo(&mc, Execution::Parallel).unwrap();
        assert_eq!(out.mean_loss, 0.0);
        assert_eq!(out.se_loss, 0.0);
    }

    #[test]
    fn monte_carlo_rejects_zero_reps() {
        let s = poly(3);
        let grid = build_grid(&SmootherFamily::Cutoff, &s, &GridSpec::Natural { count: None }).unwrap();
        let table = build_table(&grid, 0.5).unwrap();
        let mc = MonteCarlo { grid: &grid, table: &table, theta: &[0.0; 3], sigma: 1.0, n_reps: 0, seed: 1 };
        assert_eq!(run_monte_carlo(&mc, Execution::Serial), Err(EvaluationError::NoReplications));
    }
}
