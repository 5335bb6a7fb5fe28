//! Experiment configuration (JSON).

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::evaluation::SignalSpec;
use crate::penalty::{build_table, PenaltyTable};
use crate::smoothers::{build_grid, GridSpec, SmootherFamily, SmootherGrid};
use crate::spectra::{decompose, read_matrix_csv, read_spectrum_csv, Spectrum};

pub const DEFAULT_GAMMA: f64 = 0.5;

/// Where the spectrum comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    /// `λ(k) = k^{-β}`.
    Polynomial { n: usize, beta: f64 },
    /// `λ(k) = exp(-βk)`.
    Exponential { n: usize, beta: f64 },
    /// Literal eigenvalues.
    Values { lambda: Vec<f64> },
    /// CSV with header `k,lambda`.
    Csv { path: PathBuf },
    /// Dense design matrix CSV, decomposed with Jacobi rotations.
    Matrix { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumSpec,
    pub family: SmootherFamily,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_signal")]
    pub signal: SignalSpec,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_sigma() -> f64 {
    1.0
}

fn default_signal() -> SignalSpec {
    SignalSpec::Zero
}

fn default_reps() -> usize {
    100
}

/// Config with its spectrum, grid, penalty table and signal built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spectrum: Spectrum,
    pub grid: SmootherGrid,
    pub theta: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Scalar checks that do not need the spectrum.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(CliError::Validation(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(CliError::Validation(format!("sigma must be finite and nonnegative, got {}", self.sigma)));
        }
        if self.n_reps == 0 {
            return Err(CliError::Validation("n_reps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_spectrum(&self) -> Result<Spectrum, CliError> {
        let open = |p: &Path| File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
        let spectrum = match &self.spectrum {
            SpectrumSpec::Polynomial { n, beta } => Spectrum::polynomial(*n, *beta)?,
            SpectrumSpec::Exponential { n, beta } => Spectrum::exponential(*n, *beta)?,
            SpectrumSpec::Values { lambda } => Spectrum::new(lambda.clone())?,
            SpectrumSpec::Csv { path } => read_spectrum_csv(open(path)?)?,
            SpectrumSpec::Matrix { path } => decompose(&read_matrix_csv(open(path)?)?)?.spectrum,
        };
        Ok(spectrum)
    }

    pub fn prepare(&self) -> Result<Prepared, CliError> {
        self.validate()?;
        let spectrum = self.build_spectrum()?;
        let grid = build_grid(&self.family, &spectrum, &self.grid)?;
        let theta = self.signal.realize(&spectrum)?;
        Ok(Prepared { spectrum, grid, theta })
    }

    pub fn penalty_table(&self, grid: &SmootherGrid) -> Result<PenaltyTable, CliError> {
        Ok(build_table(grid, self.gamma)?)
    }
}
