//! Subcommand bodies. Each returns its artifacts in memory; [`emit`] writes
//! them.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{ExperimentConfig, SpectrumSpec};
use super::{write_atomic, CliError};
use crate::evaluation::{risk_curve, run_monte_carlo, write_risk_curve_csv, Execution, ExperimentReport, MonteCarlo};
use crate::selection::{select as select_alpha, SpectralObservation};
use crate::spectra::{decompose as jacobi_decompose, read_matrix_csv, write_spectrum_csv};
use crate::verify::{check_excess_identity, check_ordered, check_penalty, InvariantOutcome, SCAN_POINTS};

/// Random instances drawn by `verify` for the excess-risk identity.
pub const VERIFY_IDENTITY_INSTANCES: usize = 200;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub sigma: Option<f64>,
}

impl Overrides {
    /// The effective config, as echoed into artifacts. The output location
    /// is dropped so echoes do not depend on where files were written.
    pub fn apply(&self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut c = config.clone();
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(reps) = self.reps {
            c.n_reps = reps;
        }
        if let Some(sigma) = self.sigma {
            c.sigma = sigma;
        }
        c.out_dir = None;
        c
    }
}

/// Named output files (the first is the primary one) plus report lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
    /// Set when an invariant suite found a violation.
    pub failure: Option<String>,
}

impl Artifacts {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

fn config_file(config: &ExperimentConfig) -> (String, Vec<u8>) {
    ("config.json".into(), json_bytes(&config.to_json()))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Writes the artifacts into `out`, or prints the primary one when no
/// directory is given. Summary lines go to stdout alongside files and to
/// stderr otherwise.
pub fn emit(artifacts: &Artifacts, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            for (name, bytes) in &artifacts.files {
                write_atomic(&dir.join(name), bytes)?;
            }
            for line in &artifacts.summary {
                println!("{line}");
            }
        }
        None => {
            for line in &artifacts.summary {
                eprintln!("{line}");
            }
            if let Some((_, bytes)) = artifacts.files.first() {
                print!("{}", String::from_utf8_lossy(bytes));
            }
        }
    }
    Ok(())
}

/// Output directory: command line first, then the config.
pub fn output_dir(flag: Option<PathBuf>, config: Option<&ExperimentConfig>) -> Option<PathBuf> {
    flag.or_else(|| config.and_then(|c| c.out_dir.clone()))
}

/// Penalty table for every grid row.
pub fn penalty(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let prepared = config.prepare()?;
    let table = config.penalty_table(&prepared.grid)?;
    let csv = csv_bytes(|b| table.write_csv(b));
    Ok(Artifacts { files: vec![("penalty.csv".into(), csv), config_file(config)], ..Default::default() })
}

fn data_error(line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("malformed data CSV at line {line}: {message}"))
}

/// Reads spectral observations from CSV with header `k,y`.
pub fn read_observation_csv<R: Read>(reader: R) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| data_error(1, e))?.clone();
    if headers.len() != 2 || &headers[0] != "k" || &headers[1] != "y" {
        return Err(data_error(1, "expected header `k,y`"));
    }
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| data_error(line, e))?;
        let k: usize = rec[0].parse().map_err(|_| data_error(line, format!("bad index {:?}", &rec[0])))?;
        if k != y.len() + 1 {
            return Err(data_error(line, format!("expected k = {}, found {k}", y.len() + 1)));
        }
        let v: f64 = rec[1].parse().map_err(|_| data_error(line, format!("bad value {:?}", &rec[1])))?;
        if !v.is_finite() {
            return Err(data_error(line, format!("value {v} is not finite")));
        }
        y.push(v);
    }
    Ok(y)
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Data-driven choice of α for observed spectral coefficients.
pub fn select(config: &ExperimentConfig, data: &Path) -> Result<Artifacts, CliError> {
    let prepared = config.prepare()?;
    let table = config.penalty_table(&prepared.grid)?;
    let y = read_observation_csv(open(data)?)?;
    let obs = SpectralObservation::new(y, config.sigma, prepared.spectrum)?;
    let sel = select_alpha(&obs, &prepared.grid, &table)?;
    let curve: Vec<_> = sel
        .r_values
        .iter()
        .enumerate()
        .map(|(g, r)| json!({ "g": g + 1, "alpha": prepared.grid.alphas()[g], "pen": table.rows[g].pen, "r": r }))
        .collect();
    let out = json!({
        "config": config.to_json(),
        "alpha_hat": sel.alpha_hat,
        "g_hat": sel.row_hat + 1,
        "risk_curve": curve,
        "estimate": sel.estimate,
    });
    Ok(Artifacts { files: vec![("selection.json".into(), json_bytes(&out))], ..Default::default() })
}

/// Monte Carlo experiment report and exact risk curves.
pub fn simulate(config: &ExperimentConfig, execution: Execution) -> Result<Artifacts, CliError> {
    let prepared = config.prepare()?;
    let table = config.penalty_table(&prepared.grid)?;
    let curve = risk_curve(&prepared.theta, &prepared.grid, &table, config.sigma)?;
    let mc = MonteCarlo {
        grid: &prepared.grid,
        table: &table,
        theta: &prepared.theta,
        sigma: config.sigma,
        n_reps: config.n_reps,
        seed: config.seed,
    };
    let summary = run_monte_carlo(&mc, execution)?;
    let report = ExperimentReport::assemble(config.to_json(), config.seed, &prepared.grid, &table, &curve, &summary);
    let line = format!(
        "{} n={} reps={} mean_loss={:.6e} (se {:.2e}) oracle_risk={:.6e} ratio={:.4} inflation={:.4} excess_sup_mean={:.4e} dbar={:.4e}",
        config.family.name(),
        prepared.spectrum.len(),
        report.n_reps,
        report.mean_loss,
        report.se_loss,
        report.oracle_risk,
        report.ratio,
        report.inflation,
        report.excess_sup_mean,
        report.dbar,
    );
    let report_json = serde_json::to_value(&report).expect("report serializes");
    let csv = csv_bytes(|b| write_risk_curve_csv(&prepared.grid, &table, &curve, b));
    Ok(Artifacts {
        files: vec![("report.json".into(), json_bytes(&report_json)), ("risk_curve.csv".into(), csv), config_file(config)],
        summary: vec![line],
        failure: None,
    })
}

/// Ordering, penalty and excess-risk invariant suites.
pub fn verify(config: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let prepared = config.prepare()?;
    let mut outcomes: Vec<InvariantOutcome> = vec![check_ordered(&prepared.grid)];
    match config.penalty_table(&prepared.grid) {
        Ok(table) => {
            outcomes.extend(check_penalty(&prepared.grid, &table, SCAN_POINTS));
            let sigma = if config.sigma > 0.0 { config.sigma } else { 1.0 };
            outcomes.push(check_excess_identity(&prepared.grid, &table, sigma, config.seed, VERIFY_IDENTITY_INSTANCES));
        }
        Err(e) => outcomes.push(InvariantOutcome {
            name: "penalty_table",
            passed: false,
            checked: prepared.grid.len(),
            counterexample: Some(json!({ "error": e.to_string() })),
        }),
    }
    let passed = outcomes.iter().all(|o| o.passed);
    let summary = outcomes
        .iter()
        .map(|o| {
            let mut line = format!("{} {} (checked {})", if o.passed { "PASS" } else { "FAIL" }, o.name, o.checked);
            if let Some(c) = &o.counterexample {
                line.push_str(&format!(": {c}"));
            }
            line
        })
        .collect();
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    let out = json!({ "config": config.to_json(), "passed": passed, "invariants": outcomes });
    Ok(Artifacts {
        files: vec![("verify.json".into(), json_bytes(&out))],
        summary,
        failure: (!passed).then(|| format!("invariant suite failed: {}", failed.join(", "))),
    })
}

/// Eigendecomposition of `AᵀA` for a design matrix given as CSV, either
/// directly or through a config whose spectrum is a matrix.
pub fn decompose(config: Option<&ExperimentConfig>, data: Option<&Path>) -> Result<Artifacts, CliError> {
    let path = match (data, config.map(|c| &c.spectrum)) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(SpectrumSpec::Matrix { path })) => path.clone(),
        _ => return Err(CliError::Validation("decompose needs --data <matrix.csv> or a matrix spectrum in the config".into())),
    };
    let a = read_matrix_csv(open(&path)?)?;
    let d = jacobi_decompose(&a)?;
    let gram = a.gram();
    let scale = gram.frobenius_norm();
    let rel = if scale > 0.0 { d.reconstruction_error(&gram) / scale } else { 0.0 };
    let trace = gram.trace();
    let sum: f64 = crate::numeric::csum(d.spectrum.values().iter().copied());
    let mut buf = Vec::new();
    write_spectrum_csv(&d.spectrum, &mut buf)?;
    let mut summary = Vec::new();
    if let Some(k) = d.conditioning_warning {
        summary.push(format!("warning: λ({k})/λ(1) is below 1e-14; AᵀA is ill-conditioned"));
    }
    let mut info = json!({
        "n": d.spectrum.len(),
        "condition_number": d.spectrum.condition_number(),
        "reconstruction_error": rel,
        "trace_error": if trace != 0.0 { (sum - trace).abs() / trace.abs() } else { 0.0 },
        "conditioning_warning": d.conditioning_warning,
    });
    if let Some(c) = config {
        info["config"] = c.to_json();
    }
    Ok(Artifacts {
        files: vec![("spectrum.csv".into(), buf), ("decomposition.json".into(), json_bytes(&info))],
        summary,
        failure: None,
    })
}
