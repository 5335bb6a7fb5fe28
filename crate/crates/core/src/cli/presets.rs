//! Built-in experiment configurations.

use super::config::{ExperimentConfig, SpectrumSpec, DEFAULT_GAMMA};
use crate::evaluation::SignalSpec;
use crate::smoothers::{GridSpec, SmootherFamily};

pub const PRESET_NAMES: &[&str] = &[
    "default",
    "identity-cutoff",
    "poly-landweber",
    "poly-pinsker",
    "exp-cutoff",
    "exp-tikhonov",
    "oracle-ratio",
    "tikhonov-failure-q1",
    "tikhonov-failure-q2",
    "large",
];

fn geometric(count: usize) -> GridSpec {
    GridSpec::Geometric { count, alpha_min: None, alpha_max: None }
}

fn base(spectrum: SpectrumSpec, family: SmootherFamily, grid: GridSpec) -> ExperimentConfig {
    ExperimentConfig {
        spectrum,
        family,
        grid,
        gamma: DEFAULT_GAMMA,
        sigma: 0.05,
        signal: SignalSpec::Power { s: 1.0 },
        n_reps: 200,
        seed: 20240601,
        out_dir: None,
    }
}

/// Ill-posed setting where order-1 Tikhonov's penalty swamps the oracle.
fn tikhonov_failure(order: u32) -> ExperimentConfig {
    ExperimentConfig {
        sigma: 0.001,
        signal: SignalSpec::Power { s: 2.0 },
        ..base(SpectrumSpec::Exponential { n: 500, beta: 0.2 }, SmootherFamily::Tikhonov { order }, GridSpec::default())
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let poly = |n, beta| SpectrumSpec::Polynomial { n, beta };
    let exp = |n, beta| SpectrumSpec::Exponential { n, beta };
    let natural = GridSpec::Natural { count: None };
    let config = match name {
        "default" => base(poly(200, 1.0), SmootherFamily::Tikhonov { order: 2 }, GridSpec::default()),
        "identity-cutoff" => ExperimentConfig {
            sigma: 0.1,
            ..base(poly(200, 0.0), SmootherFamily::Cutoff, natural)
        },
        "poly-landweber" => base(poly(200, 1.0), SmootherFamily::Landweber { step: None }, natural),
        "poly-pinsker" => base(poly(500, 1.0), SmootherFamily::Pinsker { nu: 1.0 }, geometric(60)),
        "exp-cutoff" => base(exp(300, 0.05), SmootherFamily::Cutoff, natural),
        "exp-tikhonov" => base(exp(300, 0.05), SmootherFamily::Tikhonov { order: 1 }, GridSpec::default()),
        "oracle-ratio" => ExperimentConfig {
            n_reps: 500,
            ..base(poly(500, 1.0), SmootherFamily::Tikhonov { order: 2 }, geometric(60))
        },
        "tikhonov-failure-q1" => tikhonov_failure(1),
        "tikhonov-failure-q2" => tikhonov_failure(2),
        "large" => ExperimentConfig {
            n_reps: 20,
            ..base(poly(10_000, 1.0), SmootherFamily::Tikhonov { order: 2 }, geometric(100))
        },
        _ => return None,
    };
    Some(config)
}

pub fn all() -> impl Iterator<Item = (&'static str, ExperimentConfig)> {
    PRESET_NAMES.iter().map(|&n| (n, preset(n).expect("listed preset exists")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_prepares() {
        for (name, c) in all() {
            let p = c.prepare().unwrap_or_else(|e| panic!("{name}: {e}"));
            c.penalty_table(&p.grid).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("nope").is_none());
    }
}
