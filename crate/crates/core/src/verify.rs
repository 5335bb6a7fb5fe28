//! Invariant suites behind the `verify` subcommand.
//!
//! Each check returns an [`InvariantOutcome`] carrying the number of cases
//! examined and, on failure, the first counterexample as JSON.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::evaluation::excess_identity_check;
use crate::penalty::{bracket_end, objective, rho, PenaltyTable, ROOT_TOLERANCE};
use crate::smoothers::SmootherGrid;

/// Relative slack for the penalty inequalities.
pub const INEQUALITY_TOLERANCE: f64 = 1e-10;

/// Tolerance on `Σ ρ² = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Relative tolerance of the excess-risk identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Points in the monotonicity scan of `μ ↦ Σ F(μρ)`.
pub const SCAN_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub checked: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<serde_json::Value>,
}

impl InvariantOutcome {
    fn from_first_failure(name: &'static str, checked: usize, failure: Option<serde_json::Value>) -> Self {
        Self { name, passed: failure.is_none(), checked, counterexample: failure }
    }
}

/// `a ≤ b` up to relative slack.
fn le(a: f64, b: f64) -> bool {
    a <= b + INEQUALITY_TOLERANCE * a.abs().max(b.abs())
}

/// Both conditions of an ordered smoother.
pub fn check_ordered(grid: &SmootherGrid) -> InvariantOutcome {
    let failure = grid.verify_ordered().err().map(|w| json!({ "witness": w, "message": w.to_string() }));
    InvariantOutcome::from_first_failure("ordered_smoother", grid.len(), failure)
}

/// Per-row quantities recomputed from the grid for the penalty checks.
struct RowFacts {
    norm_err: f64,
    residual: f64,
    tol: f64,
    scan_violation: Option<usize>,
}

fn row_facts(grid: &SmootherGrid, table: &PenaltyTable, g: usize, scan_points: usize) -> Option<RowFacts> {
    let row = &table.rows[g];
    let h = &grid.rows()[g];
    let r = rho(h, grid.spectrum(), row.d).ok()?;
    let norm_err = (r.iter().map(|x| x * x).sum::<f64>() - 1.0).abs();
    let residual = if row.target == 0.0 { 0.0 } else { (objective(&r, row.mu) - row.target).abs() };
    let tol = ROOT_TOLERANCE * row.target.max(1.0);
    let end = bracket_end(&r);
    let mut prev = objective(&r, 0.0);
    let mut scan_violation = None;
    for i in 1..=scan_points {
        let v = objective(&r, end * i as f64 / scan_points as f64);
        if !(v > prev) {
            scan_violation = Some(i);
            break;
        }
        prev = v;
    }
    Some(RowFacts { norm_err, residual, tol, scan_violation })
}

/// Normalization, root residual, objective monotonicity, the basic penalty
/// inequalities and the sandwich bounds on every row.
pub fn check_penalty(grid: &SmootherGrid, table: &PenaltyTable, scan_points: usize) -> Vec<InvariantOutcome> {
    let rows = &table.rows;
    let g_count = rows.len();
    let dbar = table.dbar;
    let facts: Vec<Option<RowFacts>> = (0..g_count)
        .into_par_iter()
        .map(|g| row_facts(grid, table, g, scan_points))
        .collect();

    let mut out = Vec::new();

    let fail = rows
        .iter()
        .enumerate()
        .find(|(_, r)| r.d < dbar)
        .or_else(|| rows.windows(2).enumerate().find(|(_, w)| !le(w[0].d, w[1].d)).map(|(g, w)| (g + 1, &w[1])))
        .map(|(g, r)| json!({ "g": g + 1, "d": r.d, "dbar": dbar }));
    out.push(InvariantOutcome::from_first_failure("d_nondecreasing", g_count, fail));

    let fail = rows
        .first()
        .filter(|r| r.mu != 0.0 || r.qcirc != 0.0)
        .map(|r| json!({ "g": 1, "mu": r.mu, "qcirc": r.qcirc }));
    out.push(InvariantOutcome::from_first_failure("zero_at_alpha_bar", 1, fail));

    let fail = facts.iter().enumerate().find_map(|(g, f)| match f {
        None => Some(json!({ "g": g + 1, "error": "ρ undefined (D = 0)" })),
        Some(f) if f.norm_err > NORMALIZATION_TOLERANCE => Some(json!({ "g": g + 1, "abs_error": f.norm_err })),
        _ => None,
    });
    out.push(InvariantOutcome::from_first_failure("rho_normalization", g_count, fail));

    let fail = facts.iter().enumerate().find_map(|(g, f)| match f {
        Some(f) if f.residual > f.tol => Some(json!({ "g": g + 1, "residual": f.residual, "tolerance": f.tol })),
        _ => None,
    });
    out.push(InvariantOutcome::from_first_failure("root_residual", g_count, fail));

    let fail = facts.iter().enumerate().find_map(|(g, f)| {
        f.as_ref()
            .and_then(|f| f.scan_violation)
            .map(|i| json!({ "g": g + 1, "scan_point": i, "of": scan_points }))
    });
    out.push(InvariantOutcome::from_first_failure("objective_monotone", g_count, fail));

    let active: Vec<(usize, f64, f64, f64, f64)> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.d > dbar)
        .map(|(g, r)| (g, r.d, r.target, r.mu, r.qcirc))
        .collect();

    // log(D/D̄) ≤ μ Q°/D
    let fail = active
        .iter()
        .find(|&&(_, d, t, mu, q)| !le(t, mu * q / d))
        .map(|&(g, d, t, mu, q)| json!({ "g": g + 1, "log_ratio": t, "mu_q_over_d": mu * q / d }));
    out.push(InvariantOutcome::from_first_failure("mu_q_lower_bound", active.len(), fail));

    // μ ≥ min{½ √log(D/D̄), ¼}
    let fail = active
        .iter()
        .find(|&&(_, _, t, mu, _)| !le((0.5 * t.sqrt()).min(0.25), mu))
        .map(|&(g, _, t, mu, _)| json!({ "g": g + 1, "mu": mu, "bound": (0.5 * t.sqrt()).min(0.25) }));
    out.push(InvariantOutcome::from_first_failure("mu_lower_bound", active.len(), fail));

    // Q°/D̄ ≥ (D/D̄) √log(D/D̄)
    let fail = active
        .iter()
        .find(|&&(_, d, t, _, q)| !le(d / dbar * t.sqrt(), q / dbar))
        .map(|&(g, d, t, _, q)| json!({ "g": g + 1, "q_over_dbar": q / dbar, "bound": d / dbar * t.sqrt() }));
    out.push(InvariantOutcome::from_first_failure("q_lower_bound", active.len(), fail));

    // Q° ≤ (2D/μ) log(D/D̄)
    let fail = active
        .iter()
        .find(|&&(_, d, t, mu, q)| !le(q, 2.0 * d / mu * t))
        .map(|&(g, d, t, mu, q)| json!({ "g": g + 1, "qcirc": q, "bound": 2.0 * d / mu * t }));
    out.push(InvariantOutcome::from_first_failure("q_upper_bound", active.len(), fail));

    // D(α₁)/D(α₂) ≤ Q°(α₁)/Q°(α₂) for α₁ ≤ α₂
    let mut pairs = 0;
    let mut fail = None;
    'outer: for g2 in 0..g_count {
        if rows[g2].qcirc <= 0.0 {
            continue;
        }
        for g1 in g2..g_count {
            pairs += 1;
            let (a, b) = (rows[g1].d / rows[g2].d, rows[g1].qcirc / rows[g2].qcirc);
            if !le(a, b) {
                fail = Some(json!({ "g1": g1 + 1, "g2": g2 + 1, "d_ratio": a, "q_ratio": b }));
                break 'outer;
            }
        }
    }
    out.push(InvariantOutcome::from_first_failure("q_ratio_monotone", pairs, fail));

    out
}

/// Excess-risk identity on `instances` seeded draws of (row, θ, ξ).
pub fn check_excess_identity(grid: &SmootherGrid, table: &PenaltyTable, sigma: f64, seed: u64, instances: usize) -> InvariantOutcome {
    let n = grid.spectrum().len();
    let fail = (0..instances).into_par_iter().find_map_first(|i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let g = rng.random_range(0..grid.len());
        let theta: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let xi: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let id = excess_identity_check(&theta, &grid.rows()[g], grid.spectrum(), sigma, &xi, table.rows[g].qcirc, table.gamma);
        match id {
            Ok(id) if id.agrees(IDENTITY_TOLERANCE) => None,
            Ok(id) => Some(json!({ "instance": i, "g": g + 1, "lhs": id.lhs, "rhs": id.rhs, "scale": id.scale })),
            Err(e) => Some(json!({ "instance": i, "error": e.to_string() })),
        }
    });
    InvariantOutcome::from_first_failure("excess_identity", instances, fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::build_table;
    use crate::smoothers::{build_grid, GridSpec, SmootherFamily};
    use crate::spectra::Spectrum;

    #[test]
    fn all_pass_on_a_regular_grid() {
        let s = Spectrum::polynomial(50, 1.0).unwrap();
        let grid = build_grid(&SmootherFamily::Tikhonov { order: 2 }, &s, &GridSpec::Geometric { count: 30, alpha_min: None, alpha_max: None }).unwrap();
        let table = build_table(&grid, 0.5).unwrap();
        assert!(check_ordered(&grid).passed);
        for o in check_penalty(&grid, &table, 200) {
            assert!(o.passed, "{o:?}");
        }
        assert!(check_excess_identity(&grid, &table, 0.1, 5, 100).passed);
    }

    #[test]
    fn crossing_grid_fails_with_witness() {
        let s = Spectrum::new(vec![1.0, 1.0]).unwrap();
        let grid = SmootherGrid::from_weights(s, vec![2.0, 1.0], vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let o = check_ordered(&grid);
        assert!(!o.passed);
        let w = &o.counterexample.unwrap()["witness"];
        assert_eq!(w["g1"], 1);
        assert_eq!(w["k_prime"], 2);
    }
}
