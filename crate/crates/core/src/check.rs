//! Self-check suite: hand-derived equivalences, table values, exact
//! simulation budgets and the convergence sweep.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bound::{
    closed_p, derivative_scan_l0, error_free_p, finite_h_prediction, limit_profile, ratio_general, ratio_l0, ratio_l3,
};
use crate::construction::ConstructionParams;
use crate::optimizer::{optimize_chain, DEFAULT_RESTARTS, DEFAULT_TOLERANCE};
use crate::rational::{to_f64, Rational};
use crate::simulator::{run, verify_error_budget};

/// Evaluator for the general-ℓ bound; swappable so the suite can be shown
/// to catch a faulty implementation.
pub type GeneralEvaluator = fn(f64, &[f64]) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub quick: bool,
    pub general: GeneralEvaluator,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            quick: false,
            general: ratio_general,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Reference optimum values for `ell = 0..=3`, six decimals.
pub const TABLE_VALUES: [f64; 4] = [0.631744, 0.629748, 0.629678, 0.629674];

type CheckFn = fn(&CheckConfig) -> Result<String, String>;

const CHECKS: [(&str, CheckFn); 12] = [
    ("general-equals-l0", general_equals_l0),
    ("general-equals-l3", general_equals_l3),
    ("limit-profile-levels", limit_profile_levels),
    ("closed-p-recurrence", closed_p_recurrence),
    ("table-rows-0-3", table_rows),
    ("table-row-10", table_row_10),
    ("waterfilling-recurrence", waterfilling_recurrence),
    ("prediction-matches-simulation", prediction_matches_simulation),
    ("random-algorithm-budgets", random_algorithm_budgets),
    ("triangle-limit", triangle_limit),
    ("convergence-sweep", convergence_sweep),
    ("derivative-peak", derivative_peak),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(name, _)| *name).collect()
}

pub fn run_checks(config: &CheckConfig) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, check)| {
            let start = Instant::now();
            let result = check(config);
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match result {
                Ok(detail) => (true, detail),
                Err(detail) => (false, detail),
            };
            CheckOutcome {
                name,
                passed,
                detail,
                seconds,
            }
        })
        .collect()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn worst_relative(config: &CheckConfig, ell: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .map(|_| {
            let l = rng.random_range(1.1..=20.0);
            let gs: Vec<f64> = (0..ell).map(|_| rng.random_range(1.1..=20.0)).collect();
            let reference = if ell == 0 {
                ratio_l0(l)
            } else {
                ratio_l3(l, gs[0], gs[1], gs[2])
            };
            relative((config.general)(l, &gs), reference)
        })
        .fold(0.0, f64::max)
}

fn equivalence(config: &CheckConfig, ell: usize, seed: u64) -> Result<String, String> {
    let worst = worst_relative(config, ell, seed);
    let detail = format!("max relative difference {worst:.2e} over 100 points");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn general_equals_l0(config: &CheckConfig) -> Result<String, String> {
    equivalence(config, 0, 1)
}

fn general_equals_l3(config: &CheckConfig) -> Result<String, String> {
    equivalence(config, 3, 2)
}

fn limit_profile_levels(_: &CheckConfig) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let l = rng.random_range(1.1..=20.0);
        let g1 = rng.random_range(1.1..=20.0);
        let g2 = rng.random_range(1.1..=20.0);
        let p = limit_profile(l, &[g1, g2]);
        let first = (l + 1.0) / ((l + 2.0) * (g1 + 1.0));
        let second = (g1 * (l + 2.0) + 1.0) / ((g2 + 1.0) * (g1 + 1.0) * (l + 2.0));
        worst = worst.max((p.p[0] - first).abs()).max((p.p[1] - second).abs());
    }
    let detail = format!("max difference {worst:.2e}");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_p_recurrence(_: &CheckConfig) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let l = rng.random_range(1.01..30.0);
        for i in 1..=30 {
            worst = worst.max((closed_p(i, l) - (1.0 - closed_p(i - 1, l)) / (l + 1.0)).abs());
        }
    }
    let detail = format!("max difference {worst:.2e}");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_rows(_: &CheckConfig) -> Result<String, String> {
    let results = optimize_chain(3, DEFAULT_RESTARTS, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
    let values: Vec<f64> = results.iter().map(|r| r.point.value).collect();
    let detail = format!("values {values:.6?}");
    let matches = values.iter().zip(TABLE_VALUES).all(|(v, t)| (v - t).abs() <= 1e-6);
    let headline = values.iter().copied().fold(f64::INFINITY, f64::min) < 0.6297;
    if matches && headline && results.iter().all(|r| r.converged) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_row_10(_: &CheckConfig) -> Result<String, String> {
    let results = optimize_chain(10, DEFAULT_RESTARTS, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
    let last = results.last().expect("eleven rows");
    let trailing = &last.point.gammas[7..];
    let detail = format!("value {:.8}, trailing {trailing:.5?}", last.point.value);
    let target = [3.24164, 2.4041, 7.86352];
    let close = trailing.iter().zip(target).all(|(g, t)| (g - t).abs() <= 5e-2);
    let monotone = results.windows(2).all(|w| w[1].point.value <= w[0].point.value + 1e-9);
    if format!("{:.6}", last.point.value) == "0.629674" && close && monotone {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lambda_two(h: usize, multiplier: u64) -> ConstructionParams {
    ConstructionParams::with_multiplier(h, Rational::from(2u32), vec![], multiplier).expect("valid parameters")
}

fn waterfilling_recurrence(config: &CheckConfig) -> Result<String, String> {
    let heights = if config.quick { 3..=4 } else { 3..=6 };
    for h in heights.clone() {
        let params = lambda_two(h, 512 >> h);
        let report = run(&params, "waterfilling").map_err(|e| e.to_string())?;
        if report.p != error_free_p(&params) {
            return Err(format!("h={h}: measured p differs from the recurrence"));
        }
        let budget = verify_error_budget(&report, &params);
        if !budget.passed() {
            return Err(format!("h={h}: budget failures at levels {:?}", budget.failures()));
        }
    }
    Ok(format!("h in {heights:?}, |A| = 512"))
}

fn prediction_matches_simulation(_: &CheckConfig) -> Result<String, String> {
    let params = lambda_two(3, 16);
    let report = run(&params, "waterfilling").map_err(|e| e.to_string())?;
    let prediction = finite_h_prediction(&params).map_err(|e| e.to_string())?;
    if report.ratio == prediction.ratio {
        Ok(format!("exact ratio {:.10}", to_f64(&report.ratio)))
    } else {
        Err(format!(
            "simulated {:.10} vs predicted {:.10}",
            to_f64(&report.ratio),
            to_f64(&prediction.ratio)
        ))
    }
}

fn random_algorithm_budgets(config: &CheckConfig) -> Result<String, String> {
    let params = ConstructionParams::new(3, Rational::from(2u32), vec![Rational::from(3u32)], 4).expect("valid");
    let seeds = if config.quick { 10 } else { 50 };
    for seed in 0..seeds {
        let report = run(&params, &format!("random:{seed}")).map_err(|e| e.to_string())?;
        let budget = verify_error_budget(&report, &params);
        if !budget.passed() {
            return Err(format!("seed {seed}: failures at levels {:?}", budget.failures()));
        }
    }
    Ok(format!("{seeds} seeds"))
}

fn triangle_limit(config: &CheckConfig) -> Result<String, String> {
    let a = if config.quick { 2_000 } else { 10_000 };
    let params = ConstructionParams::new(0, Rational::from(2u32), vec![], a).expect("valid");
    let report = run(&params, "waterfilling").map_err(|e| e.to_string())?;
    let rho = to_f64(&report.rho);
    let limit = 1.0 - (-1.0f64).exp();
    let inside = rho >= limit - 10.0 / a as f64 && rho <= limit + 2.0 / a as f64;
    let detail = format!("|A| = {a}, rho = {rho:.8}");
    if inside {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn convergence_sweep(_: &CheckConfig) -> Result<String, String> {
    let limit = ratio_general(2.0, &[]);
    let mut gaps = Vec::new();
    for h in [4usize, 6, 8] {
        let params = lambda_two(h, 1);
        let prediction = finite_h_prediction(&params).map_err(|e| e.to_string())?;
        let a = params.scale() as f64 * 2f64.powi(h as i32);
        let gap = (to_f64(&prediction.ratio) - limit).abs();
        if gap > 10.0 * (2f64.powi(-(h as i32)) + 1.0 / a) {
            return Err(format!("h={h}: gap {gap:.3e} over budget"));
        }
        gaps.push(gap);
    }
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.3e}")).collect();
    let detail = format!("gaps {}", shown.join(", "));
    if gaps.windows(2).all(|w| w[1] < w[0]) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn derivative_peak(_: &CheckConfig) -> Result<String, String> {
    let scan = derivative_scan_l0(8.0, 12.0, 1e-5);
    match scan.peak {
        Some(peak) if (peak.lambda - 10.0266).abs() <= 1e-2 => Ok(format!("peak at {:.5}", peak.lambda)),
        Some(peak) => Err(format!("peak at {:.5}", peak.lambda)),
        None => Err("no interior peak".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perturbed(lambda: f64, gammas: &[f64]) -> f64 {
        ratio_general(lambda, gammas) + 1e-6
    }

    #[test]
    fn perturbed_evaluator_fails_equivalence() {
        let config = CheckConfig {
            quick: true,
            general: perturbed,
        };
        assert!(general_equals_l0(&config).is_err());
        assert!(general_equals_l3(&config).is_err());
        assert!(general_equals_l0(&CheckConfig::default()).is_ok());
    }

    #[test]
    fn names_are_unique() {
        let mut names = check_names();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), CHECKS.len());
    }
}
