//! Multistart Nelder–Mead over the bound parameters.
//!
//! Parameters live in `(1, inf)`; the search runs on `x = ln(param - 1)` so
//! every simplex vertex is feasible.

use std::cell::Cell;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bound::{ratio_general, BoundPoint};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_RESTARTS: usize = 8;
/// Coarse per-coordinate start values.
pub const START_GRID: [f64; 4] = [1.5, 2.5, 4.0, 8.0];
/// Value appended for the new level when warm-starting from `ell - 1`.
pub const NEW_LEVEL_START: f64 = 8.0;
const FULL_GRID_LIMIT: usize = 4096;
const GRADIENT_LIMIT: f64 = 1e-5;
const CURVATURE_LIMIT: f64 = -1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("restarts must be at least 1")]
    NoRestarts,
    #[error("start point has {got} coordinates, expected {expected}")]
    StartDimension { expected: usize, got: usize },
    #[error("start coordinate {0} is not a finite number greater than 1")]
    StartOutOfDomain(f64),
    #[error("every restart was discarded: {0}")]
    AllRestartsFailed(String),
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadConfig {
    /// Stop once every vertex is within this sup-distance of the best one.
    pub tolerance: f64,
    pub initial_step: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            initial_step: 0.25,
            max_evaluations: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadRun {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("objective is not finite at {at:?}")]
pub struct NonFiniteObjective {
    pub at: Vec<f64>,
}

/// Nelder–Mead with dimension-adaptive coefficients.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    config: NelderMeadConfig,
) -> Result<NelderMeadRun, NonFiniteObjective> {
    let n = start.len();
    let dim = n.max(2) as f64;
    let (reflect, expand, contract, shrink) = (1.0, 1.0 + 2.0 / dim, 0.75 - 0.5 / dim, 1.0 - 1.0 / dim);

    let evaluations = Cell::new(0usize);
    let eval = |x: &[f64]| -> Result<f64, NonFiniteObjective> {
        evaluations.set(evaluations.get() + 1);
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(NonFiniteObjective { at: x.to_vec() })
        }
    };

    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += config.initial_step;
        simplex.push(x);
    }
    let mut values = simplex.iter().map(|x| eval(x)).collect::<Result<Vec<_>, _>>()?;

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < config.tolerance {
            converged = true;
            break;
        }
        if evaluations.get() >= config.max_evaluations {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|x| x[k]).sum::<f64>() / n as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect() };

        let reflected = toward(reflect);
        let fr = eval(&reflected)?;
        if fr < values[0] {
            let expanded = toward(reflect * expand);
            let fe = eval(&expanded)?;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        // Outside contraction must beat the reflection, inside contraction
        // the worst vertex.
        let (candidate, threshold) = if fr < values[n] {
            (toward(reflect * contract), fr)
        } else {
            (toward(-contract), values[n])
        };
        let fc = eval(&candidate)?;
        if fc <= threshold {
            simplex[n] = candidate;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let moved: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + shrink * (x - b))
                .collect();
            values[i] = eval(&moved)?;
            simplex[i] = moved;
        }
    }
    Ok(NelderMeadRun {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        evaluations: evaluations.get(),
        converged,
    })
}

fn to_params(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 1.0 + v.exp()).collect()
}

fn to_search(params: &[f64]) -> Vec<f64> {
    params.iter().map(|p| (p - 1.0).ln()).collect()
}

fn objective(params: &[f64]) -> f64 {
    ratio_general(params[0], &params[1..])
}

fn objective_in_search_space(x: &[f64]) -> f64 {
    objective(&to_params(x))
}

/// Central-difference gradient in parameter space.
pub fn gradient_fd(params: &[f64]) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let h = 1e-6 * params[i].abs().max(1.0);
            let mut up = params.to_vec();
            let mut down = params.to_vec();
            up[i] += h;
            down[i] -= h;
            (objective(&up) - objective(&down)) / (up[i] - down[i])
        })
        .collect()
}

/// Central-difference Hessian in parameter space.
pub fn hessian_fd(params: &[f64]) -> DMatrix<f64> {
    let n = params.len();
    let steps: Vec<f64> = params.iter().map(|p| 1e-4 * p.abs().max(1.0)).collect();
    let at = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut p = params.to_vec();
        p[di] += si * steps[di];
        p[dj] += sj * steps[dj];
        objective(&p)
    };
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let value = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0))
                / (4.0 * steps[i] * steps[j]);
            hessian[(i, j)] = value;
            hessian[(j, i)] = value;
        }
    }
    hessian
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub ell: usize,
    pub point: BoundPoint,
    pub iterations: usize,
    pub restarts_used: usize,
    pub gradient_norm_fd: f64,
    pub hessian_min_eigenvalue: f64,
    /// Simplex collapsed and the stationarity certificate holds.
    pub converged: bool,
    /// Reasons restarts were thrown away.
    pub diagnostics: Vec<String>,
}

/// Grid starts over [`START_GRID`]; the full product for small `ell`, else
/// `(lambda, c, ..., c, last)` with every coordinate drawn from the grid.
pub fn grid_starts(ell: usize) -> Vec<Vec<f64>> {
    let dim = ell + 1;
    let full = START_GRID
        .len()
        .checked_pow(dim as u32)
        .is_some_and(|c| c <= FULL_GRID_LIMIT);
    if full {
        let mut starts = vec![Vec::new()];
        for _ in 0..dim {
            starts = starts
                .into_iter()
                .flat_map(|s| {
                    START_GRID.iter().map(move |g| {
                        let mut t = s.clone();
                        t.push(*g);
                        t
                    })
                })
                .collect();
        }
        return starts;
    }
    let mut starts = Vec::new();
    for &lambda in &START_GRID {
        for &middle in &START_GRID {
            for &last in &START_GRID {
                let mut s = vec![lambda];
                s.extend(std::iter::repeat_n(middle, ell - 1));
                s.push(last);
                starts.push(s);
            }
        }
    }
    starts
}

fn check_start(ell: usize, start: &[f64]) -> Result<(), OptimizeError> {
    if start.len() != ell + 1 {
        return Err(OptimizeError::StartDimension {
            expected: ell + 1,
            got: start.len(),
        });
    }
    match start.iter().find(|p| !(p.is_finite() && **p > 1.0)) {
        Some(p) => Err(OptimizeError::StartOutOfDomain(*p)),
        None => Ok(()),
    }
}

/// Runs Nelder–Mead from every start (in parameter space) and keeps the best.
pub fn minimize_bound_from(
    ell: usize,
    starts: &[Vec<f64>],
    tolerance: f64,
) -> Result<OptimizationResult, OptimizeError> {
    if starts.is_empty() {
        return Err(OptimizeError::NoRestarts);
    }
    for s in starts {
        check_start(ell, s)?;
    }
    let config = NelderMeadConfig {
        tolerance,
        ..NelderMeadConfig::default()
    };
    let runs: Vec<Result<(NelderMeadRun, usize), NonFiniteObjective>> =
        starts.par_iter().map(|s| polish(&to_search(s), config)).collect();

    let mut diagnostics = Vec::new();
    let mut best: Option<(usize, NelderMeadRun, usize)> = None;
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok((run, iterations)) => {
                let better = best.as_ref().is_none_or(|(_, b, _)| run.value < b.value);
                if better {
                    best = Some((index, run, iterations));
                }
            }
            Err(e) => diagnostics.push(format!("restart {index} discarded: {e}")),
        }
    }
    let Some((_, run, iterations)) = best else {
        return Err(OptimizeError::AllRestartsFailed(diagnostics.join("; ")));
    };
    let params = to_params(&run.x);
    let gradient_norm_fd = gradient_fd(&params).iter().map(|g| g * g).sum::<f64>().sqrt();
    let hessian_min_eigenvalue = SymmetricEigen::new(hessian_fd(&params))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let converged = run.converged && gradient_norm_fd <= GRADIENT_LIMIT && hessian_min_eigenvalue >= CURVATURE_LIMIT;
    let point = BoundPoint {
        lambda: params[0],
        gammas: params[1..].to_vec(),
        value: run.value,
    };
    Ok(OptimizationResult {
        ell,
        point,
        iterations,
        restarts_used: starts.len() - diagnostics.len(),
        gradient_norm_fd,
        hessian_min_eigenvalue,
        converged,
        diagnostics,
    })
}

/// Restarts the simplex around the incumbent until that stops helping, which
/// guards against premature collapse in higher dimensions.
fn polish(start: &[f64], config: NelderMeadConfig) -> Result<(NelderMeadRun, usize), NonFiniteObjective> {
    let mut run = nelder_mead(&objective_in_search_space, start, config)?;
    let mut iterations = run.iterations;
    for _ in 0..10 {
        let again = nelder_mead(
            &objective_in_search_space,
            &run.x,
            NelderMeadConfig {
                initial_step: 0.05,
                ..config
            },
        )?;
        iterations += again.iterations;
        let improved = again.value < run.value;
        if again.value <= run.value {
            run = again;
        }
        if !improved {
            break;
        }
    }
    Ok((run, iterations))
}

/// Candidate starts for `ell`: the warm start first, then grid points
/// ranked by objective value, `restarts` in total.
pub fn select_starts(ell: usize, restarts: usize, warm: Option<&[f64]>) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = warm.map(|w| w.to_vec()).into_iter().collect();
    let mut grid: Vec<(f64, usize, Vec<f64>)> = grid_starts(ell)
        .into_iter()
        .enumerate()
        .map(|(i, s)| (objective(&s), i, s))
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    starts.extend(grid.into_iter().map(|(_, _, s)| s));
    starts.truncate(restarts.max(1));
    starts
}

/// Optimizes `ell = 0, 1, ..., max_ell` in turn, warm-starting each level
/// from the previous optimum with the new γ set to [`NEW_LEVEL_START`].
pub fn optimize_chain(
    max_ell: usize,
    restarts: usize,
    tolerance: f64,
) -> Result<Vec<OptimizationResult>, OptimizeError> {
    if restarts == 0 {
        return Err(OptimizeError::NoRestarts);
    }
    let mut results: Vec<OptimizationResult> = Vec::with_capacity(max_ell + 1);
    for ell in 0..=max_ell {
        let warm = results.last().map(|r| {
            let mut w = vec![r.point.lambda];
            w.extend(&r.point.gammas);
            w.push(NEW_LEVEL_START);
            w
        });
        let starts = select_starts(ell, restarts, warm.as_deref());
        results.push(minimize_bound_from(ell, &starts, tolerance)?);
    }
    Ok(results)
}

/// Best bound found with `ell` γ-levels.
pub fn minimize_bound(ell: usize, restarts: usize, tolerance: f64) -> Result<OptimizationResult, OptimizeError> {
    Ok(optimize_chain(ell, restarts, tolerance)?
        .pop()
        .expect("chain has ell + 1 entries"))
}

/// One row per `ell`, all parameters rounded to six decimals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub ell: usize,
    pub lambda: f64,
    pub gammas: Vec<f64>,
    pub value: f64,
}

pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl TableRow {
    pub fn from_result(result: &OptimizationResult) -> Self {
        Self {
            ell: result.ell,
            lambda: round6(result.point.lambda),
            gammas: result.point.gammas.iter().copied().map(round6).collect(),
            value: round6(result.point.value),
        }
    }
}

pub fn reproduce_table(max_ell: usize) -> Result<Vec<TableRow>, OptimizeError> {
    Ok(optimize_chain(max_ell, DEFAULT_RESTARTS, DEFAULT_TOLERANCE)?
        .iter()
        .map(TableRow::from_result)
        .collect())
}
