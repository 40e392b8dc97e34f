//! Competitive-ratio upper bounds of the construction in the limit of many
//! λ-levels, plus exact finite-size predictions for water-filling.

use malachite_base::num::arithmetic::traits::Pow;
use malachite_base::num::basic::traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::construction::{level_sizes, ConstructionError, ConstructionParams};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("{name} must be a finite number greater than 1, got {value}")]
    NotAboveOne { name: String, value: f64 },
}

fn check_params(lambda: f64, gammas: &[f64]) -> Result<(), BoundError> {
    let valid = |v: f64| v.is_finite() && v > 1.0;
    if !valid(lambda) {
        return Err(BoundError::NotAboveOne {
            name: "lambda".into(),
            value: lambda,
        });
    }
    if let Some((j, &g)) = gammas.iter().enumerate().find(|(_, g)| !valid(**g)) {
        return Err(BoundError::NotAboveOne {
            name: format!("gamma_{}", j + 1),
            value: g,
        });
    }
    Ok(())
}

/// Error-free average value of `U_i` for `i <= h`.
pub fn closed_p(i: u32, lambda: f64) -> f64 {
    (1.0 - (-1.0 / (lambda + 1.0)).powi(i as i32)) / (lambda + 2.0)
}

pub fn closed_p_exact(i: usize, lambda: &Rational) -> Rational {
    let base = -(Rational::ONE / (lambda + Rational::ONE));
    (Rational::ONE - base.pow(i as u64)) / (lambda + Rational::from(2u32))
}

/// `pbar_0 = 0`, `pbar_i = (1 - pbar_{i-1}) / (factor_i + 1)` over all levels.
pub fn error_free_p(params: &ConstructionParams) -> Vec<Rational> {
    let mut p = vec![Rational::ZERO];
    for i in 1..=params.depth() {
        let next = (Rational::ONE - &p[i - 1]) / (params.growth_factor(i) + Rational::ONE);
        p.push(next);
    }
    p
}

/// Level statistics once the λ-levels are infinitely deep, measured relative
/// to the last λ-level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitProfile {
    /// Limit of `p_h`.
    pub p_star: f64,
    /// Limits of `p_{h+1}, ..., p_{h+ell}`.
    pub p: Vec<f64>,
    /// `w_0 = 1`, `w_j = gamma_1 ... gamma_j`: size of level `h+j` over level `h`.
    pub w: Vec<f64>,
    pub gamma_bar: f64,
    /// Limit of the triangle mass per vertex of `A`.
    pub rho_limit: f64,
}

impl LimitProfile {
    pub fn p_a(&self) -> f64 {
        self.p.last().copied().unwrap_or(self.p_star)
    }
}

pub fn limit_profile(lambda: f64, gammas: &[f64]) -> LimitProfile {
    let p_star = 1.0 / (lambda + 2.0);
    let mut p = Vec::with_capacity(gammas.len());
    let mut w = vec![1.0];
    let mut prev = p_star;
    for g in gammas {
        prev = (1.0 - prev) / (g + 1.0);
        p.push(prev);
        w.push(w.last().expect("w_0") * g);
    }
    let gamma_bar = w[1..].iter().sum();
    let p_a = p.last().copied().unwrap_or(p_star);
    LimitProfile {
        p_star,
        p,
        w,
        gamma_bar,
        rho_limit: -(-(1.0 - p_a)).exp_m1(),
    }
}

/// Bound for the construction without γ-levels.
pub fn ratio_l0(lambda: f64) -> f64 {
    let l = lambda;
    ((l - 1.0) / l) * (1.0 - (-(l + 1.0) / (l + 2.0)).exp()) + (l + 1.0) / (l * (l + 2.0))
}

/// Bound for three γ-levels, term by term as derived by hand.
pub fn ratio_l3(lambda: f64, g1: f64, g2: f64, g3: f64) -> f64 {
    let l = lambda;
    let gamma_bar = g1 + g1 * g2 + g1 * g2 * g3;
    let base = l + gamma_bar * (l - 1.0);
    let p2 = (g1 * (l + 2.0) + 1.0) / ((g2 + 1.0) * (g1 + 1.0) * (l + 2.0));
    let t1 = (l + g1 * (g2 + 1.0) * (l - 1.0)) / (2.0 * base);
    let t45 = (l * l + g1) / (2.0 * (l + 2.0) * (g1 + 1.0) * base);
    let t3 = g1 * (l - 1.0) / (2.0 * base) * p2;
    let t2 = g1 * g2 * (l - 1.0) / (2.0 * base)
        * ((g2 * (g1 + 1.0) * (l + 2.0) + (l + 1.0)) / ((g2 + 1.0) * (g1 + 1.0) * (l + 2.0)));
    let t2t = g1 * g2 * g3 * (l - 1.0) / base * (1.0 - (-(g3 + p2) / (g3 + 1.0)).exp());
    t1 + t45 + t3 + t2 + t2t
}

/// Bound for any number of γ-levels: `ALG / OPT` with both sides normalized
/// by the size of the last λ-level.
pub fn ratio_general(lambda: f64, gammas: &[f64]) -> f64 {
    let profile = limit_profile(lambda, gammas);
    let ell = gammas.len();
    let w = &profile.w;
    let departed_u = if ell == 0 {
        1.0 / (lambda - 1.0)
    } else {
        lambda / (lambda - 1.0) + w[1..ell].iter().sum::<f64>()
    };
    let sacrificed_lambda = 1.0 / ((lambda + 2.0) * (lambda - 1.0));
    let sacrificed_gamma: f64 = (1..=ell).map(|j| w[j - 1] * profile.p[j - 1]).sum();
    let numerator =
        2.0 * profile.rho_limit * w[ell] + departed_u + sacrificed_lambda + sacrificed_gamma + w[ell] * profile.p_a();
    let denominator = 2.0 * (lambda / (lambda - 1.0) + profile.gamma_bar);
    numerator / denominator
}

/// `1 - exp(-(1 - p_a))`, plus the finite-size slack `2/|A|` when given.
pub fn rho_bound(p_a: f64, a_size: Option<u64>) -> f64 {
    let slack = a_size.map_or(0.0, |a| 2.0 / a as f64);
    -(-(1.0 - p_a)).exp_m1() + slack
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPoint {
    pub lambda: f64,
    pub gammas: Vec<f64>,
    pub value: f64,
}

impl BoundPoint {
    pub fn evaluate(lambda: f64, gammas: Vec<f64>) -> Result<Self, BoundError> {
        check_params(lambda, &gammas)?;
        let value = ratio_general(lambda, &gammas);
        Ok(Self { lambda, gammas, value })
    }

    pub fn ell(&self) -> usize {
        self.gammas.len()
    }
}

/// Central difference `(f(l+s) - f(l-s)) / 2s` of [`ratio_l0`], evaluated term
/// by term so the subtraction does not cancel.
pub fn ratio_l0_central_difference(lambda: f64, step: f64) -> f64 {
    let (a, b) = (lambda - step, lambda + step);
    let width = b - a;
    let shifted = (a + 2.0) * (b + 2.0);
    // ratio_l0 = (1 - 1/l)(1 - exp(-s)) + (1/l + 1/(l+2))/2 with s = 1 - 1/(l+2).
    let lower_factor = 1.0 - 1.0 / a;
    let s_b = 1.0 - 1.0 / (b + 2.0);
    let upper_tail = -(-s_b).exp_m1();
    let product = upper_tail / (a * b) + lower_factor * (-s_b).exp() * (width / shifted).exp_m1() / width;
    let rational = -0.5 * (1.0 / (a * b) + 1.0 / shifted);
    product + rational
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativePeak {
    pub lambda: f64,
    pub derivative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeScan {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub grid_points: usize,
    /// Highest interior local maximum of the derivative, if any.
    pub peak: Option<DerivativePeak>,
}

const SCAN_INTERVALS: usize = 4000;

/// Scans `d ratio_l0 / d lambda` on a grid over `[lo, hi]` and refines the
/// highest interior local maximum by golden-section search.
pub fn derivative_scan_l0(lo: f64, hi: f64, step: f64) -> DerivativeScan {
    assert!(1.0 < lo && lo < hi, "scan needs 1 < lo < hi");
    let spacing = (hi - lo) / SCAN_INTERVALS as f64;
    let xs: Vec<f64> = (0..=SCAN_INTERVALS).map(|i| lo + spacing * i as f64).collect();
    let ds: Vec<f64> = xs.iter().map(|&x| ratio_l0_central_difference(x, step)).collect();
    let best = (1..SCAN_INTERVALS)
        .filter(|&i| ds[i] > ds[i - 1] && ds[i] >= ds[i + 1])
        .max_by(|&i, &j| ds[i].total_cmp(&ds[j]).then(j.cmp(&i)));
    let peak = best.map(|i| {
        let lambda = golden_section_min(|x| -ratio_l0_central_difference(x, step), xs[i - 1], xs[i + 1], 1e-9);
        DerivativePeak {
            lambda,
            derivative: ratio_l0_central_difference(lambda, step),
        }
    });
    DerivativeScan {
        lo,
        hi,
        step,
        grid_points: xs.len(),
        peak,
    }
}

/// Minimizer of a unimodal `f` on `[lo, hi]`, to within `tolerance`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tolerance: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tolerance {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Exact statistics water-filling attains on a finite instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinitePrediction {
    pub p: Vec<Rational>,
    pub q: Vec<Rational>,
    pub rho: Rational,
    pub alg_value: Rational,
    pub opt_value: u64,
    pub ratio: Rational,
}

/// Predicts the exact water-filling run: levels follow the error-free
/// recurrence, `V_i` keeps the rest of its parent's mass, and the triangle
/// gadget is replayed as a uniform water level.
pub fn finite_h_prediction(params: &ConstructionParams) -> Result<FinitePrediction, ConstructionError> {
    let sizes = level_sizes(params)?;
    let p = error_free_p(params);
    let n = |i: usize| Rational::from(sizes.get(i));
    let depth = params.depth();
    let q: Vec<Rational> = (0..depth)
        .map(|i| ((Rational::ONE - &p[i]) * n(i) - &p[i + 1] * n(i + 1)) / n(i))
        .collect();
    let mut level = p[depth].clone();
    let mut triangle = Rational::ZERO;
    for remaining in (1..=sizes.last()).rev() {
        let share = Rational::ONE / Rational::from(remaining);
        let room = Rational::ONE - &level;
        let increment = if share < room { share } else { room };
        triangle += Rational::from(remaining) * &increment;
        level += increment;
    }
    let levels: Rational = (0..depth).fold(Rational::ZERO, |acc, i| acc + (Rational::ONE - &p[i]) * n(i));
    let alg_value = levels + &triangle;
    let opt_value = sizes.total();
    Ok(FinitePrediction {
        rho: triangle / n(depth),
        ratio: &alg_value / Rational::from(opt_value),
        p,
        q,
        alg_value,
        opt_value,
    })
}

/// Sum of the per-level budgets entering `2 ALG`:
/// `sum_{i < depth} (i + 3) + depth`.
pub fn accounting_error_sum(depth: u64) -> u64 {
    (0..depth).map(|i| i + 3).sum::<u64>() + depth
}

/// Closed upper bound on [`accounting_error_sum`] for three γ-levels.
pub fn accounting_error_bound(h: u64) -> u64 {
    ((h + 5) * (h + 5) + h + 5) / 2 + h + 3
}
