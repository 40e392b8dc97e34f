//! The layered biclique instance family and its arrival/departure schedule.
//!
//! Level `i` has `n_i` vertices on each side. The first `h` levels grow by
//! `lambda`, the following `ell` levels by `gamma_1, ..., gamma_ell`. The last
//! level `A = U_{h+ell}` is closed off with the upper-triangular gadget
//! against `B = V_{h+ell}`.

use std::ops::Range;

use malachite_base::num::arithmetic::traits::Lcm;
use malachite_base::num::basic::traits::One;
use malachite_nz::natural::Natural;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, parse_rational, ParseRationalError, Rational};

pub type VertexId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstructionError {
    #[error("lambda must be > 1, got {0}")]
    LambdaNotAboveOne(String),
    #[error("gamma_{index} must be > 1, got {value}")]
    GammaNotAboveOne { index: usize, value: String },
    #[error("ell = {ell} but {given} gammas were given")]
    EllMismatch { ell: usize, given: usize },
    #[error("scale must be positive")]
    ZeroScale,
    #[error("scale {scale} is not a multiple of the minimal vertex scale {minimal}")]
    ScaleNotMultiple { scale: u64, minimal: u64 },
    #[error("parameters too large for simulation: {0} overflows 64-bit vertex counts")]
    Overflow(&'static str),
    #[error(transparent)]
    Parse(#[from] ParseRationalError),
}

/// `(h, ell, k, lambda, gamma_1..gamma_ell)`; `ell` is `gammas.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionParams {
    h: usize,
    lambda: Rational,
    gammas: Vec<Rational>,
    scale: u64,
}

fn check_factors(lambda: &Rational, gammas: &[Rational]) -> Result<(), ConstructionError> {
    if *lambda <= 1u32 {
        return Err(ConstructionError::LambdaNotAboveOne(lambda.to_string()));
    }
    for (j, g) in gammas.iter().enumerate() {
        if *g <= 1u32 {
            return Err(ConstructionError::GammaNotAboveOne {
                index: j + 1,
                value: g.to_string(),
            });
        }
    }
    Ok(())
}

impl ConstructionParams {
    /// Validates an explicit base level size `scale` (the `k` of the construction).
    pub fn new(h: usize, lambda: Rational, gammas: Vec<Rational>, scale: u64) -> Result<Self, ConstructionError> {
        check_factors(&lambda, &gammas)?;
        if scale == 0 {
            return Err(ConstructionError::ZeroScale);
        }
        let minimal = minimal_vertex_scale(h, &lambda, &gammas)?;
        if !scale.is_multiple_of(minimal) {
            return Err(ConstructionError::ScaleNotMultiple { scale, minimal });
        }
        let params = Self {
            h,
            lambda,
            gammas,
            scale,
        };
        level_sizes(&params)?;
        Ok(params)
    }

    /// Uses `k = multiplier * minimal_vertex_scale(..)`.
    pub fn with_multiplier(
        h: usize,
        lambda: Rational,
        gammas: Vec<Rational>,
        multiplier: u64,
    ) -> Result<Self, ConstructionError> {
        check_factors(&lambda, &gammas)?;
        let minimal = minimal_vertex_scale(h, &lambda, &gammas)?;
        let scale = minimal
            .checked_mul(multiplier)
            .ok_or(ConstructionError::Overflow("scale"))?;
        Self::new(h, lambda, gammas, scale)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn ell(&self) -> usize {
        self.gammas.len()
    }

    pub fn lambda(&self) -> &Rational {
        &self.lambda
    }

    pub fn gammas(&self) -> &[Rational] {
        &self.gammas
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    /// Number of growth steps, `h + ell`.
    pub fn depth(&self) -> usize {
        self.h + self.gammas.len()
    }

    /// Growth factor `n_i / n_{i-1}` for `1 <= i <= h + ell`.
    pub fn growth_factor(&self, i: usize) -> &Rational {
        assert!(i >= 1 && i <= self.depth(), "level {i} has no growth factor");
        if i <= self.h {
            &self.lambda
        } else {
            &self.gammas[i - self.h - 1]
        }
    }
}

/// Cumulative size ratios `n_i / n_0`.
fn cumulative_ratios(h: usize, lambda: &Rational, gammas: &[Rational]) -> Vec<Rational> {
    let mut ratios = Vec::with_capacity(h + gammas.len() + 1);
    let mut current = Rational::ONE;
    ratios.push(current.clone());
    for factor in std::iter::repeat_n(lambda, h).chain(gammas.iter()) {
        current *= factor;
        ratios.push(current.clone());
    }
    ratios
}

/// Least `k` for which every level size is an integer: the lcm of the
/// denominators of the cumulative ratios `n_i / n_0`.
pub fn minimal_vertex_scale(h: usize, lambda: &Rational, gammas: &[Rational]) -> Result<u64, ConstructionError> {
    let lcm = cumulative_ratios(h, lambda, gammas)
        .iter()
        .fold(Natural::ONE, |acc, r| acc.lcm(r.denominator_ref()));
    u64::try_from(&lcm).map_err(|_| ConstructionError::Overflow("minimal vertex scale"))
}

/// `n_0, ..., n_{h+ell}`; `|U_i| = |V_i| = n_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelSizes {
    pub sizes: Vec<u64>,
}

impl LevelSizes {
    pub fn get(&self, i: usize) -> u64 {
        self.sizes[i]
    }

    /// `|U| = |V| = OPT`.
    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// `|A| = |B| = n_{h+ell}`.
    pub fn last(&self) -> u64 {
        *self.sizes.last().expect("at least one level")
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

pub fn level_sizes(params: &ConstructionParams) -> Result<LevelSizes, ConstructionError> {
    let scale = Rational::from(params.scale);
    let mut sizes = Vec::with_capacity(params.depth() + 1);
    for r in cumulative_ratios(params.h, &params.lambda, &params.gammas) {
        let n = rational::to_u64(&(r * &scale)).ok_or(ConstructionError::Overflow("level size"))?;
        sizes.push(n);
    }
    // Every vertex id must fit a `VertexId`.
    let total: u64 = sizes
        .iter()
        .try_fold(0u64, |acc, n| acc.checked_add(*n))
        .and_then(|t| t.checked_mul(2))
        .ok_or(ConstructionError::Overflow("vertex count"))?;
    if total > u64::from(VertexId::MAX) {
        return Err(ConstructionError::Overflow("vertex count"));
    }
    Ok(LevelSizes { sizes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    /// `N+(U_i) = U_{i+1} ∪ V_i` arrives as one batch fully adjacent to `U_i`,
    /// then `U_i` departs, the adversary labels the batch, and `V_i` departs.
    Level {
        index: usize,
        arrivals: Range<VertexId>,
        n_current: u64,
        n_next: u64,
        factor: Rational,
    },
    /// `b_step` arrives adjacent to every unlabeled vertex of `A`, departs at
    /// once, and the adversary labels `a_step`.
    Triangle { step: u64, arrival: VertexId },
    /// All of `A` departs.
    Final,
}

/// Phases in time order. Vertex ids are dense and assigned in arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSchedule {
    pub sizes: LevelSizes,
    /// `U_0`, present before the first phase.
    pub initial: Range<VertexId>,
    pub phases: Vec<Phase>,
    pub vertex_count: u64,
}

impl EventSchedule {
    pub fn level_phases(&self) -> impl Iterator<Item = &Phase> {
        self.phases.iter().filter(|p| matches!(p, Phase::Level { .. }))
    }

    pub fn triangle_count(&self) -> usize {
        self.phases
            .iter()
            .filter(|p| matches!(p, Phase::Triangle { .. }))
            .count()
    }
}

pub fn build_schedule(params: &ConstructionParams) -> Result<EventSchedule, ConstructionError> {
    let sizes = level_sizes(params)?;
    // level_sizes bounds the vertex count by VertexId::MAX.
    let id = |x: u64| x as VertexId;
    let mut next: u64 = sizes.get(0);
    let initial = 0..id(next);
    let mut phases = Vec::with_capacity(params.depth() + sizes.last() as usize + 1);
    for i in 0..params.depth() {
        let batch = sizes.get(i) + sizes.get(i + 1);
        phases.push(Phase::Level {
            index: i,
            arrivals: id(next)..id(next + batch),
            n_current: sizes.get(i),
            n_next: sizes.get(i + 1),
            factor: params.growth_factor(i + 1).clone(),
        });
        next += batch;
    }
    for step in 1..=sizes.last() {
        phases.push(Phase::Triangle {
            step,
            arrival: id(next),
        });
        next += 1;
    }
    phases.push(Phase::Final);
    Ok(EventSchedule {
        sizes,
        initial,
        phases,
        vertex_count: next,
    })
}

fn default_multiplier() -> u64 {
    1
}

/// On-disk instance description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub h: usize,
    pub ell: usize,
    pub lambda: String,
    #[serde(default)]
    pub gammas: Vec<String>,
    #[serde(default = "default_multiplier")]
    pub scale_multiplier: u64,
}

impl InstanceFile {
    pub fn to_params(&self) -> Result<ConstructionParams, ConstructionError> {
        if self.ell != self.gammas.len() {
            return Err(ConstructionError::EllMismatch {
                ell: self.ell,
                given: self.gammas.len(),
            });
        }
        let lambda = parse_rational(&self.lambda)?;
        let gammas = self
            .gammas
            .iter()
            .map(|g| parse_rational(g))
            .collect::<Result<Vec<_>, _>>()?;
        ConstructionParams::with_multiplier(self.h, lambda, gammas, self.scale_multiplier)
    }

    pub fn from_params(params: &ConstructionParams) -> Self {
        let minimal = minimal_vertex_scale(params.h, &params.lambda, &params.gammas).expect("validated parameters");
        Self {
            h: params.h,
            ell: params.ell(),
            lambda: params.lambda.to_string(),
            gammas: params.gammas.iter().map(|g| g.to_string()).collect(),
            scale_multiplier: params.scale / minimal,
        }
    }
}
