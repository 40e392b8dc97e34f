//! Runs the level construction against an online algorithm and measures the
//! per-level statistics the bound is built from.

use std::io::Write;

use malachite_base::num::basic::traits::{One, Zero};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::adversary::{self, AdversaryError, PartitionDecision};
use crate::bound::{closed_p_exact, error_free_p};
use crate::construction::{build_schedule, ConstructionError, ConstructionParams, Phase, VertexId};
use crate::engine::{algorithm_from_name, DepartureAssignment, EngineError, MatchState, OnlineAlgorithm};
use crate::rational::{abs_diff, exp_neg_upper, to_f64, Rational};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Algorithm(#[from] EngineError),
    #[error("contract violation during {phase}: {source}")]
    Contract { phase: String, source: EngineError },
    #[error("adversary failed during {phase}: {source}")]
    Adversary { phase: String, source: AdversaryError },
    #[error("cannot write trace: {0}")]
    Trace(#[from] std::io::Error),
}

/// Measured statistics of one run. All quantities are exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationReport {
    pub algorithm: String,
    pub sizes: Vec<u64>,
    /// Average value of `U_i` right after the adversary labels it; `p[0] = 0`.
    pub p: Vec<Rational>,
    /// Final average value of `V_i`.
    pub q: Vec<Rational>,
    pub p_a: Rational,
    /// Mass added to `A` during the triangle phase, per vertex of `A`.
    pub rho: Rational,
    pub alg_value: Rational,
    pub opt_value: u64,
    pub ratio: Rational,
    /// `sum_v m(v)` at the end of the run.
    pub vertex_value_sum: Rational,
}

impl SimulationReport {
    pub fn a_size(&self) -> u64 {
        *self.sizes.last().expect("at least one level")
    }

    /// `2 ALG = sum_v m(v)`.
    pub fn double_count_holds(&self) -> bool {
        Rational::from(2u32) * &self.alg_value == self.vertex_value_sum
    }

    /// `(1 - p_i) n_i = p_{i+1} n_{i+1} + q_i n_i` for every level.
    pub fn mass_balance_holds(&self) -> bool {
        (0..self.q.len()).all(|i| {
            let n = Rational::from(self.sizes[i]);
            let n_next = Rational::from(self.sizes[i + 1]);
            (Rational::ONE - &self.p[i]) * &n == &self.p[i + 1] * n_next + &self.q[i] * n
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let exact = |xs: &[Rational]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let approx = |xs: &[Rational]| xs.iter().map(to_f64).collect::<Vec<_>>();
        json!({
            "algorithm": self.algorithm,
            "sizes": self.sizes,
            "p": exact(&self.p),
            "p_approx": approx(&self.p),
            "q": exact(&self.q),
            "q_approx": approx(&self.q),
            "p_a": self.p_a.to_string(),
            "rho": self.rho.to_string(),
            "rho_approx": to_f64(&self.rho),
            "alg_value": self.alg_value.to_string(),
            "opt_value": self.opt_value,
            "ratio": self.ratio.to_string(),
            "ratio_approx": to_f64(&self.ratio),
        })
    }
}

/// Everything a run produced, including the final state and the labels the
/// adversary chose.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub report: SimulationReport,
    pub state: MatchState,
    pub u_levels: Vec<Vec<VertexId>>,
    pub v_levels: Vec<Vec<VertexId>>,
    pub partitions: Vec<PartitionDecision>,
    /// `a_1, ..., a_|A|` in labeling order.
    pub a_order: Vec<VertexId>,
    /// `b_1, ..., b_|B|`.
    pub b_order: Vec<VertexId>,
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Keep per-edge values. Costs memory proportional to the edge count.
    pub track_edges: bool,
    /// JSON lines, one record per departure and per adversary decision.
    pub trace: Option<&'a mut dyn Write>,
}

/// Runs the construction against the algorithm named `algorithm_name`.
pub fn run(params: &ConstructionParams, algorithm_name: &str) -> Result<SimulationReport, SimulationError> {
    let mut algorithm = algorithm_from_name(algorithm_name)?;
    Ok(run_with(params, algorithm.as_mut(), RunOptions::default())?.report)
}

struct Runner<'a, 'b> {
    state: MatchState,
    algorithm: &'a mut dyn OnlineAlgorithm,
    trace: Option<&'b mut dyn Write>,
}

impl Runner<'_, '_> {
    fn depart(&mut self, v: VertexId, phase: &str) -> Result<Rational, SimulationError> {
        let contract = |source| SimulationError::Contract {
            phase: phase.to_string(),
            source,
        };
        if !self.state.is_alive(v) {
            return Err(contract(EngineError::NotAlive(v)));
        }
        let assignment = self.algorithm.on_departure(&self.state, v);
        let moved = self.state.apply_assignment(v, &assignment).map_err(contract)?;
        self.record_departure(v, phase, &assignment)?;
        Ok(moved)
    }

    fn record_departure(
        &mut self,
        v: VertexId,
        phase: &str,
        assignment: &DepartureAssignment,
    ) -> Result<(), SimulationError> {
        if let Some(out) = self.trace.as_mut() {
            let pairs: Vec<_> = assignment
                .distribution
                .iter()
                .map(|(u, x)| json!([u, x.to_string()]))
                .collect();
            let record = json!({"event": "departure", "phase": phase, "vertex": v, "assignment": pairs});
            writeln!(out, "{record}")?;
        }
        Ok(())
    }

    fn record(&mut self, record: serde_json::Value) -> Result<(), SimulationError> {
        if let Some(out) = self.trace.as_mut() {
            writeln!(out, "{record}")?;
        }
        Ok(())
    }
}

pub fn run_with(
    params: &ConstructionParams,
    algorithm: &mut dyn OnlineAlgorithm,
    options: RunOptions<'_>,
) -> Result<SimulationOutcome, SimulationError> {
    let schedule = build_schedule(params)?;
    let sizes = schedule.sizes.clone();
    let mut state = MatchState::new(schedule.vertex_count as usize);
    if options.track_edges {
        state = state.with_edge_ledger();
    }
    let mut runner = Runner {
        state,
        algorithm,
        trace: options.trace,
    };

    let mut current: Vec<VertexId> = schedule.initial.clone().collect();
    for &v in &current {
        runner.state.arrive(v, &[]).expect("fresh vertex");
    }
    let mut p = vec![Rational::ZERO];
    let mut u_levels = vec![current.clone()];
    let mut v_levels = Vec::new();
    let mut partitions = Vec::new();
    let mut unlabeled: Vec<VertexId> = Vec::new();
    let mut a_order = Vec::new();
    let mut b_order = Vec::new();
    let mut triangle_mass = Rational::ZERO;

    for phase in &schedule.phases {
        match phase {
            Phase::Level {
                index,
                arrivals,
                n_current,
                n_next,
                ..
            } => {
                let name = format!("level {index}");
                for v in arrivals.clone() {
                    runner.state.arrive(v, &current).expect("schedule arrivals are fresh");
                }
                for &u in &current {
                    runner.depart(u, &name)?;
                }
                let values: Vec<(VertexId, Rational)> =
                    arrivals.clone().map(|v| (v, runner.state.value(v).clone())).collect();
                let target = adversary::target_mass(&p[*index], *n_current, *n_next);
                let decision = adversary::partition_level(&values, *n_next as usize, *n_current as usize, &target)
                    .map_err(|source| SimulationError::Adversary {
                        phase: name.clone(),
                        source,
                    })?;
                p.push(&decision.achieved_mass / Rational::from(*n_next));
                runner.record(json!({
                    "event": "partition",
                    "phase": name,
                    "u_next": decision.u_next,
                    "v_prev": decision.v_prev,
                    "achieved_mass": decision.achieved_mass.to_string(),
                    "target_mass": decision.target_mass.to_string(),
                }))?;
                for &v in &decision.v_prev {
                    runner.depart(v, &name)?;
                }
                current = decision.u_next.clone();
                u_levels.push(decision.u_next.clone());
                v_levels.push(decision.v_prev.clone());
                partitions.push(decision);
            }
            Phase::Triangle { step, arrival } => {
                if *step == 1 {
                    unlabeled = current.clone();
                }
                let name = format!("triangle step {step}");
                runner
                    .state
                    .arrive(*arrival, &unlabeled)
                    .expect("schedule arrivals are fresh");
                triangle_mass += runner.depart(*arrival, &name)?;
                let label = {
                    let state = &runner.state;
                    adversary::triangle_next_label(unlabeled.iter().map(|a| (*a, state.value_handle(*a)))).map_err(
                        |source| SimulationError::Adversary {
                            phase: name.clone(),
                            source,
                        },
                    )?
                };
                runner.record(json!({"event": "label", "step": step, "vertex": label}))?;
                unlabeled.retain(|a| *a != label);
                a_order.push(label);
                b_order.push(*arrival);
            }
            Phase::Final => {
                for &a in &current {
                    runner.depart(a, "final")?;
                }
            }
        }
    }

    let state = runner.state;
    let q: Vec<Rational> = v_levels
        .iter()
        .zip(&sizes.sizes)
        .map(|(level, n)| state.sum_values(level) / Rational::from(*n))
        .collect();
    let a_size = sizes.last();
    let opt_value = sizes.total();
    let alg_value = state.total_value().clone();
    let report = SimulationReport {
        algorithm: runner.algorithm.name(),
        sizes: sizes.sizes.clone(),
        p_a: p.last().expect("p_0 exists").clone(),
        p,
        q,
        rho: triangle_mass / Rational::from(a_size),
        ratio: &alg_value / Rational::from(opt_value),
        alg_value,
        opt_value,
        vertex_value_sum: state.vertex_value_sum(),
    };
    Ok(SimulationOutcome {
        report,
        state,
        u_levels,
        v_levels,
        partitions,
        a_order,
        b_order,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BudgetCheck {
    #[serde(serialize_with = "as_string")]
    pub deviation: Rational,
    #[serde(serialize_with = "as_string")]
    pub budget: Rational,
    pub passed: bool,
}

fn as_string<S: serde::Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

impl BudgetCheck {
    fn new(measured: &Rational, reference: &Rational, budget: Rational) -> Self {
        let deviation = abs_diff(measured, reference);
        let passed = deviation <= budget;
        Self {
            deviation,
            budget,
            passed,
        }
    }
}

/// Checks for one level `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelBudget {
    pub level: usize,
    pub size: u64,
    #[serde(serialize_with = "as_string")]
    pub p: Rational,
    /// `|p_i - (1 - p_{i-1}) / (factor + 1)| <= 1/n_i`, for `i >= 1`.
    pub recurrence: Option<BudgetCheck>,
    /// `|p_i - closed_p(i)| <= i/n_i`, for `i <= h`.
    pub closed_form: Option<BudgetCheck>,
    /// `|q_i - pbar_{i+1}| <= (i+3)/n_i` against the error-free sequence.
    pub sacrificed: Option<BudgetCheck>,
}

impl LevelBudget {
    pub fn passed(&self) -> bool {
        [&self.recurrence, &self.closed_form, &self.sacrificed]
            .into_iter()
            .flatten()
            .all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TriangleBudget {
    #[serde(serialize_with = "as_string")]
    pub rho: Rational,
    /// Rigorous lower bound on `1 - exp(-(1 - p_A)) + 2/|A|`.
    #[serde(serialize_with = "as_string")]
    pub limit: Rational,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BudgetReport {
    pub levels: Vec<LevelBudget>,
    pub triangle: TriangleBudget,
    pub mass_balance: bool,
    pub double_count: bool,
}

impl BudgetReport {
    pub fn passed(&self) -> bool {
        self.levels.iter().all(LevelBudget::passed) && self.triangle.passed && self.mass_balance && self.double_count
    }

    /// Levels whose checks failed.
    pub fn failures(&self) -> Vec<usize> {
        self.levels.iter().filter(|l| !l.passed()).map(|l| l.level).collect()
    }
}

const EXP_DIGITS: u32 = 50;

/// Compares a report against the per-level error budgets of the analysis.
pub fn verify_error_budget(report: &SimulationReport, params: &ConstructionParams) -> BudgetReport {
    let n = |i: usize| Rational::from(report.sizes[i]);
    let pbar = error_free_p(params);
    let levels = (0..report.p.len())
        .map(|i| {
            let recurrence = (i >= 1).then(|| {
                let expected = (Rational::ONE - &report.p[i - 1]) / (params.growth_factor(i) + Rational::ONE);
                BudgetCheck::new(&report.p[i], &expected, Rational::ONE / n(i))
            });
            let closed_form = (i <= params.h()).then(|| {
                let expected = closed_p_exact(i, params.lambda());
                BudgetCheck::new(&report.p[i], &expected, Rational::from(i as u64) / n(i))
            });
            let sacrificed = report
                .q
                .get(i)
                .map(|q| BudgetCheck::new(q, &pbar[i + 1], Rational::from(i as u64 + 3) / n(i)));
            LevelBudget {
                level: i,
                size: report.sizes[i],
                p: report.p[i].clone(),
                recurrence,
                closed_form,
                sacrificed,
            }
        })
        .collect();

    let y = Rational::ONE - &report.p_a;
    let limit = Rational::ONE - exp_neg_upper(&y, EXP_DIGITS) + Rational::from(2u32) / Rational::from(report.a_size());
    let triangle = TriangleBudget {
        passed: report.rho <= limit,
        rho: report.rho.clone(),
        limit,
    };
    BudgetReport {
        levels,
        triangle,
        mass_balance: report.mass_balance_holds(),
        double_count: report.double_count_holds(),
    }
}
