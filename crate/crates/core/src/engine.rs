//! Fractional matching state and the online algorithms that drive it.
//!
//! Matching value only moves when a vertex departs: the departing vertex
//! hands out mass to its alive neighbors. An algorithm therefore has a single
//! decision point, [`OnlineAlgorithm::on_departure`], and every proposal is
//! validated by [`MatchState::apply_assignment`] before it is committed.
//!
//! Vertex values are shared `Rc<Rational>` handles. Vertices that receive the
//! same increment on top of the same old value end up pointing at one
//! allocation, which keeps long water-filling runs (whose values are partial
//! harmonic sums with very large denominators) cheap to update and compare.

use std::collections::HashMap;
use std::rc::Rc;

use malachite_base::num::basic::traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::construction::VertexId;
use crate::rational::Rational;

pub type Value = Rc<Rational>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("vertex {0} is not alive")]
    NotAlive(VertexId),
    #[error("vertex {0} has already arrived")]
    AlreadyArrived(VertexId),
    #[error("vertex {0} is out of range")]
    UnknownVertex(VertexId),
    #[error("vertex {neighbor} is not an alive neighbor of departing vertex {vertex}")]
    NotAdjacent { vertex: VertexId, neighbor: VertexId },
    #[error("neighbor {0} listed twice in one assignment")]
    DuplicateNeighbor(VertexId),
    #[error("negative increment for neighbor {0}")]
    NegativeIncrement(VertexId),
    #[error("neighbor capacity exceeded at vertex {0}")]
    NeighborCapacityExceeded(VertexId),
    #[error("departing vertex {0} hands out more than its remaining mass")]
    MassExceeded(VertexId),
    #[error("departing vertex {0} is not fully matched although a neighbor has spare capacity")]
    NotSaturating(VertexId),
    #[error("unknown algorithm {0:?} (expected \"waterfilling\" or \"random:<seed>\")")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Presence {
    Pending,
    Alive,
    Departed,
}

fn key(value: &Value) -> usize {
    Rc::as_ptr(value) as usize
}

/// Mass a departing vertex hands to each neighbor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DepartureAssignment {
    pub distribution: Vec<(VertexId, Value)>,
}

impl DepartureAssignment {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VertexId, Rational)>) -> Self {
        Self {
            distribution: pairs.into_iter().map(|(v, x)| (v, Rc::new(x))).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.distribution.is_empty()
    }

    pub fn len(&self) -> usize {
        self.distribution.len()
    }

    pub fn get(&self, neighbor: VertexId) -> Option<&Rational> {
        self.distribution
            .iter()
            .find(|(v, _)| *v == neighbor)
            .map(|(_, x)| x.as_ref())
    }

    /// Sum of all increments (shared increments are summed once per handle).
    pub fn total(&self) -> Rational {
        sum_shared(self.distribution.iter().map(|(_, x)| x))
    }
}

fn sum_shared<'a>(values: impl Iterator<Item = &'a Value>) -> Rational {
    let mut groups: HashMap<usize, (u64, &'a Value)> = HashMap::new();
    // Shared handles tend to come in runs; hash once per run.
    let mut run: Option<(u64, &'a Value)> = None;
    for v in values {
        match &mut run {
            Some((count, r)) if Rc::ptr_eq(r, v) => *count += 1,
            _ => {
                if let Some((count, r)) = run.replace((1, v)) {
                    groups.entry(key(r)).or_insert((0, r)).0 += count;
                }
            }
        }
    }
    if let Some((count, r)) = run {
        groups.entry(key(r)).or_insert((0, r)).0 += count;
    }
    // Exact addition: the hash iteration order cannot change the result.
    groups.into_values().fold(Rational::ZERO, |acc, (count, v)| {
        acc + Rational::from(count) * v.as_ref()
    })
}

/// Records revealed edges and the value placed on them. Memory grows with
/// the number of edges, so large runs leave it off.
#[derive(Debug, Clone, Default)]
pub struct EdgeLedger {
    pub revealed: Vec<(VertexId, VertexId)>,
    pub values: HashMap<(VertexId, VertexId), Rational>,
}

fn edge(a: VertexId, b: VertexId) -> (VertexId, VertexId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct MatchState {
    values: Vec<Value>,
    presence: Vec<Presence>,
    /// Revealed neighbors; departed entries are pruned lazily.
    neighbors: Vec<Vec<VertexId>>,
    prune_at: Vec<usize>,
    total: Rational,
    one: Value,
    ledger: Option<EdgeLedger>,
}

impl MatchState {
    pub fn new(vertex_count: usize) -> Self {
        let zero: Value = Rc::new(Rational::ZERO);
        Self {
            values: vec![zero; vertex_count],
            presence: vec![Presence::Pending; vertex_count],
            neighbors: vec![Vec::new(); vertex_count],
            prune_at: vec![16; vertex_count],
            total: Rational::ZERO,
            one: Rc::new(Rational::ONE),
            ledger: None,
        }
    }

    pub fn with_edge_ledger(mut self) -> Self {
        self.ledger = Some(EdgeLedger::default());
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.values.len()
    }

    fn check(&self, v: VertexId) -> Result<usize, EngineError> {
        let i = v as usize;
        if i >= self.values.len() {
            return Err(EngineError::UnknownVertex(v));
        }
        Ok(i)
    }

    pub fn is_alive(&self, v: VertexId) -> bool {
        self.presence.get(v as usize).is_some_and(|p| *p == Presence::Alive)
    }

    pub fn has_departed(&self, v: VertexId) -> bool {
        self.presence.get(v as usize).is_some_and(|p| *p == Presence::Departed)
    }

    /// Matched fraction `m(v)`.
    pub fn value(&self, v: VertexId) -> &Rational {
        &self.values[v as usize]
    }

    pub fn value_handle(&self, v: VertexId) -> &Value {
        &self.values[v as usize]
    }

    /// Total fractional matching size.
    pub fn total_value(&self) -> &Rational {
        &self.total
    }

    /// `sum_v m(v)`; equals twice the matching size.
    pub fn vertex_value_sum(&self) -> Rational {
        sum_shared(self.values.iter())
    }

    pub fn sum_values(&self, vertices: &[VertexId]) -> Rational {
        sum_shared(vertices.iter().map(|v| &self.values[*v as usize]))
    }

    pub fn ledger(&self) -> Option<&EdgeLedger> {
        self.ledger.as_ref()
    }

    /// `v` arrives together with its edges to already-alive `neighbors`.
    pub fn arrive(&mut self, v: VertexId, neighbors: &[VertexId]) -> Result<(), EngineError> {
        let i = self.check(v)?;
        if self.presence[i] != Presence::Pending {
            return Err(EngineError::AlreadyArrived(v));
        }
        for &u in neighbors {
            self.check(u)?;
            if !self.is_alive(u) {
                return Err(EngineError::NotAlive(u));
            }
        }
        self.presence[i] = Presence::Alive;
        self.neighbors[i].extend_from_slice(neighbors);
        for &u in neighbors {
            self.push_neighbor(u, v);
        }
        if let Some(ledger) = &mut self.ledger {
            ledger.revealed.extend(neighbors.iter().map(|&u| edge(u, v)));
        }
        Ok(())
    }

    fn push_neighbor(&mut self, u: VertexId, v: VertexId) {
        let i = u as usize;
        self.neighbors[i].push(v);
        if self.neighbors[i].len() >= self.prune_at[i] {
            let presence = &self.presence;
            self.neighbors[i].retain(|w| presence[*w as usize] != Presence::Departed);
            self.prune_at[i] = (2 * self.neighbors[i].len()).max(16);
        }
    }

    /// Alive neighbors of `v` in ascending id order.
    pub fn alive_neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let mut out: Vec<VertexId> = self.neighbors[v as usize]
            .iter()
            .copied()
            .filter(|u| self.is_alive(*u))
            .collect();
        if !out.is_sorted_by(|a, b| a < b) {
            out.sort_unstable();
            out.dedup();
        }
        out
    }

    /// Validates `assignment` for the departure of `v`, commits it and marks
    /// `v` departed. Returns the mass handed out.
    pub fn apply_assignment(&mut self, v: VertexId, assignment: &DepartureAssignment) -> Result<Rational, EngineError> {
        let vi = self.check(v)?;
        if self.presence[vi] != Presence::Alive {
            return Err(EngineError::NotAlive(v));
        }
        let alive = self.alive_neighbors(v);
        let mut seen = vec![false; alive.len()];
        let mut sums: HashMap<(usize, usize), Value> = HashMap::new();
        let mut last: Option<(usize, usize, Value)> = None;
        let mut updates: Vec<(VertexId, Value)> = Vec::with_capacity(assignment.len());
        for (u, inc) in &assignment.distribution {
            let Ok(slot) = alive.binary_search(u) else {
                return Err(EngineError::NotAdjacent {
                    vertex: v,
                    neighbor: *u,
                });
            };
            if std::mem::replace(&mut seen[slot], true) {
                return Err(EngineError::DuplicateNeighbor(*u));
            }
            let old = &self.values[*u as usize];
            let pair = (key(old), key(inc));
            let new = match &last {
                Some((a, b, x)) if (*a, *b) == pair => x.clone(),
                _ => match sums.get(&pair) {
                    Some(x) => x.clone(),
                    None => {
                        if **inc < 0u32 {
                            return Err(EngineError::NegativeIncrement(*u));
                        }
                        let x = Rc::new(old.as_ref() + inc.as_ref());
                        if *x > 1u32 {
                            return Err(EngineError::NeighborCapacityExceeded(*u));
                        }
                        let x = if *x == 1u32 { self.one.clone() } else { x };
                        sums.insert(pair, x.clone());
                        x
                    }
                },
            };
            last = Some((pair.0, pair.1, new.clone()));
            updates.push((*u, new));
        }

        let handed_out = assignment.total();
        let remaining = Rational::ONE - self.values[vi].as_ref();
        if handed_out > remaining {
            return Err(EngineError::MassExceeded(v));
        }
        if handed_out < remaining {
            let updated: HashMap<VertexId, &Value> = updates.iter().map(|(u, x)| (*u, x)).collect();
            let all_full = alive.iter().all(|u| {
                let value = updated.get(u).copied().unwrap_or(&self.values[*u as usize]);
                **value == 1u32
            });
            if !all_full {
                return Err(EngineError::NotSaturating(v));
            }
        }

        for (u, new) in updates {
            self.values[u as usize] = new;
        }
        if handed_out > 0u32 {
            let new_value = self.values[vi].as_ref() + &handed_out;
            self.values[vi] = if new_value == 1u32 {
                self.one.clone()
            } else {
                Rc::new(new_value)
            };
            self.total += &handed_out;
        }
        if let Some(ledger) = &mut self.ledger {
            for (u, inc) in &assignment.distribution {
                if **inc > 0u32 {
                    *ledger.values.entry(edge(v, *u)).or_insert(Rational::ZERO) += inc.as_ref();
                }
            }
        }
        self.presence[vi] = Presence::Departed;
        self.neighbors[vi] = Vec::new();
        Ok(handed_out)
    }

    /// Asks `algorithm` for the departure of `v` and commits its answer.
    pub fn depart(
        &mut self,
        v: VertexId,
        algorithm: &mut dyn OnlineAlgorithm,
    ) -> Result<DepartureAssignment, EngineError> {
        if !self.is_alive(v) {
            return Err(EngineError::NotAlive(v));
        }
        let assignment = algorithm.on_departure(self, v);
        self.apply_assignment(v, &assignment)?;
        Ok(assignment)
    }
}

/// Decision rule for departures. Implementations must hand out all of the
/// departing vertex's remaining mass unless every alive neighbor is full.
pub trait OnlineAlgorithm {
    fn name(&self) -> String;
    fn on_departure(&mut self, state: &MatchState, v: VertexId) -> DepartureAssignment;
}

struct Tier {
    value: Value,
    members: Vec<VertexId>,
}

/// Raises the least-matched alive neighbors of `v` to a common level until
/// `v` is exhausted or every neighbor is full.
pub fn water_filling_departure(state: &MatchState, v: VertexId) -> DepartureAssignment {
    let mass = Rational::ONE - state.value(v);
    if mass == 0u32 {
        return DepartureAssignment::empty();
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut tiers: Vec<Tier> = Vec::new();
    let mut last: Option<usize> = None;
    for u in state.alive_neighbors(v) {
        let handle = state.value_handle(u);
        if **handle == 1u32 {
            continue;
        }
        let slot = match last {
            Some(slot) if Rc::ptr_eq(&tiers[slot].value, handle) => slot,
            _ => *index.entry(key(handle)).or_insert_with(|| {
                tiers.push(Tier {
                    value: handle.clone(),
                    members: Vec::new(),
                });
                tiers.len() - 1
            }),
        };
        last = Some(slot);
        tiers[slot].members.push(u);
    }
    if tiers.is_empty() {
        return DepartureAssignment::empty();
    }
    tiers.sort_by(|a, b| {
        a.value
            .as_ref()
            .cmp(b.value.as_ref())
            .then(a.members[0].cmp(&b.members[0]))
    });
    // Distinct handles may still hold equal values.
    let mut merged: Vec<Tier> = Vec::with_capacity(tiers.len());
    for tier in tiers {
        match merged.last_mut() {
            Some(last) if last.value == tier.value => last.members.extend(tier.members),
            _ => merged.push(tier),
        }
    }
    let tiers = merged;

    // Fill tier by tier: `active` tiers sit at the value of the highest one.
    let mut remaining = mass;
    let mut count: u64 = 0;
    let mut active = 0;
    let raise = loop {
        count += tiers[active].members.len() as u64;
        active += 1;
        let top = tiers[active - 1].value.as_ref();
        let ceiling = if active < tiers.len() {
            tiers[active].value.as_ref()
        } else {
            &Rational::ONE
        };
        let gap = ceiling - top;
        let cost = Rational::from(count) * &gap;
        if remaining > cost || (remaining == cost && active < tiers.len()) {
            remaining -= cost;
            if active == tiers.len() {
                break gap;
            }
        } else {
            break remaining / Rational::from(count);
        }
    };

    let top = tiers[active - 1].value.as_ref();
    let mut distribution = Vec::new();
    for (i, tier) in tiers[..active].iter().enumerate() {
        let inc: Value = if i + 1 == active {
            Rc::new(raise.clone())
        } else {
            Rc::new(top - tier.value.as_ref() + &raise)
        };
        distribution.extend(tier.members.iter().map(|u| (*u, inc.clone())));
    }
    distribution.sort_unstable_by_key(|(u, _)| *u);
    DepartureAssignment { distribution }
}

/// Pseudo-random but contract-conforming departure: random nonnegative
/// weights, then a weighted fill capped at every neighbor's capacity.
pub fn random_feasible_departure(state: &MatchState, v: VertexId, seed: u64) -> DepartureAssignment {
    let mass = Rational::ONE - state.value(v);
    let open: Vec<(VertexId, Rational)> = state
        .alive_neighbors(v)
        .into_iter()
        .map(|u| (u, Rational::ONE - state.value(u)))
        .filter(|(_, cap)| *cap > 0u32)
        .collect();
    if mass == 0u32 || open.is_empty() {
        return DepartureAssignment::empty();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<u64> = open.iter().map(|_| rng.random_range(0..=6)).collect();
    if rng.random_bool(0.5) {
        let favorite = rng.random_range(0..weights.len());
        weights[favorite] += 40;
    }
    let capacity: Rational = open.iter().map(|(_, c)| c).fold(Rational::ZERO, |a, c| a + c);
    let target = if capacity < mass { capacity } else { mass };
    let weighted_capacity = open
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0)
        .fold(Rational::ZERO, |a, ((_, c), _)| a + c);
    if weighted_capacity < target {
        for w in weights.iter_mut().filter(|w| **w == 0) {
            *w = 1;
        }
    }

    // Find t with sum_u min(cap_u, t * w_u) = target.
    let mut order: Vec<usize> = (0..open.len()).filter(|&i| weights[i] > 0).collect();
    order.sort_by(|&a, &b| {
        let ra = &open[a].1 / Rational::from(weights[a]);
        let rb = &open[b].1 / Rational::from(weights[b]);
        ra.cmp(&rb).then(open[a].0.cmp(&open[b].0))
    });
    let mut left = target;
    let mut weight_left: u64 = order.iter().map(|&i| weights[i]).sum();
    let mut increments: Vec<(VertexId, Rational)> = Vec::with_capacity(order.len());
    let mut rest = order.len();
    for (pos, &i) in order.iter().enumerate() {
        let cap = &open[i].1;
        let w = Rational::from(weights[i]);
        if cap * Rational::from(weight_left) <= &left * &w {
            left -= cap;
            weight_left -= weights[i];
            increments.push((open[i].0, cap.clone()));
        } else {
            rest = pos;
            break;
        }
    }
    if rest < order.len() {
        let level = &left / Rational::from(weight_left);
        for &i in &order[rest..] {
            increments.push((open[i].0, &level * Rational::from(weights[i])));
        }
    }
    increments.retain(|(_, x)| *x > 0u32);
    increments.sort_by_key(|(u, _)| *u);
    DepartureAssignment::from_pairs(increments)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WaterFilling;

impl OnlineAlgorithm for WaterFilling {
    fn name(&self) -> String {
        "waterfilling".to_string()
    }

    fn on_departure(&mut self, state: &MatchState, v: VertexId) -> DepartureAssignment {
        water_filling_departure(state, v)
    }
}

/// Draws a fresh per-departure seed from one seeded stream.
#[derive(Debug, Clone)]
pub struct RandomFeasible {
    seed: u64,
    stream: ChaCha8Rng,
}

impl RandomFeasible {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stream: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl OnlineAlgorithm for RandomFeasible {
    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }

    fn on_departure(&mut self, state: &MatchState, v: VertexId) -> DepartureAssignment {
        let seed = self.stream.random();
        random_feasible_departure(state, v, seed)
    }
}

/// `"waterfilling"` or `"random:<seed>"`.
pub fn algorithm_from_name(name: &str) -> Result<Box<dyn OnlineAlgorithm>, EngineError> {
    let name = name.trim();
    if name == "waterfilling" {
        return Ok(Box::new(WaterFilling));
    }
    if let Some(seed) = name.strip_prefix("random:") {
        if let Ok(seed) = seed.parse::<u64>() {
            return Ok(Box::new(RandomFeasible::new(seed)));
        }
    }
    Err(EngineError::UnknownAlgorithm(name.to_string()))
}
