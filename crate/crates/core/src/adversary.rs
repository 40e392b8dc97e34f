//! The adaptive adversary: splits every arrival batch into the next level and
//! a sacrificed remainder, and orders the triangle gadget.

use std::collections::BTreeSet;
use std::rc::Rc;

use malachite_base::num::basic::traits::Zero;
use thiserror::Error;

use crate::construction::VertexId;
use crate::engine::Value;
use crate::rational::{abs_diff, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("batch has {got} vertices but the level split needs {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("no unlabeled vertex left to label")]
    NothingToLabel,
    #[error("exhaustive search is limited to {max} vertices, got {got}")]
    TooLargeForOracle { max: usize, got: usize },
}

/// Share of the departing level's remaining mass that the next level would
/// carry under a perfectly even spread over the batch.
pub fn target_mass(p_prev: &Rational, n_prev: u64, n_next: u64) -> Rational {
    (Rational::from(1u32) - p_prev) * Rational::from(n_prev) * Rational::from(n_next) / Rational::from(n_next + n_prev)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionDecision {
    /// Continues the construction, ascending ids.
    pub u_next: Vec<VertexId>,
    /// Sacrificed, ascending ids.
    pub v_prev: Vec<VertexId>,
    pub achieved_mass: Rational,
    pub target_mass: Rational,
    pub swaps: usize,
}

impl PartitionDecision {
    pub fn distance(&self) -> Rational {
        abs_diff(&self.achieved_mass, &self.target_mass)
    }
}

/// Vertices sharing one value, split by side.
struct Group {
    value: Rational,
    in_u: BTreeSet<VertexId>,
    in_v: BTreeSet<VertexId>,
}

/// Splits the batch `values` into `n_next` vertices for the next level and
/// `n_prev` sacrificed ones, steering the next level's mass towards `target`.
///
/// Starts from the `n_next` highest values and applies the single swap that
/// reduces `|m(U) - target|` the most until no swap helps. Distinct values
/// are grouped, so a swap costs `O(g log g)` for `g` distinct values.
pub fn partition_level(
    values: &[(VertexId, Rational)],
    n_next: usize,
    n_prev: usize,
    target: &Rational,
) -> Result<PartitionDecision, AdversaryError> {
    if values.len() != n_next + n_prev {
        return Err(AdversaryError::SizeMismatch {
            expected: n_next + n_prev,
            got: values.len(),
        });
    }
    let mut order: Vec<&(VertexId, Rational)> = values.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut groups: Vec<Group> = Vec::new();
    let mut mass = Rational::ZERO;
    for (rank, (id, value)) in order.iter().enumerate() {
        if groups.last().is_none_or(|g| g.value != *value) {
            groups.push(Group {
                value: value.clone(),
                in_u: BTreeSet::new(),
                in_v: BTreeSet::new(),
            });
        }
        let group = groups.last_mut().expect("group just pushed");
        if rank < n_next {
            group.in_u.insert(*id);
            mass += value;
        } else {
            group.in_v.insert(*id);
        }
    }
    // Ascending by value so that indices are monotone in value.
    groups.reverse();
    let values_sorted: Vec<Rational> = groups.iter().map(|g| g.value.clone()).collect();
    let mut u_groups: BTreeSet<usize> = (0..groups.len()).filter(|&i| !groups[i].in_u.is_empty()).collect();
    let mut v_groups: BTreeSet<usize> = (0..groups.len()).filter(|&i| !groups[i].in_v.is_empty()).collect();

    let mut swaps = 0;
    loop {
        let gap = &mass - target;
        let current = abs_diff(&mass, target);
        if current == 0u32 {
            break;
        }
        // Swapping out value a for value b moves the gap to gap + b - a.
        let mut best: Option<(Rational, usize, usize)> = None;
        for &ui in &u_groups {
            let ideal = &values_sorted[ui] - &gap;
            let pos = values_sorted.partition_point(|v| *v < ideal);
            let below = v_groups.range(..pos).next_back();
            let above = v_groups.range(pos..).next();
            for &vi in below.into_iter().chain(above) {
                let after = abs_diff(&(&gap + &values_sorted[vi]), &values_sorted[ui]);
                if best.as_ref().is_none_or(|(d, _, _)| after < *d) {
                    best = Some((after, ui, vi));
                }
            }
        }
        let Some((after, ui, vi)) = best else { break };
        if after >= current {
            break;
        }
        let out = *groups[ui].in_u.iter().next_back().expect("nonempty U group");
        let inn = *groups[vi].in_v.iter().next().expect("nonempty V group");
        groups[ui].in_u.remove(&out);
        groups[ui].in_v.insert(out);
        groups[vi].in_v.remove(&inn);
        groups[vi].in_u.insert(inn);
        mass = mass - &groups[ui].value + &groups[vi].value;
        for i in [ui, vi] {
            if groups[i].in_u.is_empty() {
                u_groups.remove(&i);
            } else {
                u_groups.insert(i);
            }
            if groups[i].in_v.is_empty() {
                v_groups.remove(&i);
            } else {
                v_groups.insert(i);
            }
        }
        swaps += 1;
    }

    let mut u_next: Vec<VertexId> = groups.iter().flat_map(|g| g.in_u.iter().copied()).collect();
    let mut v_prev: Vec<VertexId> = groups.iter().flat_map(|g| g.in_v.iter().copied()).collect();
    u_next.sort_unstable();
    v_prev.sort_unstable();
    Ok(PartitionDecision {
        u_next,
        v_prev,
        achieved_mass: mass,
        target_mass: target.clone(),
        swaps,
    })
}

/// Exhaustive search over all `n_next`-subsets; the best achievable
/// `|m(U) - target|`. Reference for small batches only.
pub fn best_partition_distance(
    values: &[Rational],
    n_next: usize,
    target: &Rational,
) -> Result<Rational, AdversaryError> {
    const MAX: usize = 22;
    if values.len() > MAX {
        return Err(AdversaryError::TooLargeForOracle {
            max: MAX,
            got: values.len(),
        });
    }
    if n_next > values.len() {
        return Err(AdversaryError::SizeMismatch {
            expected: n_next,
            got: values.len(),
        });
    }
    let mut best: Option<Rational> = None;
    for mask in 0u32..(1u32 << values.len()) {
        if mask.count_ones() as usize != n_next {
            continue;
        }
        let mass = values
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .fold(Rational::ZERO, |acc, (_, v)| acc + v);
        let d = abs_diff(&mass, target);
        if best.as_ref().is_none_or(|b| d < *b) {
            best = Some(d);
        }
    }
    Ok(best.expect("at least one subset"))
}

/// The unlabeled vertex with the least value; ties go to the lowest id.
pub fn triangle_next_label<'a>(
    candidates: impl IntoIterator<Item = (VertexId, &'a Value)>,
) -> Result<VertexId, AdversaryError> {
    let mut best: Option<(VertexId, &Value)> = None;
    for (id, value) in candidates {
        best = match best {
            None => Some((id, value)),
            Some((bid, bval)) => {
                let better = if Rc::ptr_eq(bval, value) {
                    id < bid
                } else {
                    match value.as_ref().cmp(bval.as_ref()) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Equal => id < bid,
                        std::cmp::Ordering::Greater => false,
                    }
                };
                if better {
                    Some((id, value))
                } else {
                    Some((bid, bval))
                }
            }
        };
    }
    best.map(|(id, _)| id).ok_or(AdversaryError::NothingToLabel)
}
