//! Heuristic feature exploration.
//!
//! Fields are ranked by importance per bit, and for every requested subset
//! size the `k` subsets with the largest summed ratio are enumerated exactly.
//! One ensemble is trained per subset to form the classifier pool.

mod pool;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::encode::{FieldId, FieldRegistry};
use crate::error::{AcdcError, Result};

pub use pool::{build_pool, read_manifest, ClassifierPool, ManifestRow, PoolConfig, PoolMember};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub field: FieldId,
    pub importance: f64,
    pub bits: u32,
    /// `importance / bits`.
    pub ratio: f64,
}

/// Orders fields by importance per bit, descending. Ties go to the field with
/// fewer bits, then the lower id.
pub fn rank_features(importances: &BTreeMap<FieldId, f64>, registry: &FieldRegistry) -> Result<Vec<RankedFeature>> {
    let mut ranked = importances
        .iter()
        .map(|(&field, &importance)| {
            let spec = registry.spec(field)?;
            if !importance.is_finite() {
                return Err(AcdcError::Argument(format!("importance of {spec} is not finite")));
            }
            Ok(RankedFeature { field, importance, bits: spec.bits, ratio: importance / spec.bits as f64 })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.bits.cmp(&b.bits)).then(a.field.cmp(&b.field)));
    Ok(ranked)
}

/// A subset of ranked features, held as ascending positions into the ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSubset {
    pub positions: Vec<usize>,
    pub fields: Vec<FieldId>,
    /// Sum of ratios, accumulated in position order.
    pub score: f64,
}

/// Sum of ratios over ascending rank positions.
pub fn positions_score(ranked: &[RankedFeature], positions: &[usize]) -> f64 {
    positions.iter().map(|&p| ranked[p].ratio).sum()
}

/// `C(m, n)`, saturating.
pub fn binomial(m: usize, n: usize) -> u128 {
    if n > m {
        return 0;
    }
    let n = n.min(m - n);
    let mut acc: u128 = 1;
    for i in 0..n {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

struct Candidate {
    score: f64,
    positions: Vec<usize>,
}

impl Candidate {
    /// Higher score first, then lexicographically smaller positions.
    fn priority(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.positions.cmp(&self.positions))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.priority(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority(other)
    }
}

/// The `k` size-`n` subsets of `ranked` with the highest ratio sums.
///
/// Best-first search from the top-`n` set. A successor moves one member to the
/// next rank position when that position is free. Every other subset has a
/// predecessor of this kind that scores at least as much and sorts earlier, so
/// subsets leave the queue in exact (score desc, positions asc) order.
/// Returns `min(k, C(|ranked|, n))` subsets.
pub fn k_best_subsets(ranked: &[RankedFeature], n: usize, k: usize) -> Result<Vec<ScoredSubset>> {
    let m = ranked.len();
    if n == 0 || n > m {
        return Err(AcdcError::Argument(format!("subset size {n} outside 1..={m}")));
    }
    if k == 0 {
        return Err(AcdcError::Argument("k must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(k.min(1024));
    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let top: Vec<usize> = (0..n).collect();
    seen.insert(top.clone());
    heap.push(Candidate { score: positions_score(ranked, &top), positions: top });

    while let Some(Candidate { score, positions }) = heap.pop() {
        for i in 0..n {
            let next = positions[i] + 1;
            let blocked = if i + 1 < n { positions[i + 1] == next } else { next == m };
            if blocked {
                continue;
            }
            let mut succ = positions.clone();
            succ[i] = next;
            if seen.insert(succ.clone()) {
                heap.push(Candidate { score: positions_score(ranked, &succ), positions: succ });
            }
        }
        let fields = positions.iter().map(|&p| ranked[p].field).collect();
        out.push(ScoredSubset { positions, fields, score });
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}
