//! The adaptive scheduler: pick the classifier and batch size with the best
//! F1-to-TTD ratio among combinations that meet the F1 floor and fit memory.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::profile::{concurrent_instances, total_memory, ProfileEntry};

#[derive(Debug, Clone, Copy)]
pub struct SchedulerInput<'a> {
    /// Arriving flows per second.
    pub rate: f64,
    pub mem_available: u64,
    /// Minimum F1 requirement.
    pub mpr: Option<f64>,
    pub profiles: &'a [ProfileEntry],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerDecision {
    pub classifier_id: String,
    pub batch_size: u64,
    pub instances: u64,
    pub total_mem: u64,
    pub unit_mem: u64,
    pub ttd_s: f64,
    pub expected_f1: f64,
    pub ratio: f64,
    /// Nothing fit the memory budget; this is the smallest footprint.
    pub overcommit: bool,
    /// No entry met the F1 floor, so only the highest-F1 entries competed.
    pub mpr_fallback: bool,
}

struct Scored<'a> {
    entry: &'a ProfileEntry,
    n: u64,
    m: u64,
    ratio: f64,
}

fn score<'a>(entry: &'a ProfileEntry, rate: f64) -> Result<Scored<'a>> {
    let n = concurrent_instances(entry.batch_size, rate, entry.ttd_s)?;
    Ok(Scored { entry, n, m: total_memory(n, entry.unit_mem_bytes), ratio: entry.ratio() })
}

/// True when `N * m` for this entry at `rate` fits within `mem_available`.
pub fn feasible(entry: &ProfileEntry, rate: f64, mem_available: u64) -> Result<bool> {
    Ok(score(entry, rate)?.m <= mem_available)
}

fn by_id(a: &Scored, b: &Scored) -> Ordering {
    a.entry.classifier_id.cmp(&b.entry.classifier_id)
}

pub fn select(input: &SchedulerInput<'_>) -> Result<SchedulerDecision> {
    if input.profiles.is_empty() {
        return Err(AcdcError::Argument("scheduler received an empty profile table".into()));
    }
    let scored = input.profiles.iter().map(|e| score(e, input.rate)).collect::<Result<Vec<_>>>()?;

    let mut mpr_fallback = false;
    let mut candidates: Vec<&Scored> = match input.mpr {
        Some(floor) => scored.iter().filter(|s| s.entry.f1 >= floor).collect(),
        None => scored.iter().collect(),
    };
    if candidates.is_empty() {
        mpr_fallback = true;
        let best = scored.iter().map(|s| s.entry.f1).fold(f64::NEG_INFINITY, f64::max);
        candidates = scored.iter().filter(|s| s.entry.f1 == best).collect();
    }

    let fits = candidates.iter().copied().filter(|s| s.m <= input.mem_available);
    let best = fits.min_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then(a.m.cmp(&b.m))
            .then(a.entry.batch_size.cmp(&b.entry.batch_size))
            .then(by_id(a, b))
    });
    let (chosen, overcommit) = match best {
        Some(s) => (s, false),
        None => {
            let smallest = candidates
                .iter()
                .copied()
                .min_by(|a, b| {
                    a.m.cmp(&b.m)
                        .then(b.ratio.total_cmp(&a.ratio))
                        .then(a.entry.batch_size.cmp(&b.entry.batch_size))
                        .then(by_id(a, b))
                })
                .expect("candidates are non-empty");
            (smallest, true)
        }
    };
    Ok(SchedulerDecision {
        classifier_id: chosen.entry.classifier_id.clone(),
        batch_size: chosen.entry.batch_size,
        instances: chosen.n,
        total_mem: chosen.m,
        unit_mem: chosen.entry.unit_mem_bytes,
        ttd_s: chosen.entry.ttd_s,
        expected_f1: chosen.entry.f1,
        ratio: chosen.ratio,
        overcommit,
        mpr_fallback,
    })
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tick: u64,
    pub rate: f64,
    pub mem_available: u64,
    pub classifier_id: String,
    #[serde(rename = "B")]
    pub batch_size: u64,
    #[serde(rename = "N")]
    pub instances: u64,
    #[serde(rename = "M")]
    pub total_mem: u64,
    pub f1: f64,
    pub ratio: f64,
    pub overcommit: bool,
}

impl DecisionRecord {
    pub fn new(tick: u64, rate: f64, mem_available: u64, d: &SchedulerDecision) -> Self {
        DecisionRecord {
            tick,
            rate,
            mem_available,
            classifier_id: d.classifier_id.clone(),
            batch_size: d.batch_size,
            instances: d.instances,
            total_mem: d.total_mem,
            f1: d.expected_f1,
            ratio: d.ratio,
            overcommit: d.overcommit,
        }
    }
}

pub fn write_decision_log<W: Write>(w: W, records: &[DecisionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_decision_log<R: Read>(r: R) -> Result<Vec<DecisionRecord>> {
    let mut r = csv::Reader::from_reader(r);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
