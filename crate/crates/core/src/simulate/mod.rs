//! Tick-by-tick replay of traffic through the scheduler.
//!
//! One tick is one second. Arrivals in tick `t` with count `n` land at
//! `t + (k - 0.5) / n` for `k = 1..=n`. The scheduler is consulted at the start
//! of every tick. Within a tick an event loop dispatches a batch whenever the
//! backlog holds `B` flows and one more instance fits the memory budget; an
//! instance runs for its profiled TTD and then releases its memory and credits
//! its flows as completed. The backlog is unbounded.

mod report;
mod scenario;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::profile::ProfileEntry;
use crate::schedule::{select, DecisionRecord, SchedulerDecision, SchedulerInput};

pub use report::{read_trace_csv, throughput_report, trend_check, write_trace_csv, Trend, TrendVerdict, TRACE_SCHEMA};
pub use scenario::{Piecewise, Scenario, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub rate: f64,
    pub mem_budget: u64,
    pub arrivals: u64,
    pub dispatched_batches: u64,
    pub completed_flows: u64,
    /// Flows waiting for a batch at the end of the tick.
    pub backlog: u64,
    /// Flows inside running instances at the end of the tick.
    pub in_flight: u64,
    /// Peak number of running instances during the tick.
    pub concurrent_instances: u64,
    /// Peak memory held by running instances during the tick.
    pub mem_in_use: u64,
    pub classifier_id: String,
    pub batch_size: u64,
    pub expected_f1: f64,
    pub overcommit: bool,
    pub cumulative_arrivals: u64,
    pub cumulative_completed: u64,
}

impl TickRecord {
    /// Arrivals so far equal completions plus waiting plus running flows.
    pub fn conserves_flows(&self) -> bool {
        self.cumulative_arrivals == self.cumulative_completed + self.backlog + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub ticks: Vec<TickRecord>,
    pub decisions: Vec<SchedulerDecision>,
}

impl SimulationTrace {
    pub fn decision_log(&self) -> Vec<DecisionRecord> {
        self.ticks
            .iter()
            .zip(&self.decisions)
            .map(|(t, d)| DecisionRecord::new(t.tick, t.rate, t.mem_budget, d))
            .collect()
    }

    /// Tick index of the first conservation failure, if any.
    pub fn conservation_violation(&self) -> Option<u64> {
        self.ticks.iter().find(|t| !t.conserves_flows()).map(|t| t.tick)
    }
}

struct Instance {
    finish: f64,
    flows: u64,
    mem: u64,
}

struct State {
    backlog: u64,
    running: Vec<Instance>,
    mem_used: u64,
    last_classifier: Option<String>,
    completed: u64,
}

impl State {
    fn in_flight(&self) -> u64 {
        self.running.iter().map(|i| i.flows).sum()
    }

    fn next_finish(&self) -> Option<f64> {
        self.running.iter().map(|i| i.finish).min_by(f64::total_cmp)
    }

    fn release_until(&mut self, now: f64) -> u64 {
        let mut done = 0;
        self.running.retain(|i| {
            if i.finish <= now {
                done += i.flows;
                self.mem_used -= i.mem;
                false
            } else {
                true
            }
        });
        self.completed += done;
        done
    }
}

fn check_coverage(members: &[String], profiles: &[ProfileEntry]) -> Result<()> {
    if members.is_empty() || profiles.is_empty() {
        return Err(AcdcError::Config("simulation needs a non-empty pool and profile table".into()));
    }
    let pool: BTreeSet<&str> = members.iter().map(String::as_str).collect();
    let profiled: BTreeSet<&str> = profiles.iter().map(|e| e.classifier_id.as_str()).collect();
    if let Some(missing) = pool.difference(&profiled).next() {
        return Err(AcdcError::Config(format!("pool member {missing} has no profile entries")));
    }
    if let Some(extra) = profiled.difference(&pool).next() {
        return Err(AcdcError::Config(format!("profile entry {extra} is not a pool member")));
    }
    for e in profiles {
        e.validate().map_err(|err| AcdcError::Config(err.to_string()))?;
    }
    Ok(())
}

/// Replays `scenario` against the pool's profile table. `seed` drives the
/// optional Poisson arrivals; runs are deterministic in their inputs.
pub fn run(members: &[String], profiles: &[ProfileEntry], scenario: &Scenario, seed: u64) -> Result<SimulationTrace> {
    scenario.validate()?;
    check_coverage(members, profiles)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = State { backlog: 0, running: Vec::new(), mem_used: 0, last_classifier: None, completed: 0 };
    let mut ticks = Vec::with_capacity(scenario.duration as usize);
    let mut decisions = Vec::with_capacity(scenario.duration as usize);
    let mut cum_rate = 0.0f64;
    let mut cum_arrivals = 0u64;

    for tick in 0..scenario.duration {
        let rate = scenario.rate_schedule.at(tick);
        let budget = scenario.mem_schedule.at(tick);
        let decision = select(&SchedulerInput { rate, mem_available: budget, mpr: scenario.mpr, profiles })?;

        let n = if scenario.poisson_arrivals {
            Poisson::new(rate).map_err(|e| AcdcError::Config(format!("poisson rate {rate}: {e}")))?.sample(&mut rng)
                as u64
        } else {
            let before = cum_rate.floor();
            cum_rate += rate;
            (cum_rate.floor() - before) as u64
        };
        cum_arrivals += n;

        let t0 = tick as f64;
        let t1 = t0 + 1.0;
        let arrival_time = |k: u64| t0 + (k as f64 - 0.5) / n as f64;
        let b = decision.batch_size;
        let completed_before = state.completed;
        let mut dispatched = 0u64;
        let mut arrived = 0u64;
        let mut now = t0;
        state.release_until(now);
        let mut peak_instances = state.running.len() as u64;
        let mut peak_mem = state.mem_used;

        loop {
            while state.backlog >= b && state.mem_used + decision.unit_mem <= budget {
                let mut ttd = decision.ttd_s;
                if state.last_classifier.as_deref().is_some_and(|c| c != decision.classifier_id) {
                    ttd += scenario.switch_cost_s;
                }
                state.last_classifier = Some(decision.classifier_id.clone());
                state.backlog -= b;
                state.mem_used += decision.unit_mem;
                state.running.push(Instance { finish: now + ttd, flows: b, mem: decision.unit_mem });
                dispatched += 1;
                peak_instances = peak_instances.max(state.running.len() as u64);
                peak_mem = peak_mem.max(state.mem_used);
            }

            let next_done = state.next_finish().filter(|&f| f < t1);
            let can_dispatch = state.mem_used + decision.unit_mem <= budget;
            // Arrival index that fills the next batch, when that batch could start.
            let fill = (can_dispatch && state.backlog < b)
                .then(|| arrived + (b - state.backlog))
                .filter(|&k| k <= n)
                .filter(|&k| next_done.is_none_or(|f| arrival_time(k) < f));
            if let Some(k) = fill {
                state.backlog += k - arrived;
                arrived = k;
                now = arrival_time(k);
            } else if let Some(f) = next_done {
                // Arrivals strictly before the completion join the backlog first.
                let before = if n == 0 { 0 } else { ((f - t0) * n as f64 + 0.5).ceil() as u64 - 1 };
                let upto = before.clamp(arrived, n);
                state.backlog += upto - arrived;
                arrived = upto;
                now = f;
                state.release_until(now);
            } else {
                state.backlog += n - arrived;
                break;
            }
        }

        let in_flight = state.in_flight();
        ticks.push(TickRecord {
            tick,
            rate,
            mem_budget: budget,
            arrivals: n,
            dispatched_batches: dispatched,
            completed_flows: state.completed - completed_before,
            backlog: state.backlog,
            in_flight,
            concurrent_instances: peak_instances,
            mem_in_use: peak_mem,
            classifier_id: decision.classifier_id.clone(),
            batch_size: b,
            expected_f1: decision.expected_f1,
            overcommit: decision.overcommit,
            cumulative_arrivals: cum_arrivals,
            cumulative_completed: state.completed,
        });
        decisions.push(decision);
    }
    Ok(SimulationTrace { ticks, decisions })
}
