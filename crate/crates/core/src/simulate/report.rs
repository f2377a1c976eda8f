use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{SimulationTrace, TickRecord};
use crate::error::{AcdcError, Result};

/// First line of every trace file.
pub const TRACE_SCHEMA: &str = "#schema=acdc-trace/1";

pub fn write_trace_csv<W: Write>(mut w: W, trace: &SimulationTrace) -> Result<()> {
    writeln!(w, "{TRACE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(w);
    for t in &trace.ticks {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TickRecord>> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    if first.trim_end() != TRACE_SCHEMA {
        return Err(AcdcError::Format(format!("trace schema line {first:?}, expected {TRACE_SCHEMA:?}")));
    }
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Completed flows per second over consecutive windows of `window` ticks.
/// A trailing partial window is dropped.
pub fn throughput_report(ticks: &[TickRecord], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > ticks.len() {
        return Err(AcdcError::Argument(format!("window {window} outside 1..={}", ticks.len())));
    }
    Ok(ticks
        .chunks_exact(window)
        .map(|c| c.iter().map(|t| t.completed_flows).sum::<u64>() as f64 / window as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub expected: Trend,
    /// Lower median of the per-tick selected batch size, one per sweep point.
    pub median_batch: Vec<u64>,
    /// Adjacent sweep points that move against the expected direction.
    pub violations: usize,
}

impl TrendVerdict {
    pub fn monotone(&self) -> bool {
        self.violations == 0
    }
}

fn lower_median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Checks that the median selected batch size moves weakly in `expected`
/// direction across traces ordered by the swept parameter.
pub fn trend_check(traces: &[&[TickRecord]], expected: Trend) -> Result<TrendVerdict> {
    let median_batch = traces
        .iter()
        .map(|t| {
            if t.is_empty() {
                return Err(AcdcError::Argument("trend check over an empty trace".into()));
            }
            Ok(lower_median(t.iter().map(|r| r.batch_size).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = median_batch
        .windows(2)
        .filter(|w| match expected {
            Trend::Increasing => w[1] < w[0],
            Trend::Decreasing => w[1] > w[0],
        })
        .count();
    Ok(TrendVerdict { expected, median_batch, violations })
}
