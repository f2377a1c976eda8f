use std::fmt::Write as _;
use std::time::Instant;

use super::{ProfileEntry, ProfileMode};
use crate::encode::{encode_flows, FeatureMatrix, ENCODED_PACKETS};
use crate::error::{AcdcError, Result};
use crate::models::EnsembleModel;
use crate::traffic::{FlowRecord, PacketSnapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureOptions {
    /// Timed repetitions per batch size; the median is reported.
    pub runs: usize,
    /// Multiplier on the accounted peak memory of one instance.
    pub safety_factor: f64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions { runs: 5, safety_factor: 1.2 }
    }
}

/// Intermediate features written out as text, one row per line.
fn write_features(x: &FeatureMatrix, buf: &mut String) {
    buf.clear();
    for row in x.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            let _ = write!(buf, "{v}");
        }
        buf.push('\n');
    }
}

fn read_features(text: &str, n_cols: usize) -> Result<FeatureMatrix> {
    let mut data = Vec::with_capacity(text.len() / 2);
    for line in text.lines() {
        for tok in line.split(',') {
            data.push(tok.parse::<i8>().map_err(|e| AcdcError::Format(format!("feature text: {e}")))?);
        }
    }
    FeatureMatrix::new(n_cols, data)
}

fn flow_bytes(flows: &[FlowRecord]) -> usize {
    flows
        .iter()
        .map(|f| {
            std::mem::size_of::<FlowRecord>()
                + f.packets.capacity() * std::mem::size_of::<PacketSnapshot>()
                + f.packets.iter().map(|p| p.ip_header.capacity() + p.transport_header.capacity()).sum::<usize>()
        })
        .sum()
}

struct RunResult {
    seconds: f64,
    peak_bytes: usize,
}

/// One instance: raw batch in hand, encode, write and re-read the intermediate
/// features, predict.
fn run_instance(model: &EnsembleModel, batch: &[FlowRecord]) -> Result<RunResult> {
    let start = Instant::now();
    let x = encode_flows(batch, &model.subset, ENCODED_PACKETS)?;
    let mut text = String::new();
    write_features(&x, &mut text);
    let reloaded = read_features(&text, x.n_cols())?;
    let pred = model.predict(&reloaded)?;
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(&pred);
    let peak_bytes = model.heap_bytes()
        + flow_bytes(batch)
        + x.heap_bytes()
        + text.capacity()
        + reloaded.heap_bytes()
        + pred.capacity() * std::mem::size_of::<crate::traffic::ClassId>();
    Ok(RunResult { seconds, peak_bytes })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Wall-clock profile of one member. Each batch is the first `B` test flows.
///
/// The time covers encoding, the intermediate feature round trip through text
/// and prediction. Unit memory is the accounted size of every live buffer at
/// the end of a run times the safety factor.
pub fn measure_profile(
    classifier_id: &str,
    model: &EnsembleModel,
    test: &[FlowRecord],
    f1: f64,
    batch_sizes: &[u64],
    opts: &MeasureOptions,
) -> Result<Vec<ProfileEntry>> {
    if opts.runs == 0 || !(opts.safety_factor >= 1.0) {
        return Err(AcdcError::Config("runs must be >= 1 and safety_factor >= 1".into()));
    }
    let mut out = Vec::with_capacity(batch_sizes.len());
    for &b in batch_sizes {
        if b == 0 || b as usize > test.len() {
            return Err(AcdcError::Argument(format!("batch size {b} needs 1..={} test flows", test.len())));
        }
        let batch = &test[..b as usize];
        // Warm-up run, not timed.
        let mut peak = run_instance(model, batch)?.peak_bytes;
        let mut times = Vec::with_capacity(opts.runs);
        for _ in 0..opts.runs {
            let r = run_instance(model, batch)?;
            times.push(r.seconds);
            peak = peak.max(r.peak_bytes);
        }
        out.push(ProfileEntry {
            classifier_id: classifier_id.to_string(),
            subset: model.subset.to_string(),
            batch_size: b,
            f1,
            ttd_s: median(times).max(1e-9),
            unit_mem_bytes: ((peak as f64) * opts.safety_factor).ceil() as u64,
            mode: ProfileMode::Measured,
        });
    }
    Ok(out)
}
