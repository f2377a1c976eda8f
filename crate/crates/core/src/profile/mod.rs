//! Per-(classifier, batch size) efficiency profiles and the concurrency and
//! memory arithmetic the scheduler relies on.

mod cost;
mod measure;
mod registry;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encode::{subset_bits, FeatureSubset};
use crate::error::{AcdcError, Result};

pub use cost::{calibrate_cost_model, cost_samples, model_profile, pearson, CostModel, CostSample};
pub use measure::{measure_profile, MeasureOptions};
pub use registry::{
    profile_pool, MeasuredProfiler, ModeledProfiler, ProfileRequest, Profiler, ProfilerOptions, ProfilerRegistry,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    Measured,
    Modeled,
}

impl fmt::Display for ProfileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileMode::Measured => "measured",
            ProfileMode::Modeled => "modeled",
        })
    }
}

/// F1, time-to-decision and unit memory of one classifier at one batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub classifier_id: String,
    /// Field names joined with `&`.
    pub subset: String,
    pub batch_size: u64,
    pub f1: f64,
    pub ttd_s: f64,
    pub unit_mem_bytes: u64,
    pub mode: ProfileMode,
}

impl ProfileEntry {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.ttd_s > 0.0) || !self.ttd_s.is_finite() || self.unit_mem_bytes == 0 {
            return Err(AcdcError::Format(format!(
                "profile entry {} at B={} needs B >= 1, ttd > 0 and unit memory > 0",
                self.classifier_id, self.batch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.f1) {
            return Err(AcdcError::Format(format!("{}: f1 {} outside [0, 1]", self.classifier_id, self.f1)));
        }
        Ok(())
    }

    /// Aggregate per-packet bit width of the entry's subset.
    pub fn bits(&self) -> Result<u32> {
        Ok(subset_bits(&FeatureSubset::parse(&self.subset)?))
    }

    pub fn ratio(&self) -> f64 {
        self.f1 / self.ttd_s
    }
}

/// Instances that run concurrently when a batch of `b` flows fills every
/// `b / rate` seconds and each instance takes `ttd` seconds:
/// `N = ceil(ttd / (b / rate))`.
pub fn concurrent_instances(b: u64, rate: f64, ttd: f64) -> Result<u64> {
    if b == 0 || !(rate > 0.0) || !(ttd > 0.0) || !rate.is_finite() || !ttd.is_finite() {
        return Err(AcdcError::Argument(format!(
            "concurrent_instances needs B >= 1, R > 0, ttd > 0 (got {b}, {rate}, {ttd})"
        )));
    }
    let x = ttd * rate / b as f64;
    // Absorb rounding so that exact multiples such as 1.0 do not round up.
    let n = (x * (1.0 - 4.0 * f64::EPSILON)).ceil();
    Ok((n as u64).max(1))
}

/// `M = N * m`, saturating.
pub fn total_memory(n: u64, unit_mem: u64) -> u64 {
    n.saturating_mul(unit_mem)
}

/// Flows classified per second at `rate` when each batch takes `ttd`.
pub fn throughput(rate: f64, ttd: f64) -> Result<f64> {
    if !(rate > 0.0) || !(ttd > 0.0) {
        return Err(AcdcError::Argument(format!("throughput needs rate > 0 and ttd > 0 (got {rate}, {ttd})")));
    }
    Ok(rate / ttd)
}

/// [`throughput`] capped at the arrival rate.
pub fn handled_throughput(rate: f64, ttd: f64) -> Result<f64> {
    Ok(throughput(rate, ttd)?.min(rate))
}

pub fn write_profile_csv<W: Write>(w: W, entries: &[ProfileEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile_csv<R: Read>(r: R) -> Result<Vec<ProfileEntry>> {
    let mut r = csv::Reader::from_reader(r);
    let entries = r.deserialize().collect::<std::result::Result<Vec<ProfileEntry>, _>>()?;
    for e in &entries {
        e.validate()?;
    }
    Ok(entries)
}

pub fn write_profile_table(path: impl AsRef<Path>, entries: &[ProfileEntry]) -> Result<()> {
    write_profile_csv(std::fs::File::create(path.as_ref())?, entries)
}

pub fn read_profile_table(path: impl AsRef<Path>) -> Result<Vec<ProfileEntry>> {
    read_profile_csv(std::fs::File::open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GB: u64 = 1_000_000_000;

    #[test]
    fn instances_by_hand() {
        assert_eq!(concurrent_instances(1000, 1000.0, 1.0).unwrap(), 1);
        assert_eq!(concurrent_instances(500, 1500.0, 1.5).unwrap(), 5);
        assert_eq!(concurrent_instances(7000, 7000.0, 19.689).unwrap(), 20);
        assert_eq!(concurrent_instances(500, 1000.0, 0.303).unwrap(), 1);
        assert_eq!(total_memory(5, 1_500_000_000), 7 * GB + GB / 2);
        assert!(concurrent_instances(0, 1.0, 1.0).is_err());
        assert!(concurrent_instances(1, 0.0, 1.0).is_err());
        assert!(concurrent_instances(1, 1.0, -1.0).is_err());
    }

    #[test]
    fn throughput_cap() {
        assert!((throughput(7000.0, 19.689).unwrap() - 355.528).abs() < 1e-3);
        assert_eq!(throughput(100.0, 1.0).unwrap(), 100.0);
        assert_eq!(handled_throughput(100.0, 0.5).unwrap(), 100.0);
    }

    #[test]
    fn csv_round_trip() {
        let e = ProfileEntry {
            classifier_id: "s4c0".into(),
            subset: "ipv4-ttl&tcp-fin".into(),
            batch_size: 500,
            f1: 0.744,
            ttd_s: 0.303,
            unit_mem_bytes: 315_000_000,
            mode: ProfileMode::Modeled,
        };
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, std::slice::from_ref(&e)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("classifier_id,subset,batch_size,f1,ttd_s,unit_mem_bytes,mode\n"));
        assert_eq!(read_profile_csv(&buf[..]).unwrap(), vec![e.clone()]);
        assert_eq!(e.bits().unwrap(), 9);
    }

    #[test]
    fn rejects_non_positive_ttd() {
        let text = "classifier_id,subset,batch_size,f1,ttd_s,unit_mem_bytes,mode\na,ipv4-ttl,10,0.5,0,10,measured\n";
        assert!(read_profile_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn instances_monotone(b in 1u64..5000, r in 1.0f64..20000.0, t in 0.001f64..30.0, dr in 0.0f64..1000.0, dt in 0.0f64..5.0) {
            let n = concurrent_instances(b, r, t).unwrap();
            prop_assert!(concurrent_instances(b, r + dr, t).unwrap() >= n);
            prop_assert!(concurrent_instances(b, r, t + dt).unwrap() >= n);
            prop_assert!(n >= 1);
        }

        #[test]
        fn memory_linear(n in 1u64..1000, m in 1u64..10_000_000) {
            prop_assert_eq!(total_memory(2 * n, m), 2 * total_memory(n, m));
        }
    }
}
