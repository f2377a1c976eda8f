use serde::{Deserialize, Serialize};

use super::{ProfileEntry, ProfileMode};
use crate::encode::{subset_bits, FeatureSubset};
use crate::error::{AcdcError, Result};

/// One calibration point: `bit_flows = subset_bits * B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub bit_flows: f64,
    pub ttd_s: f64,
    pub mem_bytes: f64,
}

/// Affine cost in aggregated bits times batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub ttd_intercept: f64,
    pub ttd_per_bitflow: f64,
    pub mem_intercept: f64,
    pub mem_per_bitflow: f64,
    pub pearson_ttd: f64,
    pub pearson_mem: f64,
}

impl CostModel {
    pub fn ttd(&self, bits: u32, b: u64) -> f64 {
        self.ttd_intercept + self.ttd_per_bitflow * bits as f64 * b as f64
    }

    pub fn unit_mem(&self, bits: u32, b: u64) -> u64 {
        (self.mem_intercept + self.mem_per_bitflow * bits as f64 * b as f64).round().max(1.0) as u64
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let model: CostModel = serde_json::from_slice(&std::fs::read(path.as_ref())?)?;
        if model.ttd_per_bitflow < 0.0 || model.mem_per_bitflow < 0.0 {
            return Err(AcdcError::Format("cost model slopes must be non-negative".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Least-squares line; a negative slope is clamped to zero with the intercept
/// at the mean.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope < 0.0 {
        (my, 0.0)
    } else {
        (my - slope * mx, slope)
    }
}

pub fn calibrate_cost_model(samples: &[CostSample]) -> Result<CostModel> {
    if samples.len() < 3 {
        return Err(AcdcError::Argument(format!("calibration needs >= 3 samples, got {}", samples.len())));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.bit_flows).collect();
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(AcdcError::DegenerateFit("all samples share the same bits x batch size".into()));
    }
    let ttd: Vec<f64> = samples.iter().map(|s| s.ttd_s).collect();
    let mem: Vec<f64> = samples.iter().map(|s| s.mem_bytes).collect();
    let (ttd_intercept, ttd_per_bitflow) = fit_line(&xs, &ttd);
    let (mem_intercept, mem_per_bitflow) = fit_line(&xs, &mem);
    Ok(CostModel {
        ttd_intercept,
        ttd_per_bitflow,
        mem_intercept,
        mem_per_bitflow,
        pearson_ttd: pearson(&xs, &ttd),
        pearson_mem: pearson(&xs, &mem),
    })
}

pub fn cost_samples(entries: &[ProfileEntry]) -> Result<Vec<CostSample>> {
    entries
        .iter()
        .map(|e| {
            Ok(CostSample {
                bit_flows: e.bits()? as f64 * e.batch_size as f64,
                ttd_s: e.ttd_s,
                mem_bytes: e.unit_mem_bytes as f64,
            })
        })
        .collect()
}

/// Profile entries predicted by `cost` for every batch size. `f1` comes from a
/// held-out evaluation and is shared across batch sizes.
pub fn model_profile(
    classifier_id: &str,
    subset: &FeatureSubset,
    f1: f64,
    batch_sizes: &[u64],
    cost: &CostModel,
) -> Result<Vec<ProfileEntry>> {
    let bits = subset_bits(subset);
    batch_sizes
        .iter()
        .map(|&b| {
            let entry = ProfileEntry {
                classifier_id: classifier_id.to_string(),
                subset: subset.to_string(),
                batch_size: b,
                f1,
                ttd_s: cost.ttd(bits, b),
                unit_mem_bytes: cost.unit_mem(bits, b),
                mode: ProfileMode::Modeled,
            };
            entry.validate().map_err(|_| {
                AcdcError::Argument(format!(
                    "cost model yields a non-positive ttd or memory for {classifier_id} at B={b}"
                ))
            })?;
            Ok(entry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(xs: &[f64], ys: &[f64]) -> Vec<CostSample> {
        xs.iter().zip(ys).map(|(&x, &y)| CostSample { bit_flows: x, ttd_s: y, mem_bytes: 100.0 + 3.0 * x }).collect()
    }

    #[test]
    fn exact_affine_fit() {
        let xs = [10.0, 200.0, 3000.0, 45000.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.25 + 2e-5 * x).collect();
        let m = calibrate_cost_model(&samples(&xs, &ys)).unwrap();
        assert!((m.ttd_intercept - 0.25).abs() < 1e-9);
        assert!((m.ttd_per_bitflow - 2e-5).abs() < 1e-9);
        assert!((m.mem_intercept - 100.0).abs() < 1e-9);
        assert!((m.mem_per_bitflow - 3.0).abs() < 1e-9);
        assert!((m.pearson_ttd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_by_hand() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]) - 9.0 / 84f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_clamped() {
        let err = calibrate_cost_model(&samples(&[5.0; 4], &[1.0, 2.0, 3.0, 4.0])).unwrap_err();
        assert!(matches!(err, AcdcError::DegenerateFit(_)));
        assert!(calibrate_cost_model(&samples(&[1.0, 2.0], &[1.0, 2.0])).is_err());
        let m = calibrate_cost_model(&samples(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(m.ttd_per_bitflow, 0.0);
        assert_eq!(m.ttd_intercept, 2.0);
    }

    #[test]
    fn modeled_entries_are_affine() {
        let cost = CostModel {
            ttd_intercept: 0.263,
            ttd_per_bitflow: 7.2e-6,
            mem_intercept: 3.1e8,
            mem_per_bitflow: 500.0,
            pearson_ttd: 1.0,
            pearson_mem: 1.0,
        };
        let s11 = FeatureSubset::parse("ipv4-dfbit&tcp-fin&ipv4-ttl&tcp-ackf").unwrap();
        let s44 = FeatureSubset::parse("ipv4-dfbit&ipv4-ttl&tcp-wsize&tcp-cksum&tcp-fin&tcp-ackf").unwrap();
        let e = model_profile("a", &s11, 0.7, &[250, 500], &cost).unwrap();
        assert!(((e[1].ttd_s - 0.263) - 2.0 * (e[0].ttd_s - 0.263)).abs() < 1e-12);
        assert!((e[1].ttd_s - 0.3026).abs() < 1e-12);
        assert!(e.iter().all(|x| x.mode == ProfileMode::Modeled && x.f1 == 0.7));
        let big = model_profile("b", &s44, 0.7, &[500], &cost).unwrap();
        assert!(big[0].ttd_s > e[1].ttd_s);
    }
}
