//! Flow-statistics baseline: per-class diagonal Gaussian mixtures over the
//! payload sizes and inter-arrival times of the first four data packets.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AcdcError, Result};
use crate::traffic::{ClassId, FlowRecord, FlowSet};

pub const STAT_DIMS: usize = 8;
pub const VARIANCE_FLOOR: f64 = 1e-6;
const MAX_EM_ITERS: usize = 200;
const EM_TOLERANCE: f64 = 1e-6;

/// Sizes of the first four non-zero-payload packets followed by their
/// inter-arrival times. The first gap is measured from the flow's first packet;
/// each later gap from the previous data packet. `None` when the flow has
/// fewer than four data packets.
pub fn flow_stats_features(flow: &FlowRecord) -> Option<[f64; STAT_DIMS]> {
    let data: Vec<_> = flow.nonzero_payloads().take(4).collect();
    if data.len() < 4 {
        return None;
    }
    let mut out = [0.0; STAT_DIMS];
    let mut prev = flow.packets[0].timestamp;
    for (i, p) in data.iter().enumerate() {
        out[i] = p.payload_len as f64;
        out[4 + i] = p.timestamp - prev;
        prev = p.timestamp;
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMixture {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; STAT_DIMS]>,
    pub variances: Vec<[f64; STAT_DIMS]>,
}

impl DiagonalMixture {
    fn component_log_density(&self, c: usize, x: &[f64; STAT_DIMS]) -> f64 {
        x.iter()
            .zip(&self.means[c])
            .zip(&self.variances[c])
            .map(|((xi, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (xi - m).powi(2) / v))
            .sum()
    }

    pub fn log_likelihood(&self, x: &[f64; STAT_DIMS]) -> f64 {
        let terms: Vec<f64> =
            (0..self.weights.len()).map(|c| self.weights[c].ln() + self.component_log_density(c, x)).collect();
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Fits a diagonal mixture by expectation-maximization.
///
/// Returns the mixture and the mean per-sample log-likelihood after each
/// iteration. Stops when the improvement drops below 1e-6 or after 200
/// iterations. Variances are floored at [`VARIANCE_FLOOR`].
pub fn fit_mixture(data: &[[f64; STAT_DIMS]], components: usize, seed: u64) -> Result<(DiagonalMixture, Vec<f64>)> {
    if data.is_empty() {
        return Err(AcdcError::Argument("mixture fit needs at least one sample".into()));
    }
    if components == 0 {
        return Err(AcdcError::Config("components_per_class must be at least 1".into()));
    }
    let n = data.len();
    let k = components.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut global_mean = [0.0; STAT_DIMS];
    for x in data {
        for d in 0..STAT_DIMS {
            global_mean[d] += x[d] / n as f64;
        }
    }
    let mut global_var = [0.0; STAT_DIMS];
    for x in data {
        for d in 0..STAT_DIMS {
            global_var[d] += (x[d] - global_mean[d]).powi(2) / n as f64;
        }
    }
    let global_var = global_var.map(|v| v.max(VARIANCE_FLOOR));

    // k-means++ style seeding under the variance-normalized distance.
    let dist = |a: &[f64; STAT_DIMS], b: &[f64; STAT_DIMS]| -> f64 {
        (0..STAT_DIMS).map(|d| (a[d] - b[d]).powi(2) / global_var[d]).sum()
    };
    let mut means = vec![data[rng.random_range(0..n)]];
    while means.len() < k {
        let d2: Vec<f64> =
            data.iter().map(|x| means.iter().map(|m| dist(x, m)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        means.push(data[next]);
    }
    let mut mix = DiagonalMixture { weights: vec![1.0 / k as f64; k], means, variances: vec![global_var; k] };

    let mut resp = vec![0.0; n * k];
    let mut history = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..MAX_EM_ITERS {
        // E-step
        let mut ll = 0.0;
        let mut terms = vec![0.0; k];
        for (i, x) in data.iter().enumerate() {
            for (c, t) in terms.iter_mut().enumerate() {
                *t = mix.weights[c].ln() + mix.component_log_density(c, x);
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (terms[c] - lse).exp();
            }
        }
        let mean_ll = ll / n as f64;
        history.push(mean_ll);
        if mean_ll - prev_ll < EM_TOLERANCE {
            break;
        }
        prev_ll = mean_ll;

        // M-step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            mix.weights[c] = nk / n as f64;
            if nk < 1e-12 {
                continue;
            }
            let mut mean = [0.0; STAT_DIMS];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * k + c];
                for d in 0..STAT_DIMS {
                    mean[d] += r * x[d];
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut var = [0.0; STAT_DIMS];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * k + c];
                for d in 0..STAT_DIMS {
                    var[d] += r * (x[d] - mean[d]).powi(2);
                }
            }
            mix.means[c] = mean;
            mix.variances[c] = var.map(|v| (v / nk).max(VARIANCE_FLOOR));
        }
    }
    Ok((mix, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStatsModel {
    pub classes: Vec<ClassId>,
    pub log_priors: Vec<f64>,
    /// `None` for classes without any flow that has four data packets.
    pub mixtures: Vec<Option<DiagonalMixture>>,
    pub components_per_class: usize,
}

impl FlowStatsModel {
    fn prior_class(&self) -> ClassId {
        let mut best = 0;
        for c in 1..self.classes.len() {
            if self.log_priors[c] > self.log_priors[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    pub fn predict_one(&self, flow: &FlowRecord) -> ClassId {
        let Some(x) = flow_stats_features(flow) else {
            return self.prior_class();
        };
        let mut best: Option<(usize, f64)> = None;
        for (c, mix) in self.mixtures.iter().enumerate() {
            let Some(mix) = mix else { continue };
            let score = mix.log_likelihood(&x) + self.log_priors[c];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((c, score));
            }
        }
        best.map_or_else(|| self.prior_class(), |(c, _)| self.classes[c])
    }
}

/// Fits one mixture per class. Flows with fewer than four data packets only
/// contribute to the class priors.
pub fn train_flowstats(train: &FlowSet, components_per_class: usize, seed: u64) -> Result<FlowStatsModel> {
    if train.is_empty() {
        return Err(AcdcError::Argument("flow-statistics training set is empty".into()));
    }
    if components_per_class == 0 {
        return Err(AcdcError::Config("components_per_class must be at least 1".into()));
    }
    let mut by_class: BTreeMap<ClassId, (usize, Vec<[f64; STAT_DIMS]>)> = BTreeMap::new();
    for f in &train.flows {
        let entry = by_class.entry(f.label).or_default();
        entry.0 += 1;
        if let Some(x) = flow_stats_features(f) {
            entry.1.push(x);
        }
    }
    let n = train.len() as f64;
    let mut classes = Vec::new();
    let mut log_priors = Vec::new();
    let mut mixtures = Vec::new();
    for (i, (class, (count, data))) in by_class.into_iter().enumerate() {
        classes.push(class);
        log_priors.push((count as f64 / n).ln());
        mixtures.push(if data.is_empty() {
            None
        } else {
            Some(fit_mixture(&data, components_per_class, seed.wrapping_add(i as u64))?.0)
        });
    }
    Ok(FlowStatsModel { classes, log_priors, mixtures, components_per_class })
}

pub fn predict_flowstats(model: &FlowStatsModel, flows: &[FlowRecord]) -> Vec<ClassId> {
    flows.iter().map(|f| model.predict_one(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::weighted_f1;
    use crate::traffic::testutil::tcp_packet;
    use crate::traffic::FlowRecord;

    fn flow_with_payloads(label: ClassId, payloads: &[u32], gap: f64) -> FlowRecord {
        let packets: Vec<_> =
            payloads.iter().enumerate().map(|(i, &p)| tcp_packet(i as f64 * gap, i % 2 == 0, 64, p)).collect();
        FlowRecord { key: packets[0].flow_key(), label, packets }
    }

    #[test]
    fn skips_zero_size_packets() {
        let f = flow_with_payloads(0, &[0, 0, 1448, 120, 800, 400], 0.5);
        let x = flow_stats_features(&f).unwrap();
        assert_eq!(&x[..4], &[1448.0, 120.0, 800.0, 400.0]);
        assert_eq!(&x[4..], &[1.0, 0.5, 0.5, 0.5]);
        assert!(flow_stats_features(&flow_with_payloads(0, &[0, 5, 5, 5], 0.1)).is_none());
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<[f64; STAT_DIMS]> = (0..300)
            .map(|i| {
                let center = if i % 3 == 0 { 200.0 } else { 1200.0 };
                std::array::from_fn(|d| center + d as f64 + rng.random::<f64>() * 80.0)
            })
            .collect();
        let (mix, hist) = fit_mixture(&data, 3, 1).unwrap();
        assert!((mix.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for w in hist.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{hist:?}");
        }
    }

    #[test]
    fn degenerate_data_hits_the_floor() {
        let data = vec![[5.0; STAT_DIMS]; 20];
        let (mix, _) = fit_mixture(&data, 2, 0).unwrap();
        assert!(mix.variances.iter().flatten().all(|&v| v >= VARIANCE_FLOOR));
        assert!(mix.log_likelihood(&[5.0; STAT_DIMS]).is_finite());
    }

    #[test]
    fn disjoint_sizes_are_separable() {
        let mut flows = Vec::new();
        for i in 0..40 {
            let base = if i % 2 == 0 { 100 } else { 1300 };
            let j = (i * 7 % 13) as u32;
            flows.push(flow_with_payloads((i % 2) as ClassId, &[base + j, base + 2 * j, base, base + 5], 0.01));
        }
        let set = FlowSet { flows, label_names: BTreeMap::from([(0, "a".into()), (1, "b".into())]) };
        let model = train_flowstats(&set, 1, 0).unwrap();
        let pred = predict_flowstats(&model, &set.flows);
        assert_eq!(weighted_f1(&set.labels(), &pred).unwrap(), 1.0);
    }

    #[test]
    fn short_flows_use_the_prior() {
        let mut flows = vec![flow_with_payloads(1, &[10, 10, 10, 10], 0.1); 3];
        flows.push(flow_with_payloads(0, &[10, 20, 30, 40], 0.1));
        let set = FlowSet { flows, label_names: BTreeMap::from([(0, "a".into()), (1, "b".into())]) };
        let model = train_flowstats(&set, 1, 0).unwrap();
        let short = flow_with_payloads(0, &[0, 0, 5], 0.1);
        assert_eq!(model.predict_one(&short), 1);
    }
}
