use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassId, FlowSet};
use crate::error::{AcdcError, Result};

/// Splits `set` into (train, test).
///
/// The train size is `floor(fraction * n)`, capped so at least one flow lands in
/// the test set. When every class has two or more flows the split is stratified:
/// per-class train quotas follow largest-remainder apportionment. Both halves
/// keep the input order of their flows.
pub fn split_train_test(set: &FlowSet, train_fraction: f64, seed: u64) -> Result<(FlowSet, FlowSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(AcdcError::Config(format!("train_fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n = set.len();
    if n == 0 {
        return Err(AcdcError::Argument("cannot split an empty flow set".into()));
    }
    let mut n_train = ((train_fraction * n as f64).floor() as usize).min(n - 1);
    if n >= 2 {
        n_train = n_train.max(1);
    }

    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, f) in set.flows.iter().enumerate() {
        by_class.entry(f.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stratified = by_class.values().all(|v| v.len() >= 2);

    let mut in_train = vec![false; n];
    if stratified {
        let quotas = apportion(&by_class, n_train, n);
        for (members, quota) in by_class.values_mut().zip(quotas) {
            members.shuffle(&mut rng);
            for &i in &members[..quota] {
                in_train[i] = true;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for &i in &all[..n_train] {
            in_train[i] = true;
        }
    }

    let mut train = FlowSet { flows: Vec::new(), label_names: set.label_names.clone() };
    let mut test = FlowSet { flows: Vec::new(), label_names: set.label_names.clone() };
    for (flow, is_train) in set.flows.iter().zip(in_train) {
        if is_train {
            train.flows.push(flow.clone());
        } else {
            test.flows.push(flow.clone());
        }
    }
    Ok((train, test))
}

/// Largest-remainder split of `total` across classes proportional to class size.
fn apportion(by_class: &BTreeMap<ClassId, Vec<usize>>, total: usize, n: usize) -> Vec<usize> {
    let mut quotas = Vec::with_capacity(by_class.len());
    let mut remainders = Vec::with_capacity(by_class.len());
    for (idx, members) in by_class.values().enumerate() {
        let exact = total as f64 * members.len() as f64 / n as f64;
        let q = (exact.floor() as usize).min(members.len());
        quotas.push(q);
        remainders.push((exact - q as f64, idx));
    }
    let mut left = total - quotas.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    while left > 0 {
        let mut progressed = false;
        for &(_, idx) in &remainders {
            if left == 0 {
                break;
            }
            if quotas[idx] < sizes[idx] {
                quotas[idx] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quotas
}
