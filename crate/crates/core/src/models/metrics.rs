use std::collections::BTreeMap;

use crate::error::{AcdcError, Result};
use crate::traffic::ClassId;

/// Support-weighted F1 across the classes present in `truth`.
///
/// A class whose precision and recall are both zero scores 0.
pub fn weighted_f1(truth: &[ClassId], pred: &[ClassId]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(AcdcError::Argument(format!("truth has {} labels, predictions {}", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(AcdcError::Argument("weighted F1 of an empty label set".into()));
    }
    #[derive(Default)]
    struct Counts {
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut counts: BTreeMap<ClassId, Counts> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            counts.entry(t).or_default().tp += 1;
        } else {
            counts.entry(t).or_default().fn_ += 1;
            counts.entry(p).or_default().fp += 1;
        }
    }
    let total: f64 = counts
        .values()
        .map(|c| {
            let support = c.tp + c.fn_;
            let denom = 2 * c.tp + c.fp + c.fn_;
            if support == 0 || denom == 0 {
                0.0
            } else {
                support as f64 * (2 * c.tp) as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// F1 of always predicting the most frequent class (lowest id on ties).
pub fn majority_f1(truth: &[ClassId]) -> Result<f64> {
    let mut hist: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &t in truth {
        *hist.entry(t).or_default() += 1;
    }
    let majority = hist
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&c, _)| c)
        .ok_or_else(|| AcdcError::Argument("majority of an empty label set".into()))?;
    weighted_f1(truth, &vec![majority; truth.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        assert_eq!(weighted_f1(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_two_thirds() {
        // A: tp 1, fn 1, fp 0 -> 2/3. B: tp 1, fp 1 -> 2/3.
        let f1 = weighted_f1(&[0, 0, 1], &[0, 1, 1]).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_wrong_is_zero() {
        assert_eq!(weighted_f1(&[0, 0, 0], &[1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        assert!(weighted_f1(&[], &[]).is_err());
        assert!(weighted_f1(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn majority_baseline() {
        // Predict class 0 everywhere: class 0 has p=3/4, r=1 -> 6/7, weight 3/4.
        let f1 = majority_f1(&[0, 0, 0, 1]).unwrap();
        assert!((f1 - 0.75 * 6.0 / 7.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_and_relabel_invariant(
            pairs in prop::collection::vec((0u32..5, 0u32..5), 1..60),
            shift in 1u32..50,
        ) {
            let truth: Vec<_> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<_> = pairs.iter().map(|p| p.1).collect();
            let f = weighted_f1(&truth, &pred).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            // Consistent relabeling: a bijection on ids.
            let relabel = |c: u32| (4 - c) * 7 + shift;
            let t2: Vec<_> = truth.iter().map(|&c| relabel(c)).collect();
            let p2: Vec<_> = pred.iter().map(|&c| relabel(c)).collect();
            let g = weighted_f1(&t2, &p2).unwrap();
            prop_assert!((f - g).abs() < 1e-12);
        }
    }
}
