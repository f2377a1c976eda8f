//! Gradient-boosted axis-aligned decision trees over ternary feature vectors.
//!
//! Multiclass training uses softmax boosting: each round fits one regression
//! tree per class on the second-order expansion of the cross-entropy loss.
//! Features take values in {-1, 0, 1}, so a split is `x[j] <= t` with
//! `t` in {-1, 0}, and split search is a three-bin histogram per column.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{encode_flows, FeatureMatrix, FeatureSubset, ENCODED_PACKETS};
use crate::error::{AcdcError, Result};
use crate::traffic::{ClassId, FlowRecord};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    /// Boosting rounds; each round adds one tree per class.
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
    /// Fraction of rows sampled per round; 1.0 disables sampling.
    pub subsample: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            n_rounds: 50,
            max_depth: 6,
            learning_rate: 0.1,
            lambda: 1.0,
            min_samples_leaf: 2,
            min_child_weight: 1e-3,
            subsample: 1.0,
        }
    }
}

impl EnsembleParams {
    fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(AcdcError::Config("n_rounds, max_depth and min_samples_leaf must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) {
            return Err(AcdcError::Config("learning_rate must be > 0 and lambda >= 0".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(AcdcError::Config(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: u32, threshold: i8, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    pub fn predict(&self, x: &[i8]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

/// A trained pool member model: boosted trees bound to one feature subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub subset: FeatureSubset,
    pub classes: Vec<ClassId>,
    pub params: EnsembleParams,
    pub train_seed: u64,
    pub n_features: usize,
    /// Initial raw score per class (log prior).
    pub base_scores: Vec<f64>,
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: EnsembleModel,
}

impl EnsembleModel {
    fn check_shape(&self, n_cols: usize) -> Result<()> {
        if n_cols != self.n_features {
            return Err(AcdcError::Shape { expected: self.n_features, actual: n_cols });
        }
        Ok(())
    }

    fn raw_scores(&self, x: &[i8], out: &mut [f64]) {
        out.copy_from_slice(&self.base_scores);
        for round in &self.rounds {
            for (k, tree) in round.iter().enumerate() {
                out[k] += tree.predict(x);
            }
        }
    }

    fn predict_row(&self, x: &[i8], scratch: &mut [f64]) -> ClassId {
        self.raw_scores(x, scratch);
        let mut best = 0;
        for k in 1..scratch.len() {
            if scratch[k] > scratch[best] {
                best = k;
            }
        }
        self.classes[best]
    }

    /// Predicts a label per encoded vector.
    pub fn predict(&self, vectors: &FeatureMatrix) -> Result<Vec<ClassId>> {
        if vectors.n_rows() == 0 {
            return Ok(Vec::new());
        }
        self.check_shape(vectors.n_cols())?;
        let mut scratch = vec![0.0; self.classes.len()];
        Ok(vectors.rows().map(|row| self.predict_row(row, &mut scratch)).collect())
    }

    pub fn predict_one(&self, x: &[i8]) -> Result<ClassId> {
        self.check_shape(x.len())?;
        let mut scratch = vec![0.0; self.classes.len()];
        Ok(self.predict_row(x, &mut scratch))
    }

    /// Encodes `flows` under the model's subset and predicts them.
    pub fn predict_flows(&self, flows: &[FlowRecord]) -> Result<Vec<ClassId>> {
        let x = encode_flows(flows, &self.subset, ENCODED_PACKETS)?;
        self.predict(&x)
    }

    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.rounds.iter().flatten()
    }

    /// Approximate in-memory size of the tree structures.
    pub fn heap_bytes(&self) -> usize {
        self.trees().map(|t| t.nodes.capacity() * std::mem::size_of::<Node>()).sum::<usize>()
            + self.base_scores.capacity() * 8
    }

    fn validate(&self) -> Result<()> {
        let expected = self.subset.vector_len(ENCODED_PACKETS);
        if self.n_features != expected {
            return Err(AcdcError::Shape { expected, actual: self.n_features });
        }
        if self.base_scores.len() != self.classes.len() || self.rounds.iter().any(|r| r.len() != self.classes.len()) {
            return Err(AcdcError::Format("model has inconsistent class count".into()));
        }
        for tree in self.trees() {
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Node::Split { feature, left, right, .. } = *node {
                    let n = tree.nodes.len() as u32;
                    if feature as usize >= self.n_features
                        || left >= n
                        || right >= n
                        || left as usize <= i
                        || right as usize <= i
                    {
                        return Err(AcdcError::Format(format!("invalid split node {i}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path.as_ref())?;
        let envelope = ModelFile { format_version: MODEL_FORMAT_VERSION, model: self.clone() };
        serde_json::to_writer(BufWriter::new(file), &envelope)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        let envelope: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        if envelope.format_version != MODEL_FORMAT_VERSION {
            return Err(AcdcError::Format(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                envelope.format_version
            )));
        }
        envelope.model.validate()?;
        Ok(envelope.model)
    }
}

/// Trains a boosted ensemble on encoded vectors.
///
/// `x` must hold one row per label with `3 × subset_bits(subset)` columns.
pub fn train_ensemble(
    x: &FeatureMatrix,
    labels: &[ClassId],
    subset: &FeatureSubset,
    params: &EnsembleParams,
    seed: u64,
) -> Result<EnsembleModel> {
    params.validate()?;
    let expected = subset.vector_len(ENCODED_PACKETS);
    if x.n_cols() != expected {
        return Err(AcdcError::Shape { expected, actual: x.n_cols() });
    }
    if x.n_rows() != labels.len() {
        return Err(AcdcError::Argument(format!("{} rows but {} labels", x.n_rows(), labels.len())));
    }
    let mut classes: Vec<ClassId> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(AcdcError::Training(format!("need at least 2 classes, training data has {}", classes.len())));
    }
    let n = x.n_rows();
    let k = classes.len();
    let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("label in classes")).collect();

    let mut counts = vec![0usize; k];
    for &c in &y {
        counts[c] += 1;
    }
    let base_scores: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();

    let columns = Columns::build(x);
    let mut scores: Vec<f64> = (0..n).flat_map(|_| base_scores.iter().copied()).collect();
    let mut probs = vec![0.0; n * k];
    let mut rounds = Vec::with_capacity(params.n_rounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..params.n_rounds {
        softmax_rows(&scores, &mut probs, k);
        let rows: Vec<u32> = if params.subsample < 1.0 {
            let m = ((n as f64 * params.subsample).ceil() as usize).clamp(1, n);
            let mut idx: Vec<u32> = sample(&mut rng, n, m).into_iter().map(|i| i as u32).collect();
            idx.sort_unstable();
            idx
        } else {
            (0..n as u32).collect()
        };
        let trees: Vec<Tree> = (0..k)
            .into_par_iter()
            .map(|class| {
                let mut grad = vec![0.0; n];
                let mut hess = vec![0.0; n];
                for i in 0..n {
                    let p = probs[i * k + class];
                    let target = if y[i] == class { 1.0 } else { 0.0 };
                    grad[i] = p - target;
                    hess[i] = (p * (1.0 - p)).max(1e-16);
                }
                TreeBuilder { columns: &columns, grad: &grad, hess: &hess, params }.build(rows.clone())
            })
            .collect();
        for i in 0..n {
            let row = x.row(i);
            for (class, tree) in trees.iter().enumerate() {
                scores[i * k + class] += tree.predict(row);
            }
        }
        rounds.push(trees);
    }

    Ok(EnsembleModel {
        subset: subset.clone(),
        classes,
        params: params.clone(),
        train_seed: seed,
        n_features: expected,
        base_scores,
        rounds,
    })
}

fn softmax_rows(scores: &[f64], probs: &mut [f64], k: usize) {
    for (s, p) in scores.chunks_exact(k).zip(probs.chunks_exact_mut(k)) {
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (pi, &si) in p.iter_mut().zip(s) {
            *pi = (si - max).exp();
            sum += *pi;
        }
        for pi in p.iter_mut() {
            *pi /= sum;
        }
    }
}

/// Column-major copy of the non-constant columns.
struct Columns {
    index: Vec<u32>,
    values: Vec<Vec<i8>>,
}

impl Columns {
    fn build(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let mut index = Vec::new();
        let mut values = Vec::new();
        for j in 0..x.n_cols() {
            let first = x.row(0)[j];
            if (1..n).any(|i| x.row(i)[j] != first) {
                index.push(j as u32);
                values.push((0..n).map(|i| x.row(i)[j]).collect());
            }
        }
        Columns { index, values }
    }
}

struct TreeBuilder<'a> {
    columns: &'a Columns,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a EnsembleParams,
}

struct SplitChoice {
    column: usize,
    threshold: i8,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn build(&self, rows: Vec<u32>) -> Tree {
        let mut nodes = Vec::new();
        self.grow(rows, 0, &mut nodes);
        Tree { nodes }
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.params.learning_rate * g / (h + self.params.lambda)
    }

    fn grow(&self, rows: Vec<u32>, depth: usize, nodes: &mut Vec<Node>) -> u32 {
        let at = nodes.len() as u32;
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r as usize], h + self.hess[r as usize]));
        nodes.push(Node::Leaf { value: self.leaf_value(g, h) });

        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf {
            return at;
        }
        let Some(best) = self.best_split(&rows, g, h) else {
            return at;
        };
        let col = &self.columns.values[best.column];
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| col[r as usize] <= best.threshold);
        drop(rows);
        let l = self.grow(left, depth + 1, nodes);
        let r = self.grow(right, depth + 1, nodes);
        nodes[at as usize] =
            Node::Split { feature: self.columns.index[best.column], threshold: best.threshold, left: l, right: r };
        at
    }

    fn best_split(&self, rows: &[u32], g: f64, h: f64) -> Option<SplitChoice> {
        let lambda = self.params.lambda;
        let parent = g * g / (h + lambda);
        let min_leaf = self.params.min_samples_leaf;
        let min_hess = self.params.min_child_weight;
        let mut best: Option<SplitChoice> = None;
        for (c, col) in self.columns.values.iter().enumerate() {
            let mut bg = [0.0f64; 3];
            let mut bh = [0.0f64; 3];
            let mut bn = [0usize; 3];
            for &r in rows {
                let b = (col[r as usize] + 1) as usize;
                bg[b] += self.grad[r as usize];
                bh[b] += self.hess[r as usize];
                bn[b] += 1;
            }
            for (threshold, split) in [(-1i8, 1usize), (0i8, 2usize)] {
                let gl: f64 = bg[..split].iter().sum();
                let hl: f64 = bh[..split].iter().sum();
                let nl: usize = bn[..split].iter().sum();
                let (gr, hr, nr) = (g - gl, h - hl, rows.len() - nl);
                if nl < min_leaf || nr < min_leaf || hl < min_hess || hr < min_hess {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice { column: c, threshold, gain });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::FeatureSubset;
    use crate::models::weighted_f1;

    fn separable(n: usize) -> (FeatureMatrix, Vec<ClassId>, FeatureSubset) {
        // ipv4.dfbit over 3 packets; class equals the bit of packet 0.
        let subset = FeatureSubset::parse("ipv4-dfbit").unwrap();
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as i8;
            data.extend_from_slice(&[c, (i % 3 == 0) as i8, -1]);
            y.push(c as ClassId + 10);
        }
        (FeatureMatrix::new(3, data).unwrap(), y, subset)
    }

    #[test]
    fn fits_a_separable_problem() {
        let (x, y, s) = separable(40);
        let model = train_ensemble(&x, &y, &s, &EnsembleParams::default(), 1).unwrap();
        let pred = model.predict(&x).unwrap();
        assert_eq!(weighted_f1(&y, &pred).unwrap(), 1.0);
        assert_eq!(model.classes, vec![10, 11]);
    }

    #[test]
    fn single_class_is_a_training_error() {
        let (x, _, s) = separable(4);
        let err = train_ensemble(&x, &[1, 1, 1, 1], &s, &EnsembleParams::default(), 0).unwrap_err();
        assert!(matches!(err, AcdcError::Training(_)));
    }

    #[test]
    fn shape_mismatch() {
        let (x, y, _) = separable(4);
        let s = FeatureSubset::parse("ipv4-ttl").unwrap();
        assert!(matches!(
            train_ensemble(&x, &y, &s, &EnsembleParams::default(), 0),
            Err(AcdcError::Shape { expected: 24, actual: 3 })
        ));
        let (x, y, s) = separable(8);
        let model = train_ensemble(&x, &y, &s, &EnsembleParams::default(), 0).unwrap();
        assert!(model.predict_one(&[0, 1]).is_err());
    }

    #[test]
    fn empty_and_repeated_inputs() {
        let (x, y, s) = separable(8);
        let model = train_ensemble(&x, &y, &s, &EnsembleParams::default(), 0).unwrap();
        assert!(model.predict(&FeatureMatrix::empty(3)).unwrap().is_empty());
        let rep = FeatureMatrix::new(3, [1i8, 0, -1].repeat(3)).unwrap();
        let out = model.predict(&rep).unwrap();
        assert!(out.iter().all(|&c| c == out[0]));
    }

    #[test]
    fn split_indices_within_vector() {
        let (x, y, s) = separable(30);
        let model = train_ensemble(&x, &y, &s, &EnsembleParams::default(), 0).unwrap();
        assert!(model.trees().flat_map(|t| t.split_features()).all(|f| (f as usize) < 3));
        model.validate().unwrap();
    }

    #[test]
    fn subsampling_is_seeded() {
        let (x, y, s) = separable(30);
        let params = EnsembleParams { subsample: 0.5, n_rounds: 5, ..Default::default() };
        let a = train_ensemble(&x, &y, &s, &params, 3).unwrap();
        let b = train_ensemble(&x, &y, &s, &params, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip_reproduces_predictions() {
        let (x, y, s) = separable(30);
        let model = train_ensemble(&x, &y, &s, &EnsembleParams::default(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = EnsembleModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&x).unwrap(), model.predict(&x).unwrap());
    }
}
