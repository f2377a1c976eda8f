use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binomial, k_best_subsets, rank_features};
use crate::encode::{encode_flows, subset_bits, FeatureSubset, FieldId, FieldRegistry, ENCODED_PACKETS};
use crate::error::{AcdcError, Result};
use crate::models::{train_ensemble, EnsembleModel, EnsembleParams};
use crate::traffic::FlowSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub sizes: Vec<usize>,
    pub num_combos: usize,
}

impl Default for PoolConfig {
    /// Sizes 1 through 9 with ten combinations each.
    fn default() -> Self {
        PoolConfig { sizes: (1..=9).collect(), num_combos: 10 }
    }
}

impl PoolConfig {
    pub fn pool_size(&self) -> usize {
        self.sizes.len() * self.num_combos
    }

    /// Checks the config against the number of ranked features.
    pub fn validate(&self, n_ranked: usize) -> Result<()> {
        if self.sizes.is_empty() || self.num_combos == 0 {
            return Err(AcdcError::Config("pool needs at least one size and num_combos >= 1".into()));
        }
        let distinct: HashSet<_> = self.sizes.iter().collect();
        if distinct.len() != self.sizes.len() {
            return Err(AcdcError::Config(format!("duplicate pool sizes in {:?}", self.sizes)));
        }
        for &n in &self.sizes {
            if n == 0 || n > n_ranked {
                return Err(AcdcError::Config(format!("pool size {n} outside 1..={n_ranked}")));
            }
            if binomial(n_ranked, n) < self.num_combos as u128 {
                return Err(AcdcError::Config(format!(
                    "only {} subsets of size {n} exist, fewer than num_combos {}",
                    binomial(n_ranked, n),
                    self.num_combos
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    /// `s{size}c{rank}`, e.g. `s4c0` for the best 4-field subset.
    pub id: String,
    pub size: usize,
    pub rank: usize,
    pub subset: FeatureSubset,
    pub bits: u32,
    pub heuristic_score: f64,
    pub model: EnsembleModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierPool {
    pub config: PoolConfig,
    pub members: Vec<PoolMember>,
}

/// One line of the pool manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub classifier_id: String,
    pub size: usize,
    pub rank: usize,
    pub subset: String,
    pub bits: u32,
    pub heuristic_score: f64,
    pub model_path: String,
}

fn member_seed(seed: u64, size: usize, rank: usize) -> u64 {
    let mut z = seed.wrapping_add(((size as u64) << 32 | rank as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ranks fields, enumerates the best subsets per size and trains one ensemble
/// per subset. Members are ordered by size, then by rank within the size.
pub fn build_pool(
    train: &FlowSet,
    registry: &FieldRegistry,
    importances: &BTreeMap<FieldId, f64>,
    config: &PoolConfig,
    params: &EnsembleParams,
    seed: u64,
) -> Result<ClassifierPool> {
    let ranked = rank_features(importances, registry)?;
    config.validate(ranked.len())?;

    let mut plan = Vec::with_capacity(config.pool_size());
    for &n in &config.sizes {
        for (rank, cand) in k_best_subsets(&ranked, n, config.num_combos)?.into_iter().enumerate() {
            plan.push((n, rank, FeatureSubset::new(cand.fields)?, cand.score));
        }
    }
    let labels = train.labels();
    let members = plan
        .into_par_iter()
        .map(|(size, rank, subset, heuristic_score)| {
            let id = format!("s{size}c{rank}");
            let x = encode_flows(&train.flows, &subset, ENCODED_PACKETS)?;
            let model = train_ensemble(&x, &labels, &subset, params, member_seed(seed, size, rank))
                .map_err(|e| AcdcError::Training(format!("member {id} ({subset}): {e}")))?;
            Ok(PoolMember { id, size, rank, bits: subset_bits(&subset), subset, heuristic_score, model })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassifierPool { config: config.clone(), members })
}

impl ClassifierPool {
    pub fn get(&self, id: &str) -> Option<&PoolMember> {
        self.members.iter().find(|m| m.id == id)
    }

    /// Writes `models/<id>.json` under `dir` and the manifest `pool.csv`.
    /// Returns the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("models"))?;
        let manifest = dir.join("pool.csv");
        let mut w = csv::Writer::from_path(&manifest)?;
        for m in &self.members {
            let rel = format!("models/{}.json", m.id);
            m.model.save(dir.join(&rel))?;
            w.serialize(ManifestRow {
                classifier_id: m.id.clone(),
                size: m.size,
                rank: m.rank,
                subset: m.subset.to_string(),
                bits: m.bits,
                heuristic_score: m.heuristic_score,
                model_path: rel,
            })?;
        }
        w.flush()?;
        Ok(manifest)
    }

    /// Loads a pool from its manifest; model paths resolve against the
    /// manifest's directory.
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let base = manifest.parent().unwrap_or(Path::new("."));
        let rows = read_manifest(manifest)?;
        let mut members = Vec::with_capacity(rows.len());
        let mut sizes: Vec<usize> = Vec::new();
        let mut combos: BTreeMap<usize, usize> = BTreeMap::new();
        for row in rows {
            let subset = FeatureSubset::parse(&row.subset)?;
            let model = EnsembleModel::load(base.join(&row.model_path))?;
            if model.subset != subset {
                return Err(AcdcError::Format(format!(
                    "{}: manifest subset {} differs from model subset {}",
                    row.classifier_id, subset, model.subset
                )));
            }
            if !sizes.contains(&row.size) {
                sizes.push(row.size);
            }
            *combos.entry(row.size).or_default() += 1;
            members.push(PoolMember {
                id: row.classifier_id,
                size: row.size,
                rank: row.rank,
                bits: row.bits,
                heuristic_score: row.heuristic_score,
                subset,
                model,
            });
        }
        let num_combos = combos.values().copied().max().unwrap_or(0);
        Ok(ClassifierPool { config: PoolConfig { sizes, num_combos }, members })
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
    let ids: HashSet<_> = rows.iter().map(|r| r.classifier_id.as_str()).collect();
    if ids.len() != rows.len() {
        return Err(AcdcError::Format("pool manifest has duplicate classifier ids".into()));
    }
    Ok(rows)
}
