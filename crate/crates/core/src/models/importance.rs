use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{weighted_f1, EnsembleModel};
use crate::encode::{FeatureMatrix, FieldId, ENCODED_PACKETS};
use crate::error::{AcdcError, Result};
use crate::traffic::ClassId;

/// Permutation importance per field: mean weighted-F1 drop when the field's
/// bit columns are shuffled across samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_f1: f64,
    pub importances: BTreeMap<FieldId, f64>,
    pub n_repeats: usize,
    pub seed: u64,
}

/// Computes field-granular permutation importance.
///
/// All bit columns of a field, across every encoded packet, move together
/// under one row permutation. `fields = None` evaluates every field of the
/// model's subset. Each (field, repeat) pair draws its permutation from its
/// own seeded stream, so the report does not depend on evaluation order.
pub fn permutation_importance(
    model: &EnsembleModel,
    x: &FeatureMatrix,
    labels: &[ClassId],
    fields: Option<&[FieldId]>,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if x.n_rows() == 0 {
        return Err(AcdcError::Argument("permutation importance needs a non-empty eval set".into()));
    }
    if n_repeats == 0 {
        return Err(AcdcError::Argument("n_repeats must be at least 1".into()));
    }
    if labels.len() != x.n_rows() {
        return Err(AcdcError::Argument(format!("{} rows but {} labels", x.n_rows(), labels.len())));
    }
    let fields: Vec<FieldId> = fields.map(<[FieldId]>::to_vec).unwrap_or_else(|| model.subset.ids().to_vec());
    let columns: Vec<(FieldId, Vec<std::ops::Range<usize>>)> =
        fields.iter().map(|&f| Ok((f, model.subset.field_columns(f, ENCODED_PACKETS)?))).collect::<Result<_>>()?;

    let baseline_f1 = weighted_f1(labels, &model.predict(x)?)?;
    let n = x.n_rows();
    let importances = columns
        .par_iter()
        .map(|(field, ranges)| {
            let mut total = 0.0;
            let mut shuffled = x.clone();
            for repeat in 0..n_repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, *field, repeat));
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let cols = x.n_cols();
                let src = x.as_slice();
                let dst = shuffled.as_mut_slice();
                for (i, &from) in perm.iter().enumerate() {
                    for r in ranges {
                        dst[i * cols + r.start..i * cols + r.end]
                            .copy_from_slice(&src[from * cols + r.start..from * cols + r.end]);
                    }
                }
                total += weighted_f1(labels, &model.predict(&shuffled)?)?;
            }
            Ok((*field, baseline_f1 - total / n_repeats as f64))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    Ok(ImportanceReport { baseline_f1, importances, n_repeats, seed })
}

fn stream_seed(seed: u64, field: FieldId, repeat: usize) -> u64 {
    let mut z = seed ^ ((field as u64) << 32) ^ repeat as u64;
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
