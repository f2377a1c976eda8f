//! Classifier families selectable by name at runtime.

use std::collections::BTreeMap;

use super::{train_ensemble, train_flowstats, EnsembleModel, EnsembleParams, FlowStatsModel};
use crate::encode::{encode_flows, FeatureSubset, ENCODED_PACKETS};
use crate::error::{AcdcError, Result};
use crate::traffic::{ClassId, FlowRecord, FlowSet};

/// A trained flow classifier, independent of its feature representation.
pub trait FlowClassifier: Send + Sync {
    fn family(&self) -> &str;
    fn predict_flows(&self, flows: &[FlowRecord]) -> Result<Vec<ClassId>>;
}

/// Trains classifiers of one family from labeled flows.
pub trait ClassifierFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn train(&self, train: &FlowSet, seed: u64) -> Result<Box<dyn FlowClassifier>>;
}

impl FlowClassifier for EnsembleModel {
    fn family(&self) -> &str {
        "ensemble"
    }

    fn predict_flows(&self, flows: &[FlowRecord]) -> Result<Vec<ClassId>> {
        EnsembleModel::predict_flows(self, flows)
    }
}

impl FlowClassifier for FlowStatsModel {
    fn family(&self) -> &str {
        "flowstats"
    }

    fn predict_flows(&self, flows: &[FlowRecord]) -> Result<Vec<ClassId>> {
        Ok(super::predict_flowstats(self, flows))
    }
}

/// Boosted trees over a fixed header-field subset.
pub struct EnsembleFamily {
    pub subset: FeatureSubset,
    pub params: EnsembleParams,
}

impl ClassifierFamily for EnsembleFamily {
    fn name(&self) -> &'static str {
        "ensemble"
    }

    fn describe(&self) -> &'static str {
        "gradient-boosted trees over ternary header-bit vectors"
    }

    fn train(&self, train: &FlowSet, seed: u64) -> Result<Box<dyn FlowClassifier>> {
        let x = encode_flows(&train.flows, &self.subset, ENCODED_PACKETS)?;
        Ok(Box::new(train_ensemble(&x, &train.labels(), &self.subset, &self.params, seed)?))
    }
}

/// Gaussian mixtures over packet sizes and inter-arrival times.
pub struct FlowStatsFamily {
    pub components_per_class: usize,
}

impl ClassifierFamily for FlowStatsFamily {
    fn name(&self) -> &'static str {
        "flowstats"
    }

    fn describe(&self) -> &'static str {
        "per-class diagonal Gaussian mixtures over first-four data-packet sizes and gaps"
    }

    fn train(&self, train: &FlowSet, seed: u64) -> Result<Box<dyn FlowClassifier>> {
        Ok(Box::new(train_flowstats(train, self.components_per_class, seed)?))
    }
}

#[derive(Default)]
pub struct FamilyRegistry {
    families: BTreeMap<&'static str, Box<dyn ClassifierFamily>>,
}

impl FamilyRegistry {
    /// "ensemble" over every preliminary-eligible field and "flowstats" with
    /// three components per class.
    pub fn with_defaults() -> Self {
        let mut reg = Self::default();
        reg.register(Box::new(EnsembleFamily {
            subset: FeatureSubset::all_eligible(),
            params: EnsembleParams::default(),
        }));
        reg.register(Box::new(FlowStatsFamily { components_per_class: 3 }));
        reg
    }

    /// Replaces any family registered under the same name.
    pub fn register(&mut self, family: Box<dyn ClassifierFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ClassifierFamily> {
        self.families.get(name).map(|f| f.as_ref()).ok_or_else(|| {
            AcdcError::Config(format!("unknown classifier family {name:?} (known: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::weighted_f1;
    use crate::traffic::{generate_synthetic, GeneratorConfig};

    #[test]
    fn defaults_train_by_name() {
        let reg = FamilyRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["ensemble", "flowstats"]);
        let data = generate_synthetic(&GeneratorConfig::preset(2, 40), 3).unwrap();
        for name in reg.names() {
            let model = reg.get(name).unwrap().train(&data, 1).unwrap();
            assert_eq!(model.family(), name);
            let pred = model.predict_flows(&data.flows).unwrap();
            assert!(weighted_f1(&data.labels(), &pred).unwrap() > 0.5);
        }
        assert!(reg.get("cnn").err().unwrap().is_config());
    }
}
