//! Profilers selectable by name.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{measure_profile, model_profile, CostModel, MeasureOptions, ProfileEntry, ProfileMode};
use crate::error::{AcdcError, Result};
use crate::explore::{ClassifierPool, PoolMember};
use crate::models::weighted_f1;
use crate::traffic::FlowSet;

pub struct ProfileRequest<'a> {
    pub member: &'a PoolMember,
    pub test: &'a FlowSet,
    pub batch_sizes: &'a [u64],
    /// Held-out F1 of the member.
    pub f1: f64,
}

pub trait Profiler: Send + Sync {
    fn mode(&self) -> ProfileMode;
    fn profile(&self, req: &ProfileRequest<'_>) -> Result<Vec<ProfileEntry>>;
}

pub struct MeasuredProfiler {
    pub options: MeasureOptions,
}

impl Profiler for MeasuredProfiler {
    fn mode(&self) -> ProfileMode {
        ProfileMode::Measured
    }

    fn profile(&self, req: &ProfileRequest<'_>) -> Result<Vec<ProfileEntry>> {
        measure_profile(&req.member.id, &req.member.model, &req.test.flows, req.f1, req.batch_sizes, &self.options)
    }
}

pub struct ModeledProfiler {
    pub cost: CostModel,
}

impl Profiler for ModeledProfiler {
    fn mode(&self) -> ProfileMode {
        ProfileMode::Modeled
    }

    fn profile(&self, req: &ProfileRequest<'_>) -> Result<Vec<ProfileEntry>> {
        model_profile(&req.member.id, &req.member.subset, req.f1, req.batch_sizes, &self.cost)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProfilerOptions {
    pub measure: MeasureOptions,
    /// Required by the modeled profiler.
    pub cost_model: Option<CostModel>,
}

type Factory = Box<dyn Fn(&ProfilerOptions) -> Result<Box<dyn Profiler>> + Send + Sync>;

pub struct ProfilerRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl Default for ProfilerRegistry {
    fn default() -> Self {
        let mut reg = ProfilerRegistry { factories: BTreeMap::new() };
        reg.register("measured", |opts| Ok(Box::new(MeasuredProfiler { options: opts.measure.clone() })));
        reg.register("modeled", |opts| {
            let cost = opts
                .cost_model
                .clone()
                .ok_or_else(|| AcdcError::Config("the modeled profiler needs a calibrated cost model".into()))?;
            Ok(Box::new(ModeledProfiler { cost }))
        });
        reg
    }
}

impl ProfilerRegistry {
    pub fn register<F>(&mut self, name: &'static str, factory: F)
    where
        F: Fn(&ProfilerOptions) -> Result<Box<dyn Profiler>> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
    }

    pub fn create(&self, name: &str, opts: &ProfilerOptions) -> Result<Box<dyn Profiler>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            AcdcError::Config(format!("unknown profiler {name:?} (known: {})", self.names().join(", ")))
        })?;
        factory(opts)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }
}

/// Profiles every pool member at every batch size. Held-out F1 is evaluated
/// in parallel up front; the profiler then runs members one at a time.
pub fn profile_pool(
    profiler: &dyn Profiler,
    pool: &ClassifierPool,
    test: &FlowSet,
    batch_sizes: &[u64],
) -> Result<Vec<ProfileEntry>> {
    let truth = test.labels();
    let f1s = pool
        .members
        .par_iter()
        .map(|m| weighted_f1(&truth, &m.model.predict_flows(&test.flows)?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(pool.members.len() * batch_sizes.len());
    for (member, f1) in pool.members.iter().zip(f1s) {
        out.extend(profiler.profile(&ProfileRequest { member, test, batch_sizes, f1 })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::field_registry;
    use crate::explore::{build_pool, PoolConfig};
    use crate::models::EnsembleParams;
    use crate::traffic::{generate_synthetic, GeneratorConfig};

    #[test]
    fn registry_by_name() {
        let reg = ProfilerRegistry::default();
        assert_eq!(reg.names(), vec!["measured", "modeled"]);
        let opts = ProfilerOptions::default();
        assert_eq!(reg.create("measured", &opts).unwrap().mode(), ProfileMode::Measured);
        assert!(reg.create("modeled", &opts).err().unwrap().is_config());
        assert!(reg.create("cgroup", &opts).err().unwrap().is_config());
    }

    #[test]
    fn modeled_pool_profile_is_reproducible() {
        let data = generate_synthetic(&GeneratorConfig::preset(2, 30), 2).unwrap();
        let reg = field_registry();
        let fi = [("ipv4-ttl", 0.1), ("tcp-wsize", 0.05), ("ipv4-dfbit", 0.02)]
            .iter()
            .map(|(n, v)| (reg.by_name(n).unwrap().id, *v))
            .collect();
        let params = EnsembleParams { n_rounds: 5, ..EnsembleParams::default() };
        let pool = build_pool(&data, reg, &fi, &PoolConfig { sizes: vec![1, 2], num_combos: 2 }, &params, 0).unwrap();
        let opts = ProfilerOptions {
            cost_model: Some(CostModel {
                ttd_intercept: 0.1,
                ttd_per_bitflow: 1e-5,
                mem_intercept: 1e6,
                mem_per_bitflow: 100.0,
                pearson_ttd: 1.0,
                pearson_mem: 1.0,
            }),
            ..ProfilerOptions::default()
        };
        let profiler = ProfilerRegistry::default().create("modeled", &opts).unwrap();
        let a = profile_pool(profiler.as_ref(), &pool, &data, &[10, 50]).unwrap();
        let b = profile_pool(profiler.as_ref(), &pool, &data, &[10, 50]).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
    }
}
