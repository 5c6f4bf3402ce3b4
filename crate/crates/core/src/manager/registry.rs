use std::collections::{BTreeMap, BTreeSet};

use super::config::OrcaConfig;
use super::ManagerError;
use crate::models::{select_family, ModelFamily, ModelSpec, TrainedModel};
use crate::telemetry::{BehaviorLevel, FeatureSchema};

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub schema: FeatureSchema,
    pub spec: ModelSpec,
    pub model: Option<TrainedModel>,
}

impl RegistryEntry {
    pub fn family(&self) -> ModelFamily {
        self.spec.family()
    }
}

/// One model per (device type, behavior level), independent of how many
/// devices of each type exist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelRegistry {
    pub entries: BTreeMap<(String, BehaviorLevel), RegistryEntry>,
}

impl ModelRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct device types.
    pub fn type_count(&self) -> usize {
        self.entries.keys().map(|(t, _)| t).collect::<BTreeSet<_>>().len()
    }

    /// Largest number of levels registered for any one type.
    pub fn max_levels(&self) -> usize {
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for (t, _) in self.entries.keys() {
            *per.entry(t.as_str()).or_default() += 1;
        }
        per.values().copied().max().unwrap_or(0)
    }

    pub fn get(&self, device_type: &str, level: BehaviorLevel) -> Option<&RegistryEntry> {
        self.entries.get(&(device_type.to_owned(), level))
    }

    pub fn model(&self, device_type: &str, level: BehaviorLevel) -> Result<&TrainedModel, ManagerError> {
        self.get(device_type, level)
            .and_then(|e| e.model.as_ref())
            .ok_or_else(|| ManagerError::UntrainedModel { device_type: device_type.to_owned(), level })
    }

    pub fn is_trained(&self) -> bool {
        self.entries.values().all(|e| e.model.is_some())
    }

    pub fn families(&self) -> BTreeSet<ModelFamily> {
        self.entries.values().map(RegistryEntry::family).collect()
    }
}

/// Resolves each target's schema and family. Auto targets go through
/// [`select_family`].
pub fn register_models(config: &OrcaConfig) -> Result<ModelRegistry, ManagerError> {
    let mut entries = BTreeMap::new();
    for t in config.effective_targets() {
        let dtype = config
            .fleet
            .device_types
            .iter()
            .find(|d| d.name == t.device_type)
            .ok_or_else(|| ManagerError::Config(format!("target names unknown device type `{}`", t.device_type)))?;
        let emit = dtype.emits.iter().find(|e| e.level == t.level).ok_or_else(|| {
            ManagerError::Config(format!("device type `{}` emits nothing at level {}", t.device_type, t.level))
        })?;
        let schema = emit.schema()?;
        let family = match t.family()? {
            Some(f) => f,
            None => select_family(schema.time_series(), schema.dim(), config.thresholds.dim_threshold),
        };
        let spec = match &t.spec {
            Some(s) if s.family() != family => {
                return Err(ManagerError::Config(format!(
                    "target ({}, {}) names family {family} but its spec is {}",
                    t.device_type,
                    t.level,
                    s.family()
                )))
            }
            Some(s) => s.clone(),
            None => ModelSpec::default_for(family),
        };
        if family.time_series() != schema.time_series() {
            return Err(ManagerError::Config(format!(
                "target ({}, {}): family {family} does not fit its data regime",
                t.device_type, t.level
            )));
        }
        let key = (t.device_type.clone(), t.level);
        if entries.contains_key(&key) {
            return Err(ManagerError::DuplicateEntry { device_type: key.0, level: key.1 });
        }
        entries.insert(key, RegistryEntry { schema, spec, model: None });
    }
    Ok(ModelRegistry { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{BaselineConfig, DeviceTypeConfig, EmitConfig, FleetConfig, Intensity};
    use crate::manager::TargetConfig;

    fn dtype(name: &str, count: usize, levels: &[BehaviorLevel]) -> DeviceTypeConfig {
        DeviceTypeConfig {
            name: name.into(),
            count,
            priority: 3,
            compute_intensity: Intensity::Medium,
            data_intensity: Intensity::Medium,
            latency_sensitivity: Intensity::Medium,
            subsystem: "s".into(),
            base_demand: 1.0,
            emits: levels
                .iter()
                .map(|l| EmitConfig {
                    level: *l,
                    dim: 4,
                    names: None,
                    seq_len: None,
                    baseline: BaselineConfig::default(),
                })
                .collect(),
        }
    }

    #[test]
    fn size_is_type_level_pairs() {
        let cfg = |n: usize| {
            OrcaConfig::new(
                FleetConfig::new(vec![
                    dtype("a", n, &BehaviorLevel::ALL),
                    dtype("b", n, &BehaviorLevel::ALL),
                    dtype("c", n, &BehaviorLevel::ALL),
                ]),
                0,
            )
        };
        for n in [4, 40, 400] {
            let r = register_models(&cfg(n)).unwrap();
            assert_eq!((r.len(), r.type_count(), r.max_levels()), (12, 3, 4));
        }
        let mut c = cfg(4);
        c.fleet.device_types.push(dtype("d", 7, &[BehaviorLevel::B1, BehaviorLevel::B3]));
        assert_eq!(register_models(&c).unwrap().len(), 14);
    }

    #[test]
    fn duplicates_and_unknown_families_rejected() {
        let mut c = OrcaConfig::new(FleetConfig::new(vec![dtype("camera", 2, &[BehaviorLevel::B2])]), 0);
        let t =
            TargetConfig { device_type: "camera".into(), level: BehaviorLevel::B2, family: "auto".into(), spec: None };
        c.targets = vec![t.clone(), t.clone()];
        assert!(matches!(register_models(&c), Err(ManagerError::DuplicateEntry { .. })));
        c.targets = vec![TargetConfig { family: "SVDD".into(), ..t }];
        assert!(matches!(register_models(&c), Err(ManagerError::UnknownFamily(_))));
    }

    #[test]
    fn auto_selects_by_dimension() {
        let c = OrcaConfig::new(FleetConfig::new(vec![dtype("a", 1, &[BehaviorLevel::B1])]), 0);
        let r = register_models(&c).unwrap();
        assert_eq!(r.get("a", BehaviorLevel::B1).unwrap().family(), ModelFamily::Ocsvm);
        assert!(matches!(r.model("a", BehaviorLevel::B1), Err(ManagerError::UntrainedModel { .. })));
    }
}
