//! Joint configuration space of a controller set and its canonical order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::controllers::{config_space, Configuration, ControllerSpec, UtilityValue};

use super::GovError;

/// One configuration per controller, in controller-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationVector {
    /// Position of each component in its controller's configuration space.
    pub indices: Vec<usize>,
    pub entries: Vec<(String, Configuration)>,
}

impl ConfigurationVector {
    pub fn get(&self, id: &str) -> Option<&Configuration> {
        self.entries.iter().find(|(c, _)| c == id).map(|(_, cfg)| cfg)
    }

    /// Canonical order: lexicographic in configuration-space indices.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.indices.cmp(&other.indices)
    }

    /// Compact JSON object `{id: configuration}`.
    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> =
            self.entries.iter().map(|(id, cfg)| (id.clone(), serde_json::to_value(cfg).expect("plain JSON"))).collect();
        serde_json::Value::Object(map).to_string()
    }
}

/// The controllers sorted by id together with their configuration spaces.
#[derive(Debug, Clone)]
pub struct JointSpace {
    controllers: Vec<ControllerSpec>,
    spaces: Vec<Vec<Configuration>>,
}

impl JointSpace {
    pub fn new(controllers: &[ControllerSpec]) -> Result<Self, GovError> {
        if controllers.is_empty() {
            return Err(GovError::Invalid("no controllers to govern".into()));
        }
        let mut sorted = controllers.to_vec();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in sorted.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(GovError::Invalid(format!("duplicate controller id {}", pair[0].id)));
            }
        }
        for c in &sorted {
            c.validate()?;
            if let Some(owner) = &c.shares {
                let target = sorted.iter().find(|o| &o.id == owner).ok_or_else(|| {
                    GovError::Invalid(format!("controller {} shares unknown controller {owner}", c.id))
                })?;
                if target.shares.is_some() {
                    return Err(GovError::Invalid(format!(
                        "controller {} shares a controller that itself shares",
                        c.id
                    )));
                }
            }
        }
        let spaces = sorted.iter().map(config_space).collect();
        Ok(JointSpace { controllers: sorted, spaces })
    }

    pub fn controllers(&self) -> &[ControllerSpec] {
        &self.controllers
    }

    pub fn space(&self, position: usize) -> &[Configuration] {
        &self.spaces[position]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.spaces.iter().map(Vec::len).collect()
    }

    /// Product of per-controller space sizes (saturating).
    pub fn size(&self) -> u128 {
        self.spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }

    pub fn vector(&self, indices: &[usize]) -> ConfigurationVector {
        ConfigurationVector {
            indices: indices.to_vec(),
            entries: self
                .controllers
                .iter()
                .zip(&self.spaces)
                .zip(indices)
                .map(|((c, space), &i)| (c.id.clone(), space[i].clone()))
                .collect(),
        }
    }

    /// The configuration a controller is evaluated at: its own, or its owner's when it shares.
    pub fn effective<'v>(&self, vector: &'v ConfigurationVector, id: &str) -> Option<&'v Configuration> {
        let spec = self.controllers.iter().find(|c| c.id == id)?;
        vector.get(spec.shares.as_deref().unwrap_or(id))
    }

    /// Every index vector in canonical order (last controller varies fastest).
    pub fn enumerate(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let dims = self.dims();
        let total = self.size();
        let mut current = vec![0usize; dims.len()];
        let mut produced: u128 = 0;
        std::iter::from_fn(move || {
            if produced == total {
                return None;
            }
            let out = current.clone();
            produced += 1;
            for pos in (0..dims.len()).rev() {
                current[pos] += 1;
                if current[pos] < dims[pos] {
                    break;
                }
                current[pos] = 0;
            }
            Some(out)
        })
    }
}

/// Per-controller utilities plus their aggregate for one configuration vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceEvaluation {
    pub configuration: ConfigurationVector,
    pub utilities: Vec<UtilityValue>,
    pub global_utility: f64,
    pub tick: u64,
}

impl GovernanceEvaluation {
    pub fn utility_of(&self, id: &str) -> Option<f64> {
        self.utilities.iter().find(|u| u.controller == id).map(|u| u.value)
    }
}
