use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-iteration scalar observations. The wall-time is tracked in memory
/// only: the persisted form must be byte-identical across reruns of the
/// same seeded configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub scalars: BTreeMap<String, f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl MetricsRecord {
    pub fn new(iteration: usize) -> Self {
        MetricsRecord { iteration, scalars: BTreeMap::new(), wall_time_s: 0.0 }
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn all_finite(&self) -> bool {
        self.scalars.values().all(|v| v.is_finite())
    }
}
