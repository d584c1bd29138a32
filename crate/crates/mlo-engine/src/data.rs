use crate::error::{EngineError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use tensor_ad::{derive_seed, Bindings, Tensor};

/// Features, one-hot targets, and integer labels for one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledSet {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledSet {
    pub fn new(x: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Self {
        debug_assert_eq!(x.len(), labels.len());
        LabeledSet { x, labels, classes }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }

    pub fn features(&self) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(self.len() * d);
        for row in &self.x {
            data.extend_from_slice(row);
        }
        Tensor::new(vec![self.len(), d], data).expect("consistent rows")
    }

    pub fn one_hot(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.len(), self.classes]);
        for (i, &l) in self.labels.iter().enumerate() {
            t.data_mut()[i * self.classes + l] = 1.0;
        }
        t
    }

    pub fn select(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

/// Deterministic minibatch index selection for (seed, set, iteration).
/// Independent of call order; a batch of 0 (or >= n) means the full set
/// in natural order.
pub fn sample_indices(seed: u64, set: &str, iteration: usize, n: usize, batch: usize) -> Vec<usize> {
    if batch == 0 || batch >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, set, iteration as u64));
    let mut idx = rand::seq::index::sample(&mut rng, n, batch).into_vec();
    idx.sort_unstable();
    idx
}

/// Declares that a graph's `x_leaf` / `y_leaf` are fed from a named set.
#[derive(Debug, Clone)]
pub struct DataBinding {
    pub set: String,
    pub x_leaf: String,
    pub y_leaf: String,
}

impl DataBinding {
    pub fn new(set: &str, x_leaf: &str, y_leaf: &str) -> Self {
        DataBinding {
            set: set.to_string(),
            x_leaf: x_leaf.to_string(),
            y_leaf: y_leaf.to_string(),
        }
    }
}

/// Named datasets plus per-set batch sizes. One minibatch is drawn per set
/// per iteration and shared by every term referencing that set.
#[derive(Debug, Clone)]
pub struct DataSources {
    sets: BTreeMap<String, LabeledSet>,
    batches: BTreeMap<String, usize>,
}

impl DataSources {
    pub fn new() -> Self {
        DataSources { sets: BTreeMap::new(), batches: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, set: LabeledSet, batch: usize) {
        self.sets.insert(name.to_string(), set);
        self.batches.insert(name.to_string(), batch);
    }

    pub fn get(&self, name: &str) -> Option<&LabeledSet> {
        self.sets.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sets.contains_key(name)
    }

    /// Bind every data leaf for one iteration. `bindings` may span several
    /// specs; duplicate (set, leaf) pairs are fine because the draw per set
    /// is unique for the iteration.
    pub fn bind_iteration(
        &self,
        seed: u64,
        iteration: usize,
        bindings: &[DataBinding],
        out: &mut Bindings,
    ) -> Result<()> {
        let mut drawn: BTreeMap<&str, LabeledSet> = BTreeMap::new();
        for b in bindings {
            if !drawn.contains_key(b.set.as_str()) {
                let set = self
                    .sets
                    .get(&b.set)
                    .ok_or_else(|| EngineError::UnknownDataset(b.set.clone()))?;
                let batch = *self.batches.get(&b.set).unwrap_or(&0);
                let idx = sample_indices(seed, &b.set, iteration, set.len(), batch);
                drawn.insert(b.set.as_str(), set.select(&idx));
            }
            let mini = &drawn[b.set.as_str()];
            out.insert(b.x_leaf.clone(), mini.features());
            out.insert(b.y_leaf.clone(), mini.one_hot());
        }
        Ok(())
    }
}

impl Default for DataSources {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_order_free() {
        let a = sample_indices(7, "train", 3, 100, 10);
        let b = sample_indices(7, "train", 3, 100, 10);
        assert_eq!(a, b);
        let c = sample_indices(7, "train", 4, 100, 10);
        assert_ne!(a, c);
        let d = sample_indices(7, "bank", 3, 100, 10);
        assert_ne!(a, d);
    }

    #[test]
    fn full_batch_when_large() {
        assert_eq!(sample_indices(1, "s", 0, 4, 10), vec![0, 1, 2, 3]);
        assert_eq!(sample_indices(1, "s", 0, 4, 0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn shared_set_shares_the_batch() {
        let mut src = DataSources::new();
        let set = LabeledSet::new(
            (0..20).map(|i| vec![i as f64, -(i as f64)]).collect(),
            (0..20).map(|i| i % 2).collect(),
            2,
        );
        src.insert("train", set, 5);
        let bindings = vec![
            DataBinding::new("train", "a.x", "a.y"),
            DataBinding::new("train", "b.x", "b.y"),
        ];
        let mut out = Bindings::new();
        src.bind_iteration(9, 2, &bindings, &mut out).unwrap();
        assert_eq!(out["a.x"], out["b.x"]);
        assert_eq!(out["a.y"], out["b.y"]);
        assert_eq!(out["a.x"].shape()[0], 5);
    }
}
