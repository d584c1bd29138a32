use crate::config::{Generator, RunConfig};
use crate::error::{HarnessError, Result};
use mlo_engine::LabeledSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensor_ad::derive_seed;

/// Train/val/test splits of one learner's task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSplits {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub test: LabeledSet,
}

/// Per-learner splits plus the shared test bank. The bank is learner 0's
/// validation split with a configurable fraction of labels corrupted, so
/// the meaningfulness mechanism has observable work to do.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub learners: Vec<LearnerSplits>,
    pub bank: LabeledSet,
    /// Which bank entries carry corrupted labels.
    pub bank_corrupted: Vec<bool>,
    pub seed: u64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Rotate the first two coordinates; used to give learners distinct label
/// functions over a shared input space.
fn rotate2(point: &mut [f64], angle: f64) {
    if point.len() < 2 || angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    let (x, y) = (point[0], point[1]);
    point[0] = c * x - s * y;
    point[1] = s * x + c * y;
}

fn gen_points(config: &RunConfig, n: usize, angle: f64, rng: &mut ChaCha8Rng) -> Result<LabeledSet> {
    let classes = config.classes;
    let dim = config.dim;
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // Round-robin keeps class counts balanced within one.
        let class = i % classes;
        let mut p = vec![0.0; dim];
        let label = match config.generator {
            Generator::Blobs => {
                let theta = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
                p[0] = config.separation / 2.0 * theta.cos();
                p[1] = config.separation / 2.0 * theta.sin();
                for v in p.iter_mut() {
                    *v += config.noise * normal(rng);
                }
                class
            }
            Generator::TwoMoons => {
                let t = std::f64::consts::PI * rng.gen::<f64>();
                if class == 0 {
                    p[0] = t.cos();
                    p[1] = t.sin();
                } else {
                    p[0] = 1.0 - t.cos();
                    p[1] = 0.5 - t.sin();
                }
                p[0] += config.noise * normal(rng);
                p[1] += config.noise * normal(rng);
                class
            }
            Generator::XorGrid => {
                p[0] = 2.0 * rng.gen::<f64>() - 1.0;
                p[1] = 2.0 * rng.gen::<f64>() - 1.0;
                let quadrant = usize::from(p[0] > 0.0) ^ usize::from(p[1] > 0.0);
                // Label noise: flip with the configured probability.
                if rng.gen::<f64>() < config.noise {
                    1 - quadrant
                } else {
                    quadrant
                }
            }
        };
        rotate2(&mut p, angle);
        x.push(p);
        labels.push(label);
    }
    Ok(LabeledSet::new(x, labels, classes))
}

/// Deterministic bundle generation. Splits are disjoint by construction
/// (one pool per learner, partitioned in order); corruption touches bank
/// labels only.
pub fn generate_data(config: &RunConfig, seed: u64) -> Result<DatasetBundle> {
    config.validate()?;
    let mut learners = Vec::with_capacity(config.learners);
    for k in 0..config.learners {
        let angle = k as f64 * std::f64::consts::PI / 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "learner-pool", k as u64));
        let total = config.n_train + config.n_val + config.n_test;
        let pool = gen_points(config, total, angle, &mut rng)?;
        let idx: Vec<usize> = (0..total).collect();
        let (a, rest) = idx.split_at(config.n_train);
        let (b, c) = rest.split_at(config.n_val);
        learners.push(LearnerSplits {
            train: pool.select(a),
            val: pool.select(b),
            test: pool.select(c),
        });
    }

    // Bank: learner 0's validation split with corrupted labels.
    let mut bank = learners[0].val.clone();
    let n_corrupt = (config.bank_corruption * bank.len() as f64).floor() as usize;
    let mut corrupted = vec![false; bank.len()];
    if n_corrupt > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bank-corruption", 0));
        let chosen = rand::seq::index::sample(&mut rng, bank.len(), n_corrupt);
        for i in chosen {
            let old = bank.labels[i];
            let shift = 1 + rng.gen_range(0..config.classes - 1);
            bank.labels[i] = (old + shift) % config.classes;
            corrupted[i] = true;
        }
    }

    Ok(DatasetBundle { learners, bank, bank_corrupted: corrupted, seed })
}

impl DatasetBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::config(format!("bad bundle: {e}")))
    }
}
