use lpt::{LptConfig, LptSetup, LptShape, SET_BANK, SET_TRAIN, SET_VAL};
use mlo_engine::{DataSources, LabeledSet};
use tensor_ad::{seeded_init, InitScheme};

/// Small two-class blob set with deterministic contents.
pub fn blob_set(n: usize, seed: u64, separation: f64, noise: f64) -> LabeledSet {
    let jitter = seeded_init(&[n, 2], InitScheme::Normal { mean: 0.0, std: noise }, seed);
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let cx = if class == 0 { -separation / 2.0 } else { separation / 2.0 };
        x.push(vec![cx + jitter.at2(i, 0), jitter.at2(i, 1)]);
        labels.push(class);
    }
    LabeledSet::new(x, labels, 2)
}

pub fn small_sources(seed: u64, batch_train: usize, batch_bank: usize, batch_val: usize) -> DataSources {
    let mut s = DataSources::new();
    s.insert(SET_TRAIN, blob_set(24, seed, 3.0, 0.6), batch_train);
    s.insert(SET_VAL, blob_set(24, seed + 1, 3.0, 0.6), batch_val);
    s.insert(SET_BANK, blob_set(24, seed + 2, 3.0, 0.6), batch_bank);
    s
}

/// A compact full-mode setup small enough for oracle sweeps.
pub fn small_setup(seed: u64) -> (LptSetup, DataSources) {
    let shape = LptShape {
        dim: 2,
        classes: 2,
        mixed_layers: 1,
        encoder_hidden: 3,
        bank_size: 24,
    };
    let config = LptConfig {
        batch_train: 8,
        batch_bank: 12,
        batch_val: 12,
        seed,
        ..LptConfig::default()
    };
    let sources = small_sources(seed, config.batch_train, config.batch_bank, config.batch_val);
    let setup = LptSetup::new(shape, config, seed).unwrap();
    (setup, sources)
}
