use il::{train_set, val_set, IlConfig, IlSetup, IlShape};
use mlo_engine::{DataSources, LabeledSet};
use tensor_ad::{seeded_init, InitScheme};
use toy_nas::OpKind;

/// Two-class blobs whose decision boundary is rotated per learner, so the
/// learners' tasks are related but distinct.
pub fn rotated_blobs(n: usize, seed: u64, angle: f64, noise: f64) -> LabeledSet {
    let jitter = seeded_init(&[n, 2], InitScheme::Normal { mean: 0.0, std: noise }, seed);
    let (s, c) = angle.sin_cos();
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let cx = if class == 0 { -1.5 } else { 1.5 };
        let (px, py) = (cx + jitter.at2(i, 0), jitter.at2(i, 1));
        x.push(vec![c * px - s * py, s * px + c * py]);
        labels.push(class);
    }
    LabeledSet::new(x, labels, 2)
}

pub fn il_sources(learners: usize, seed: u64, batch_train: usize, batch_val: usize) -> DataSources {
    let mut src = DataSources::new();
    for k in 1..=learners {
        let angle = (k - 1) as f64 * std::f64::consts::PI / 5.0;
        src.insert(
            &train_set(k),
            rotated_blobs(24, seed + 10 * k as u64, angle, 0.5),
            batch_train,
        );
        src.insert(
            &val_set(k),
            rotated_blobs(24, seed + 10 * k as u64 + 5, angle, 0.5),
            batch_val,
        );
    }
    src
}

/// Compact K=2, M=2 setup with a reduced op menu to stay under 100 params.
pub fn small_setup(seed: u64) -> (IlSetup, DataSources) {
    let shape = IlShape {
        dim: 2,
        classes: 2,
        mixed_layers: 1,
        ops: vec![OpKind::Identity, OpKind::Zero, OpKind::Linear, OpKind::LinearTanh],
    };
    let config = IlConfig {
        learners: 2,
        rounds: 2,
        lambda: 1.0,
        eta: 0.05,
        batch_train: 8,
        batch_val: 8,
        seed,
    };
    let sources = il_sources(config.learners, seed, config.batch_train, config.batch_val);
    let setup = IlSetup::new(shape, config, seed).unwrap();
    (setup, sources)
}
