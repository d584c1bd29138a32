use crate::arch::DiscreteArch;
use crate::model::{ModelGraph, ModelParams, MixedSpec};
use crate::{NasError, Result};
use tensor_ad::{backward_grad, bind, Bindings, Tensor};

/// Outcome of discrete-architecture training.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub final_train_loss: f64,
    pub test_accuracy: f64,
    pub weights: Vec<(String, Tensor)>,
}

/// Fraction of rows whose argmax logit matches the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.cols();
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    hits as f64 / labels.len().max(1) as f64
}

/// Train the discretized model from scratch with full-batch gradient
/// descent and report accuracy on the test split. Deterministic per seed.
#[allow(clippy::too_many_arguments)]
pub fn train_discrete(
    spec: &MixedSpec,
    arch: &DiscreteArch,
    train_x: &Tensor,
    train_y: &Tensor,
    test_x: &Tensor,
    test_labels: &[usize],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainReport> {
    let params = ModelParams::init(spec, "arch", "w", seed);
    let mg = ModelGraph::discrete(arch, "w", "x", "y");

    // Only the discrete model's own weights participate.
    let used: Vec<(String, Tensor)> = params
        .weights
        .into_iter()
        .filter(|(name, _)| mg.graph.has_leaf(name))
        .collect();
    let names: Vec<String> = used.iter().map(|(n, _)| n.clone()).collect();

    let mut bindings: Bindings = bind([("x", train_x.clone()), ("y", train_y.clone())]);
    for (k, v) in &used {
        bindings.insert(k.clone(), v.clone());
    }

    let mut last_loss = f64::NAN;
    for epoch in 0..epochs {
        let grads = backward_grad(&mg.graph, &bindings, &names)
            .map_err(|_| NasError::NonFiniteLoss(epoch))?;
        for name in &names {
            let g = grads.expect(name);
            let t = bindings.get_mut(name).expect("bound");
            t.axpy(-lr, g)?;
        }
        last_loss = tensor_ad::forward_eval(&mg.graph, &bindings)?;
        if !last_loss.is_finite() {
            return Err(NasError::NonFiniteLoss(epoch));
        }
    }
    if epochs == 0 {
        last_loss = tensor_ad::forward_eval(&mg.graph, &bindings)?;
    }

    let mut test_bindings = bindings.clone();
    test_bindings.insert("x".into(), test_x.clone());
    // Dummy one-hot targets: only the logits node is read.
    test_bindings.insert("y".into(), {
        let mut y = Tensor::zeros(&[test_labels.len(), spec.classes]);
        for (i, &l) in test_labels.iter().enumerate() {
            y.data_mut()[i * spec.classes + l] = 1.0;
        }
        y
    });
    let logits = mg.eval_logits(&test_bindings)?;
    let acc = accuracy(&logits, test_labels);

    let weights = names
        .iter()
        .map(|n| (n.clone(), bindings[n].clone()))
        .collect();
    Ok(TrainReport {
        final_train_loss: last_loss,
        test_accuracy: acc,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::OpKind;
    use tensor_ad::{seeded_init, InitScheme};

    fn separable_blobs(n_per: usize, seed: u64) -> (Tensor, Tensor, Vec<usize>) {
        let noise = seeded_init(&[n_per * 2, 2], InitScheme::Normal { mean: 0.0, std: 0.4 }, seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per * 2 {
            let class = i % 2;
            let cx = if class == 0 { -2.0 } else { 2.0 };
            x.push(cx + noise.at2(i, 0));
            x.push(noise.at2(i, 1));
            y.extend_from_slice(if class == 0 { &[1.0, 0.0] } else { &[0.0, 1.0] });
            labels.push(class);
        }
        (
            Tensor::new(vec![n_per * 2, 2], x).unwrap(),
            Tensor::new(vec![n_per * 2, 2], y).unwrap(),
            labels,
        )
    }

    #[test]
    fn zero_epochs_is_chance_level() {
        // Structureless balanced data: any fixed classifier sits at chance.
        let spec = MixedSpec::new(2, 2, 1);
        let arch = DiscreteArch { choices: vec![OpKind::Linear] };
        let n = 200;
        let x = seeded_init(&[n, 2], InitScheme::Normal { mean: 0.0, std: 1.0 }, 5);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut y = Tensor::zeros(&[n, 2]);
        for (i, &l) in labels.iter().enumerate() {
            y.data_mut()[i * 2 + l] = 1.0;
        }
        let report =
            train_discrete(&spec, &arch, &x, &y, &x, &labels, 0, 0.1, 7).unwrap();
        assert!(
            (report.test_accuracy - 0.5).abs() <= 0.15,
            "accuracy {}",
            report.test_accuracy
        );
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let spec = MixedSpec::new(2, 2, 1);
        let arch = DiscreteArch { choices: vec![OpKind::Linear] };
        let (x, y, labels) = separable_blobs(50, 6);
        let (tx, ty, tlabels) = separable_blobs(50, 7);
        let report =
            train_discrete(&spec, &arch, &x, &y, &tx, &tlabels, 200, 0.2, 8).unwrap();
        let _ = ty;
        assert!(
            report.test_accuracy >= 0.95,
            "accuracy {}",
            report.test_accuracy
        );
    }

    #[test]
    fn same_seed_same_accuracy() {
        let spec = MixedSpec::new(2, 2, 2);
        let arch = DiscreteArch {
            choices: vec![OpKind::LinearTanh, OpKind::Identity],
        };
        let (x, y, labels) = separable_blobs(30, 9);
        let a = train_discrete(&spec, &arch, &x, &y, &x, &labels, 50, 0.1, 4).unwrap();
        let b = train_discrete(&spec, &arch, &x, &y, &x, &labels, 50, 0.1, 4).unwrap();
        assert_eq!(a.test_accuracy, b.test_accuracy);
        assert_eq!(a.final_train_loss.to_bits(), b.final_train_loss.to_bits());
    }
}
