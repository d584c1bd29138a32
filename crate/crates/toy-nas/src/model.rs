use crate::arch::{DiscreteArch, OpKind};
use crate::Result;
use tensor_ad::{
    derive_seed, evaluate, seeded_init, Bindings, Graph, GraphBuilder, InitScheme, NodeId, Tensor,
};

/// The default candidate menu: the two weight-free special ops plus four
/// linear variants.
pub const STANDARD_OPS: [OpKind; 6] = [
    OpKind::Identity,
    OpKind::Zero,
    OpKind::Linear,
    OpKind::LinearTanh,
    OpKind::LinearRelu,
    OpKind::LinearSigmoid,
];

/// Shape of a mixed model: a stack of width-preserving mixed layers
/// followed by a linear classifier head. The head belongs to the weight
/// owner, not to the architecture.
#[derive(Debug, Clone)]
pub struct MixedSpec {
    pub input_dim: usize,
    pub classes: usize,
    /// Candidate op menu per layer.
    pub layer_ops: Vec<Vec<OpKind>>,
}

impl MixedSpec {
    pub fn new(input_dim: usize, classes: usize, layers: usize) -> Self {
        MixedSpec {
            input_dim,
            classes,
            layer_ops: vec![STANDARD_OPS.to_vec(); layers],
        }
    }

    pub fn layers(&self) -> usize {
        self.layer_ops.len()
    }

    /// Number of architecture logits.
    pub fn arch_param_count(&self) -> usize {
        self.layer_ops.iter().map(|ops| ops.len()).sum()
    }

    /// Number of weight values (all candidate ops plus the head).
    pub fn weight_param_count(&self) -> usize {
        let d = self.input_dim;
        let per_op = d * d + d;
        let ops: usize = self
            .layer_ops
            .iter()
            .map(|menu| menu.iter().filter(|o| o.has_weights()).count())
            .sum();
        ops * per_op + d * self.classes + self.classes
    }
}

pub fn arch_leaf(prefix: &str, layer: usize) -> String {
    format!("{prefix}.l{layer}")
}

pub fn weight_leaf(prefix: &str, layer: usize, op: OpKind) -> String {
    format!("{prefix}.l{layer}.{}.w", op.slug())
}

pub fn bias_leaf(prefix: &str, layer: usize, op: OpKind) -> String {
    format!("{prefix}.l{layer}.{}.b", op.slug())
}

pub fn head_weight_leaf(prefix: &str) -> String {
    format!("{prefix}.head.w")
}

pub fn head_bias_leaf(prefix: &str) -> String {
    format!("{prefix}.head.b")
}

/// Named parameter tensors for one mixed model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Architecture logits, one tensor per layer.
    pub arch: Vec<(String, Tensor)>,
    /// Candidate-op weights plus head, in deterministic order.
    pub weights: Vec<(String, Tensor)>,
}

/// Architecture logits near zero (uniform mixture) with a small
/// symmetry-breaking jitter, one tensor per layer.
pub fn arch_logits_init(spec: &MixedSpec, arch_prefix: &str, seed: u64) -> Vec<(String, Tensor)> {
    spec.layer_ops
        .iter()
        .enumerate()
        .map(|(i, menu)| {
            let name = arch_leaf(arch_prefix, i);
            let t = seeded_init(
                &[menu.len()],
                InitScheme::Normal { mean: 0.0, std: 1e-3 },
                derive_seed(seed, &name, 0),
            );
            (name, t)
        })
        .collect()
}

/// Candidate-op weights for the layer stack (no head).
pub fn encoder_weights_init(
    spec: &MixedSpec,
    weight_prefix: &str,
    seed: u64,
) -> Vec<(String, Tensor)> {
    let d = spec.input_dim;
    let mut weights = Vec::new();
    for (i, menu) in spec.layer_ops.iter().enumerate() {
        for &op in menu.iter().filter(|o| o.has_weights()) {
            let wname = weight_leaf(weight_prefix, i, op);
            let w = seeded_init(
                &[d, d],
                InitScheme::Normal { mean: 0.0, std: 0.5 },
                derive_seed(seed, &wname, 1),
            );
            weights.push((wname, w));
            let bname = bias_leaf(weight_prefix, i, op);
            weights.push((bname, Tensor::zeros(&[d])));
        }
    }
    weights
}

impl ModelParams {
    /// Deterministic seeded initialization of logits, op weights, and head.
    pub fn init(spec: &MixedSpec, arch_prefix: &str, weight_prefix: &str, seed: u64) -> Self {
        let d = spec.input_dim;
        let arch = arch_logits_init(spec, arch_prefix, seed);
        let mut weights = encoder_weights_init(spec, weight_prefix, seed);
        let hw = head_weight_leaf(weight_prefix);
        weights.push((
            hw.clone(),
            seeded_init(
                &[d, spec.classes],
                InitScheme::Normal { mean: 0.0, std: 0.5 },
                derive_seed(seed, &hw, 2),
            ),
        ));
        weights.push((head_bias_leaf(weight_prefix), Tensor::zeros(&[spec.classes])));
        ModelParams { arch, weights }
    }

    pub fn bind_into(&self, bindings: &mut Bindings) {
        for (k, v) in self.arch.iter().chain(&self.weights) {
            bindings.insert(k.clone(), v.clone());
        }
    }
}

fn append_op(
    gb: &mut GraphBuilder,
    op: OpKind,
    weight_prefix: &str,
    layer: usize,
    h: NodeId,
) -> Option<NodeId> {
    match op {
        OpKind::Identity => Some(h),
        OpKind::Zero => None,
        _ => {
            let w = gb.leaf(&weight_leaf(weight_prefix, layer, op));
            let b = gb.leaf(&bias_leaf(weight_prefix, layer, op));
            let z = gb.matmul(h, w);
            let z = gb.add_row(z, b);
            Some(match op {
                OpKind::Linear => z,
                OpKind::LinearTanh => gb.tanh(z),
                OpKind::LinearRelu => gb.relu(z),
                OpKind::LinearSigmoid => gb.sigmoid(z),
                _ => unreachable!(),
            })
        }
    }
}

/// Append the softmax-mixture layer stack (no head) and return the final
/// hidden node (`[batch, dim]`). Each layer computes
/// `sum_o softmax(a)_o * op_o(h)`; the zero op's term is dropped since it
/// contributes nothing (its logit still shapes the softmax).
pub fn mixed_hidden(
    gb: &mut GraphBuilder,
    spec: &MixedSpec,
    arch_prefix: &str,
    weight_prefix: &str,
    input: NodeId,
) -> NodeId {
    let mut h = input;
    for (i, menu) in spec.layer_ops.iter().enumerate() {
        let a = gb.leaf(&arch_leaf(arch_prefix, i));
        let coeffs = gb.softmax(a);
        let mut acc: Option<NodeId> = None;
        for (o, &op) in menu.iter().enumerate() {
            let Some(out) = append_op(gb, op, weight_prefix, i, h) else {
                continue;
            };
            let c = gb.index(coeffs, o);
            let term = gb.scale_by(out, c);
            acc = Some(match acc {
                Some(prev) => gb.add(prev, term),
                None => term,
            });
        }
        // A menu of only zero ops collapses the layer to zero output;
        // represent that as 0 * h to keep shapes flowing.
        h = acc.unwrap_or_else(|| gb.scale(h, 0.0));
    }
    h
}

/// Layer stack followed by the linear classifier head: logits
/// (`[batch, classes]`).
pub fn mixed_logits(
    gb: &mut GraphBuilder,
    spec: &MixedSpec,
    arch_prefix: &str,
    weight_prefix: &str,
    input: NodeId,
) -> NodeId {
    let h = mixed_hidden(gb, spec, arch_prefix, weight_prefix, input);
    let hw = gb.leaf(&head_weight_leaf(weight_prefix));
    let hb = gb.leaf(&head_bias_leaf(weight_prefix));
    let z = gb.matmul(h, hw);
    gb.add_row(z, hb)
}

/// Append the forward pass of a discretized architecture (one fixed op per
/// layer) and return the logits node.
pub fn discrete_logits(
    gb: &mut GraphBuilder,
    arch: &DiscreteArch,
    weight_prefix: &str,
    input: NodeId,
) -> NodeId {
    let mut h = input;
    for (i, &op) in arch.choices.iter().enumerate() {
        h = match append_op(gb, op, weight_prefix, i, h) {
            Some(out) => out,
            None => gb.scale(h, 0.0),
        };
    }
    let hw = gb.leaf(&head_weight_leaf(weight_prefix));
    let hb = gb.leaf(&head_bias_leaf(weight_prefix));
    let z = gb.matmul(h, hw);
    gb.add_row(z, hb)
}

/// A graph whose scalar output is the mean cross-entropy of the model on
/// leaves `x` / `y`, with the logits node kept addressable.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub graph: Graph,
    pub logits: NodeId,
    pub x_leaf: String,
    pub y_leaf: String,
}

impl ModelGraph {
    pub fn mixed(spec: &MixedSpec, arch_prefix: &str, weight_prefix: &str, x: &str, y: &str) -> Self {
        let mut gb = GraphBuilder::new();
        let input = gb.leaf(x);
        let logits = mixed_logits(&mut gb, spec, arch_prefix, weight_prefix, input);
        let targets = gb.leaf(y);
        let ce = gb.cross_entropy_logits(logits, targets);
        let loss = gb.mean(ce);
        ModelGraph {
            graph: gb.finish(loss).expect("valid graph"),
            logits,
            x_leaf: x.to_string(),
            y_leaf: y.to_string(),
        }
    }

    pub fn discrete(arch: &DiscreteArch, weight_prefix: &str, x: &str, y: &str) -> Self {
        let mut gb = GraphBuilder::new();
        let input = gb.leaf(x);
        let logits = discrete_logits(&mut gb, arch, weight_prefix, input);
        let targets = gb.leaf(y);
        let ce = gb.cross_entropy_logits(logits, targets);
        let loss = gb.mean(ce);
        ModelGraph {
            graph: gb.finish(loss).expect("valid graph"),
            logits,
            x_leaf: x.to_string(),
            y_leaf: y.to_string(),
        }
    }

    /// Forward pass returning the logits tensor.
    pub fn eval_logits(&self, bindings: &Bindings) -> Result<Tensor> {
        let eval = evaluate(&self.graph, bindings)?;
        Ok(eval.tensor(self.logits).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tensor_ad::{bind, forward_eval};

    /// logits all equal over {identity, zero}: output is input / 2.
    #[test]
    fn uniform_identity_zero_mixture_halves_input() {
        let spec = MixedSpec {
            input_dim: 2,
            classes: 2,
            layer_ops: vec![vec![OpKind::Identity, OpKind::Zero]],
        };
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let mixed = {
            let mut h = x;
            let a = gb.leaf("arch.l0");
            let coeffs = gb.softmax(a);
            let c = gb.index(coeffs, 0);
            h = gb.scale_by(h, c);
            h
        };
        let out = gb.sum(mixed);
        let g = gb.finish(out).unwrap();
        let b = bind([
            ("x", Tensor::new(vec![1, 2], vec![4.0, -2.0]).unwrap()),
            ("arch.l0", Tensor::from_vec(vec![0.7, 0.7])),
        ]);
        // Uniform softmax over two ops gives coefficient 1/2 on identity.
        let v = forward_eval(&g, &b).unwrap();
        assert!((v - (4.0 - 2.0) / 2.0).abs() < 1e-12);
        let _ = spec; // shape doc only
    }

    /// A single dominating logit saturates the mixture onto that op.
    #[test]
    fn softmax_saturation_selects_single_op() {
        let spec = MixedSpec::new(2, 2, 1);
        let params = ModelParams::init(&spec, "arch", "w", 3);
        let mg = ModelGraph::mixed(&spec, "arch", "w", "x", "y");

        let x = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.3, -0.7, 1.1]).unwrap();
        let y = Tensor::new(vec![3, 2], vec![1., 0., 0., 1., 1., 0.]).unwrap();

        let mut b = bind([("x", x.clone()), ("y", y.clone())]);
        params.bind_into(&mut b);
        // Saturate layer 0 on linear-tanh (index 3 in the standard menu).
        let mut logits = vec![0.0; 6];
        logits[3] = 1e6;
        b.insert("arch.l0".into(), Tensor::from_vec(logits));
        let mixed = mg.eval_logits(&b).unwrap();

        let arch = DiscreteArch { choices: vec![OpKind::LinearTanh] };
        let dg = ModelGraph::discrete(&arch, "w", "x", "y");
        let pure = dg.eval_logits(&b).unwrap();

        for (a, p) in mixed.data().iter().zip(pure.data()) {
            assert!((a - p).abs() < 1e-9, "mixed {a} vs pure {p}");
        }
    }

    /// Straight-line reimplementation of a random 2-layer mixed model.
    #[test]
    fn matches_straight_line_oracle() {
        let spec = MixedSpec::new(2, 2, 2);
        let params = ModelParams::init(&spec, "arch", "w", 11);
        let mg = ModelGraph::mixed(&spec, "arch", "w", "x", "y");

        let x = Tensor::new(vec![2, 2], vec![0.3, -0.8, 1.2, 0.4]).unwrap();
        let y = Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
        let mut b = bind([("x", x.clone()), ("y", y)]);
        params.bind_into(&mut b);
        let got = mg.eval_logits(&b).unwrap();

        // Independent evaluation with plain vector arithmetic.
        let softmax = |v: &[f64]| {
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let apply_linear = |w: &Tensor, bias: &Tensor, h: &[f64]| -> Vec<f64> {
            let d = bias.len();
            let mut out = vec![0.0; d];
            for j in 0..d {
                let mut acc = bias.data()[j];
                for (i, &hv) in h.iter().enumerate() {
                    acc += hv * w.data()[i * d + j];
                }
                out[j] = acc;
            }
            out
        };
        for row in 0..2 {
            let mut h = vec![x.at2(row, 0), x.at2(row, 1)];
            for layer in 0..2 {
                let a = &b[&format!("arch.l{layer}")];
                let coeffs = softmax(a.data());
                let mut next = vec![0.0; 2];
                for (o, &op) in STANDARD_OPS.iter().enumerate() {
                    let contrib: Vec<f64> = match op {
                        OpKind::Identity => h.clone(),
                        OpKind::Zero => vec![0.0, 0.0],
                        _ => {
                            let w = &b[&weight_leaf("w", layer, op)];
                            let bias = &b[&bias_leaf("w", layer, op)];
                            let z = apply_linear(w, bias, &h);
                            match op {
                                OpKind::Linear => z,
                                OpKind::LinearTanh => z.iter().map(|v| v.tanh()).collect(),
                                OpKind::LinearRelu => {
                                    z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect()
                                }
                                OpKind::LinearSigmoid => {
                                    z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
                                }
                                _ => unreachable!(),
                            }
                        }
                    };
                    for (nj, cj) in next.iter_mut().zip(&contrib) {
                        *nj += coeffs[o] * cj;
                    }
                }
                h = next;
            }
            let hw = &b[&head_weight_leaf("w")];
            let hb = &b[&head_bias_leaf("w")];
            let logits = apply_linear(hw, hb, &h);
            for (j, &v) in logits.iter().enumerate() {
                assert!(
                    (v - got.at2(row, j)).abs() < 1e-12,
                    "row {row} class {j}: {v} vs {}",
                    got.at2(row, j)
                );
            }
        }
    }
}
