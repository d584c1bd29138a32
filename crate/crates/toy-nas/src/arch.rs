use crate::{NasError, Result};
use std::fmt;
use tensor_ad::Tensor;

/// Candidate operation kinds. `identity` and `zero` carry no weights; the
/// rest are a weight matrix plus bias, optionally followed by a pointwise
/// nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Identity,
    Zero,
    Linear,
    LinearTanh,
    LinearRelu,
    LinearSigmoid,
}

impl OpKind {
    pub fn has_weights(self) -> bool {
        !matches!(self, OpKind::Identity | OpKind::Zero)
    }

    pub fn slug(self) -> &'static str {
        match self {
            OpKind::Identity => "identity",
            OpKind::Zero => "zero",
            OpKind::Linear => "linear",
            OpKind::LinearTanh => "linear-tanh",
            OpKind::LinearRelu => "linear-relu",
            OpKind::LinearSigmoid => "linear-sigmoid",
        }
    }

    pub fn from_slug(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => OpKind::Identity,
            "zero" => OpKind::Zero,
            "linear" => OpKind::Linear,
            "linear-tanh" => OpKind::LinearTanh,
            "linear-relu" => OpKind::LinearRelu,
            "linear-sigmoid" => OpKind::LinearSigmoid,
            other => return Err(NasError::UnknownOp(other.to_string())),
        })
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// One chosen op per layer; the argmax of the layer's logits, ties broken
/// by lowest op index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteArch {
    pub choices: Vec<OpKind>,
}

impl DiscreteArch {
    /// Per-layer argmax of the given logit vectors over the given op menus.
    pub fn derive(layer_ops: &[Vec<OpKind>], logits: &[Tensor]) -> Self {
        assert_eq!(layer_ops.len(), logits.len());
        let mut choices = Vec::with_capacity(logits.len());
        for (ops, a) in layer_ops.iter().zip(logits) {
            let mut best = 0;
            for (i, &v) in a.data().iter().enumerate() {
                if v > a.data()[best] {
                    best = i;
                }
            }
            choices.push(ops[best]);
        }
        DiscreteArch { choices }
    }

    /// Plain-text line format: one line per layer, `layer=<i> op=<kind>`.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (i, op) in self.choices.iter().enumerate() {
            out.push_str(&format!("layer={i} op={op}\n"));
        }
        out
    }
}

/// Parse the `layer=<i> op=<kind>` line format.
pub fn parse_arch(text: &str) -> Result<DiscreteArch> {
    let mut choices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut layer: Option<usize> = None;
        let mut op: Option<OpKind> = None;
        for tok in line.split_whitespace() {
            if let Some(v) = tok.strip_prefix("layer=") {
                layer = v.parse().ok();
            } else if let Some(v) = tok.strip_prefix("op=") {
                op = Some(OpKind::from_slug(v)?);
            }
        }
        match (layer, op) {
            (Some(i), Some(k)) if i == choices.len() => choices.push(k),
            _ => return Err(NasError::MalformedLine(format!("{}: {line}", lineno + 1))),
        }
    }
    Ok(DiscreteArch { choices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::STANDARD_OPS;

    #[test]
    fn argmax_picks_largest() {
        let ops = vec![STANDARD_OPS.to_vec()];
        let logits = vec![Tensor::from_vec(vec![0.1, 0.9, 0.3, 0.0, 0.0, 0.0])];
        let arch = DiscreteArch::derive(&ops, &logits);
        assert_eq!(arch.choices[0], STANDARD_OPS[1]);
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        let ops = vec![vec![OpKind::Identity, OpKind::Zero]];
        let logits = vec![Tensor::from_vec(vec![0.5, 0.5])];
        let arch = DiscreteArch::derive(&ops, &logits);
        assert_eq!(arch.choices[0], OpKind::Identity);
    }

    #[test]
    fn shift_invariance() {
        let ops = vec![STANDARD_OPS.to_vec()];
        let base = Tensor::from_vec(vec![0.3, -0.2, 0.8, 0.1, -0.5, 0.0]);
        let shifted = base.map(|v| v + 17.25);
        let a = DiscreteArch::derive(&ops, &[base]);
        let b = DiscreteArch::derive(&ops, &[shifted]);
        assert_eq!(a, b);
    }

    #[test]
    fn line_format_round_trip() {
        let arch = DiscreteArch {
            choices: vec![OpKind::LinearTanh, OpKind::Identity, OpKind::Zero],
        };
        let text = arch.to_lines();
        assert!(text.contains("layer=0 op=linear-tanh"));
        let back = parse_arch(&text).unwrap();
        assert_eq!(back, arch);
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(parse_arch("layer=0 op=warp-drive\n").is_err());
        assert!(parse_arch("op=linear\n").is_err());
    }
}
