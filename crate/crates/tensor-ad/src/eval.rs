use crate::error::{AdError, Result};
use crate::graph::{Graph, Node, NodeId};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Leaf bindings for one evaluation.
pub type Bindings = BTreeMap<String, Tensor>;

/// Convenience constructor for small binding sets.
pub fn bind<I, S>(pairs: I) -> Bindings
where
    I: IntoIterator<Item = (S, Tensor)>,
    S: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v)).collect()
}

/// Gradients of the scalar output with respect to a set of leaves.
/// Every requested leaf has exactly one entry whose shape equals the
/// leaf's bound shape.
#[derive(Debug, Clone)]
pub struct GradMap {
    entries: BTreeMap<String, Tensor>,
}

impl GradMap {
    pub fn get(&self, leaf: &str) -> Option<&Tensor> {
        self.entries.get(leaf)
    }

    pub fn expect(&self, leaf: &str) -> &Tensor {
        self.entries
            .get(leaf)
            .unwrap_or_else(|| panic!("no gradient entry for leaf `{leaf}`"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn into_inner(self) -> BTreeMap<String, Tensor> {
        self.entries
    }
}

/// A completed forward pass: every node value, retained so callers can
/// read intermediate tensors (e.g. logits) as well as the scalar output.
#[derive(Debug)]
pub struct Evaluation {
    values: Vec<Tensor>,
    output: NodeId,
}

impl Evaluation {
    pub fn scalar(&self) -> f64 {
        self.values[self.output].data()[0]
    }

    pub fn tensor(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }
}

fn row_softmax(x: &Tensor) -> Result<Tensor> {
    let (rows, cols) = match x.rank() {
        1 => (1, x.len()),
        2 => (x.rows(), x.cols()),
        r => return Err(AdError::shape("softmax", format!("rank {r} unsupported"))),
    };
    if cols == 0 {
        return Err(AdError::shape("softmax", "empty axis"));
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &x.data()[i * cols..(i + 1) * cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - m).exp();
            out[i * cols + j] = e;
            z += e;
        }
        for j in 0..cols {
            out[i * cols + j] /= z;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn forward_node(node: &Node, vals: &[Tensor], bindings: &Bindings) -> Result<Tensor> {
    use Node::*;
    match node {
        Leaf(name) => bindings
            .get(name)
            .cloned()
            .ok_or_else(|| AdError::UnboundLeaf(name.clone())),
        Const(t) => Ok(t.clone()),
        Add(a, b) => vals[*a].add(&vals[*b]),
        Sub(a, b) => vals[*a].sub(&vals[*b]),
        Mul(a, b) => vals[*a].mul(&vals[*b]),
        Div(a, b) => vals[*a].zip(&vals[*b], |x, y| x / y),
        Neg(a) => Ok(vals[*a].scale(-1.0)),
        Scale(a, c) => Ok(vals[*a].scale(*c)),
        ScaleBy { tensor, scalar } => {
            let s = vals[*scalar].scalar_value()?;
            Ok(vals[*tensor].scale(s))
        }
        AddRow { matrix, row } => {
            let m = &vals[*matrix];
            let r = &vals[*row];
            if m.rank() != 2 || r.rank() != 1 || m.cols() != r.len() {
                return Err(AdError::shape(
                    "add_row",
                    format!("{:?} + {:?}", m.shape(), r.shape()),
                ));
            }
            let cols = m.cols();
            let data = m
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| v + r.data()[i % cols])
                .collect();
            Tensor::new(m.shape().to_vec(), data)
        }
        MatMul(a, b) => vals[*a].matmul(&vals[*b]),
        Tanh(a) => Ok(vals[*a].map(f64::tanh)),
        Relu(a) => Ok(vals[*a].map(|v| if v > 0.0 { v } else { 0.0 })),
        Sigmoid(a) => Ok(vals[*a].map(|v| 1.0 / (1.0 + (-v).exp()))),
        Softmax(a) => row_softmax(&vals[*a]),
        Index(a, i) => {
            let t = &vals[*a];
            if t.rank() != 1 || *i >= t.len() {
                return Err(AdError::shape(
                    "index",
                    format!("index {i} into shape {:?}", t.shape()),
                ));
            }
            Ok(Tensor::scalar(t.data()[*i]))
        }
        Flatten(a) => {
            let t = &vals[*a];
            Tensor::new(vec![t.len()], t.data().to_vec())
        }
        Sum(a) => Ok(Tensor::scalar(vals[*a].sum())),
        Mean(a) => {
            let t = &vals[*a];
            if t.is_empty() {
                return Err(AdError::shape("mean", "0-length reduction"));
            }
            Ok(Tensor::scalar(t.sum() / t.len() as f64))
        }
        SquaredNorm(a) => Ok(Tensor::scalar(
            vals[*a].data().iter().map(|v| v * v).sum(),
        )),
        CrossEntropyLogits { logits, targets } => {
            let z = &vals[*logits];
            let t = &vals[*targets];
            if z.rank() != 2 || z.shape() != t.shape() {
                return Err(AdError::shape(
                    "cross_entropy_logits",
                    format!("{:?} vs {:?}", z.shape(), t.shape()),
                ));
            }
            let (n, k) = (z.rows(), z.cols());
            let mut out = vec![0.0; n];
            for i in 0..n {
                let row = &z.data()[i * k..(i + 1) * k];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
                let dot: f64 = row
                    .iter()
                    .zip(&t.data()[i * k..(i + 1) * k])
                    .map(|(&a, &b)| a * b)
                    .sum();
                out[i] = lse - dot;
            }
            Tensor::new(vec![n], out)
        }
    }
}

fn run_forward(graph: &Graph, bindings: &Bindings) -> Result<Vec<Tensor>> {
    let mut vals: Vec<Tensor> = Vec::with_capacity(graph.nodes().len());
    for (id, node) in graph.nodes().iter().enumerate() {
        let v = forward_node(node, &vals, bindings)?;
        if !v.all_finite() {
            return Err(AdError::non_finite(format!("node {id} ({})", node.op_name())));
        }
        vals.push(v);
    }
    Ok(vals)
}

/// Evaluate the graph and keep all intermediate values.
pub fn evaluate(graph: &Graph, bindings: &Bindings) -> Result<Evaluation> {
    let values = run_forward(graph, bindings)?;
    let out = &values[graph.output()];
    if !out.is_scalar() {
        return Err(AdError::shape(
            "evaluate",
            format!("output must be scalar, got shape {:?}", out.shape()),
        ));
    }
    Ok(Evaluation { values, output: graph.output() })
}

/// Evaluate the graph's scalar output. Deterministic for identical bindings.
pub fn forward_eval(graph: &Graph, bindings: &Bindings) -> Result<f64> {
    Ok(evaluate(graph, bindings)?.scalar())
}

/// Exact reverse-mode gradients of the scalar output with respect to each
/// leaf in `wrt`. Leaves absent from the graph (but present in the
/// bindings) get zero gradients of the bound shape.
pub fn backward_grad<S: AsRef<str>>(
    graph: &Graph,
    bindings: &Bindings,
    wrt: &[S],
) -> Result<GradMap> {
    let vals = run_forward(graph, bindings)?;
    let out_val = &vals[graph.output()];
    if !out_val.is_scalar() {
        return Err(AdError::shape(
            "backward_grad",
            format!("output must be scalar, got shape {:?}", out_val.shape()),
        ));
    }

    let n = graph.nodes().len();
    let mut adj: Vec<Option<Tensor>> = vec![None; n];
    adj[graph.output()] = Some({
        let mut seed = Tensor::zeros(out_val.shape());
        seed.data_mut()[0] = 1.0;
        seed
    });

    let accum = |slot: &mut Option<Tensor>, delta: Tensor| -> Result<()> {
        match slot {
            Some(t) => t.axpy(1.0, &delta),
            None => {
                *slot = Some(delta);
                Ok(())
            }
        }
    };

    for id in (0..n).rev() {
        let Some(dy) = adj[id].take() else { continue };
        use Node::*;
        match &graph.nodes()[id] {
            Leaf(_) | Const(_) => {
                // Leaves keep their accumulated adjoint for collection below.
                adj[id] = Some(dy);
                continue;
            }
            Add(a, b) => {
                accum(&mut adj[*a], dy.clone())?;
                accum(&mut adj[*b], dy)?;
            }
            Sub(a, b) => {
                accum(&mut adj[*a], dy.clone())?;
                accum(&mut adj[*b], dy.scale(-1.0))?;
            }
            Mul(a, b) => {
                accum(&mut adj[*a], dy.mul(&vals[*b])?)?;
                accum(&mut adj[*b], dy.mul(&vals[*a])?)?;
            }
            Div(a, b) => {
                let da = dy.zip(&vals[*b], |g, bv| g / bv)?;
                let y = &vals[id];
                let db_part = dy.mul(y)?;
                let db = db_part.zip(&vals[*b], |g, bv| -g / bv)?;
                accum(&mut adj[*a], da)?;
                accum(&mut adj[*b], db)?;
            }
            Neg(a) => accum(&mut adj[*a], dy.scale(-1.0))?,
            Scale(a, c) => accum(&mut adj[*a], dy.scale(*c))?,
            ScaleBy { tensor, scalar } => {
                let s = vals[*scalar].data()[0];
                accum(&mut adj[*tensor], dy.scale(s))?;
                let ds = vals[*tensor].dot(&dy)?;
                let mut g = Tensor::zeros(vals[*scalar].shape());
                g.data_mut()[0] = ds;
                accum(&mut adj[*scalar], g)?;
            }
            AddRow { matrix, row } => {
                let cols = vals[*matrix].cols();
                let mut drow = Tensor::zeros(vals[*row].shape());
                for (i, &g) in dy.data().iter().enumerate() {
                    drow.data_mut()[i % cols] += g;
                }
                accum(&mut adj[*matrix], dy)?;
                accum(&mut adj[*row], drow)?;
            }
            MatMul(a, b) => {
                let da = dy.matmul(&vals[*b].transpose()?)?;
                let db = vals[*a].transpose()?.matmul(&dy)?;
                accum(&mut adj[*a], da)?;
                accum(&mut adj[*b], db)?;
            }
            Tanh(a) => {
                let g = dy.zip(&vals[id], |g, y| g * (1.0 - y * y))?;
                accum(&mut adj[*a], g)?;
            }
            Relu(a) => {
                // Subgradient at exactly 0 is defined as 0.
                let g = dy.zip(&vals[*a], |g, x| if x > 0.0 { g } else { 0.0 })?;
                accum(&mut adj[*a], g)?;
            }
            Sigmoid(a) => {
                let g = dy.zip(&vals[id], |g, y| g * y * (1.0 - y))?;
                accum(&mut adj[*a], g)?;
            }
            Softmax(a) => {
                let y = &vals[id];
                let (rows, cols) = match y.rank() {
                    1 => (1, y.len()),
                    _ => (y.rows(), y.cols()),
                };
                let mut g = Tensor::zeros(y.shape());
                for i in 0..rows {
                    let ys = &y.data()[i * cols..(i + 1) * cols];
                    let dys = &dy.data()[i * cols..(i + 1) * cols];
                    let inner: f64 = ys.iter().zip(dys).map(|(&yv, &gv)| yv * gv).sum();
                    for j in 0..cols {
                        g.data_mut()[i * cols + j] = ys[j] * (dys[j] - inner);
                    }
                }
                accum(&mut adj[*a], g)?;
            }
            Index(a, i) => {
                let mut g = Tensor::zeros(vals[*a].shape());
                g.data_mut()[*i] = dy.data()[0];
                accum(&mut adj[*a], g)?;
            }
            Flatten(a) => {
                let g = Tensor::new(vals[*a].shape().to_vec(), dy.data().to_vec())?;
                accum(&mut adj[*a], g)?;
            }
            Sum(a) => {
                let g = Tensor::zeros(vals[*a].shape()).map(|_| dy.data()[0]);
                accum(&mut adj[*a], g)?;
            }
            Mean(a) => {
                let c = dy.data()[0] / vals[*a].len() as f64;
                let g = Tensor::zeros(vals[*a].shape()).map(|_| c);
                accum(&mut adj[*a], g)?;
            }
            SquaredNorm(a) => {
                let g = vals[*a].scale(2.0 * dy.data()[0]);
                accum(&mut adj[*a], g)?;
            }
            CrossEntropyLogits { logits, targets } => {
                let z = &vals[*logits];
                let t = &vals[*targets];
                let (n_rows, k) = (z.rows(), z.cols());
                let sm = row_softmax(z)?;
                let mut dz = Tensor::zeros(z.shape());
                let mut dt = Tensor::zeros(t.shape());
                for i in 0..n_rows {
                    let g = dy.data()[i];
                    for j in 0..k {
                        let idx = i * k + j;
                        dz.data_mut()[idx] = g * (sm.data()[idx] - t.data()[idx]);
                        dt.data_mut()[idx] = -g * z.data()[idx];
                    }
                }
                accum(&mut adj[*logits], dz)?;
                accum(&mut adj[*targets], dt)?;
            }
        }
    }

    let mut entries = BTreeMap::new();
    for name in wrt {
        let name = name.as_ref();
        let grad = match graph.leaves().get(name) {
            Some(&id) => match adj[id].take() {
                Some(g) => g,
                None => Tensor::zeros(vals[id].shape()),
            },
            None => {
                // Leaf not referenced by this graph: gradient is zero with
                // the bound shape.
                let bound = bindings
                    .get(name)
                    .ok_or_else(|| AdError::UnknownLeaf(name.to_string()))?;
                Tensor::zeros(bound.shape())
            }
        };
        if !grad.all_finite() {
            return Err(AdError::non_finite(format!("gradient of leaf `{name}`")));
        }
        entries.insert(name.to_string(), grad);
    }
    Ok(GradMap { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn sum_of_squares() -> Graph {
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let s = gb.squared_norm(x);
        gb.finish(s).unwrap()
    }

    #[test]
    fn forward_sum_of_squares() {
        let g = sum_of_squares();
        let b = bind([("x", Tensor::from_vec(vec![3.0, 4.0]))]);
        assert_eq!(forward_eval(&g, &b).unwrap(), 25.0);
    }

    #[test]
    fn forward_cross_entropy_uniform() {
        let mut gb = GraphBuilder::new();
        let z = gb.leaf("z");
        let t = gb.leaf("t");
        let ce = gb.cross_entropy_logits(z, t);
        let out = gb.mean(ce);
        let g = gb.finish(out).unwrap();
        let b = bind([
            ("z", Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap()),
            ("t", Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap()),
        ]);
        let v = forward_eval(&g, &b).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mean_of_empty_is_shape_error() {
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let m = gb.mean(x);
        let g = gb.finish(m).unwrap();
        let b = bind([("x", Tensor::from_vec(vec![]))]);
        match forward_eval(&g, &b) {
            Err(AdError::ShapeMismatch { .. }) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn backward_square() {
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let y = gb.mul(x, x);
        let s = gb.sum(y);
        let g = gb.finish(s).unwrap();
        let b = bind([("x", Tensor::from_vec(vec![3.0]))]);
        let grads = backward_grad(&g, &b, &["x"]).unwrap();
        assert_eq!(grads.expect("x").data(), &[6.0]);
    }

    #[test]
    fn backward_constant_gives_zero() {
        let mut gb = GraphBuilder::new();
        let _ = gb.leaf("x");
        let c = gb.scalar_const(5.0);
        let s = gb.sum(c);
        let g = gb.finish(s).unwrap();
        let b = bind([("x", Tensor::from_vec(vec![1.0, 2.0]))]);
        let grads = backward_grad(&g, &b, &["x"]).unwrap();
        assert_eq!(grads.expect("x").data(), &[0.0, 0.0]);
        assert_eq!(grads.expect("x").shape(), &[2]);
    }

    #[test]
    fn deterministic_repeat() {
        let g = sum_of_squares();
        let b = bind([("x", Tensor::from_vec(vec![0.3, -1.7, 2.2]))]);
        let v1 = forward_eval(&g, &b).unwrap();
        let v2 = forward_eval(&g, &b).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
        let g1 = backward_grad(&g, &b, &["x"]).unwrap();
        let g2 = backward_grad(&g, &b, &["x"]).unwrap();
        for (a, b) in g1.expect("x").data().iter().zip(g2.expect("x").data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn unknown_leaf_errors() {
        let g = sum_of_squares();
        let b = bind([("x", Tensor::from_vec(vec![1.0]))]);
        assert!(matches!(
            backward_grad(&g, &b, &["nope"]),
            Err(AdError::UnknownLeaf(_))
        ));
    }

    #[test]
    fn non_finite_detected() {
        let mut gb = GraphBuilder::new();
        let x = gb.leaf("x");
        let y = gb.leaf("y");
        let d = gb.div(x, y);
        let s = gb.sum(d);
        let g = gb.finish(s).unwrap();
        let b = bind([
            ("x", Tensor::from_vec(vec![1.0])),
            ("y", Tensor::from_vec(vec![0.0])),
        ]);
        assert!(matches!(forward_eval(&g, &b), Err(AdError::NonFinite { .. })));
    }
}
